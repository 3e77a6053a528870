#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/meal.hpp"
#include "apsim/rng.hpp"
#include "apsim/units.hpp"

namespace apsim {

// Medtronic Virtual Patient parameter set. Insulin amounts are in microunits,
// concentrations in uU/mL, glucose in mg/dL, time in minutes.
struct MvpProfile {
    double c_i = 2010.0;     // insulin clearance (mL/min)
    double tau_1 = 49.0;     // subcutaneous transport time constant (min)
    double tau_2 = 47.0;     // plasma transport time constant (min)
    double v_g = 253.0;      // glucose distribution volume (dL)
    double p_2 = 0.0106;     // insulin-action delay rate (1/min)
    double egp = 1.33;       // endogenous glucose production (mg/dL/min)
    double gezi = 0.0022;    // glucose effectiveness at zero insulin (1/min)
    double s_i = 8.11e-4;    // insulin sensitivity (mL/uU/min)
    double tau_m = 40.0;     // meal absorption time constant (min)

    void validate() const {
        require_positive(c_i, "c_i");
        require_positive(tau_1, "tau_1");
        require_positive(tau_2, "tau_2");
        require_positive(v_g, "v_g");
        require_positive(p_2, "p_2");
        require_positive(egp, "egp");
        require_positive(gezi, "gezi");
        require_positive(s_i, "s_i");
        require_positive(tau_m, "tau_m");
    }
};

struct MvpState {
    double i_sc = 0.0;   // subcutaneous insulin (uU/mL)
    double i_p = 0.0;    // plasma insulin (uU/mL)
    double i_eff = 0.0;  // insulin effect (1/min)
    double bg = 120.0;   // blood glucose (mg/dL)
    MealQueue meals;

    void validate() const {
        require_nonneg(i_sc, "state.i_sc");
        require_nonneg(i_p, "state.i_p");
        require_nonneg(i_eff, "state.i_eff");
        require_nonneg(bg, "state.bg");
        for (const auto& m : meals) {
            require_nonneg(m.elapsed_min, "state.meal.elapsed_min");
            require_nonneg(m.carbs_mg, "state.meal.carbs_mg");
        }
    }
};

struct MvpDerivatives {
    double d_i_sc = 0.0;
    double d_i_p = 0.0;
    double d_i_eff = 0.0;
    double d_bg = 0.0;
};

// Right-hand side of the five-component MVP system: a three-compartment
// insulin cascade (subcutaneous -> plasma -> effect), glucose kinetics with
// endogenous production and zero-insulin effectiveness, and summed meal
// appearance. `insulin_dose_rate` is in uU/min.
inline MvpDerivatives mvp_derivatives(const MvpState& state, const MvpProfile& profile,
                                      double insulin_dose_rate) {
    profile.validate();
    state.validate();
    require_nonneg(insulin_dose_rate, "insulin_dose_rate");

    MvpDerivatives d;
    d.d_i_sc = -(state.i_sc - insulin_dose_rate / profile.c_i) / profile.tau_1;
    d.d_i_p = -(state.i_p - state.i_sc) / profile.tau_2;
    d.d_i_eff = -profile.p_2 * (state.i_eff - profile.s_i * state.i_p);

    const double ra = meal_appearance_total(state.meals, profile.tau_m, profile.v_g);
    d.d_bg = -(profile.gezi + state.i_eff) * state.bg + profile.egp + ra;
    return d;
}

inline constexpr double kMvpSubstepMin = 1.0;

// Explicit Euler advance by `dt` minutes with internal substeps of at most
// 1 minute. The dynamics cannot leave the nonnegative orthant but floating
// point near zero can; clamp after every substep.
inline MvpState mvp_step(MvpState state, const MvpProfile& profile,
                         double insulin_dose_rate, double dt) {
    require_finite(dt, "dt");
    if (dt <= 0.0) {
        throw ConfigError("dt must be > 0");
    }
    const int n = static_cast<int>(std::ceil(dt / kMvpSubstepMin));
    const double h = dt / n;
    for (int k = 0; k < n; ++k) {
        const MvpDerivatives d = mvp_derivatives(state, profile, insulin_dose_rate);
        state.i_sc = clamp_nonneg(state.i_sc + h * d.d_i_sc);
        state.i_p = clamp_nonneg(state.i_p + h * d.d_i_p);
        state.i_eff = clamp_nonneg(state.i_eff + h * d.d_i_eff);
        state.bg = clamp_nonneg(state.bg + h * d.d_bg);
        advance_meals(state.meals, h, profile.tau_m);
    }
    return state;
}

// Equilibrium glucose under a constant dose rate (uU/min): the cascade settles
// at i_sc = i_p = dose/c_i, i_eff = s_i*dose/c_i, so
//   bg* = egp / (gezi + s_i * dose / c_i).
inline double mvp_equilibrium_bg(const MvpProfile& profile, double insulin_dose_rate) {
    return profile.egp / (profile.gezi + profile.s_i * insulin_dose_rate / profile.c_i);
}

// Constant dose rate (uU/min) that holds the patient at `target_bg`. Returns 0
// when the target is at or above the zero-insulin asymptote egp/gezi.
inline double mvp_basal_dose_for_bg(const MvpProfile& profile, double target_bg) {
    require_positive(target_bg, "target_bg");
    const double needed = profile.egp / target_bg - profile.gezi;
    return clamp_nonneg(needed * profile.c_i / profile.s_i);
}

// State with the insulin cascade equilibrated to `basal_dose_rate` and glucose
// pinned at `bg0`; used to start experiments at a chosen glucose level.
inline MvpState mvp_init_state(const MvpProfile& profile, double bg0,
                               double basal_dose_rate) {
    require_nonneg(bg0, "initial_bg");
    require_nonneg(basal_dose_rate, "basal_dose_rate");
    MvpState s;
    s.i_sc = basal_dose_rate / profile.c_i;
    s.i_p = s.i_sc;
    s.i_eff = profile.s_i * s.i_p;
    s.bg = bg0;
    return s;
}

// Per-parameter sampling band: uniform within +/-30% of the nominal adult
// values above. The published cohorts behind this model do not ship their
// parameter tables, so the band is the documented stand-in.
inline constexpr double kCohortSpread = 0.30;

inline MvpProfile mvp_sample_profile(Rng& rng) {
    const MvpProfile nominal;
    auto draw = [&rng](double v) { return rng.uniform(v * (1.0 - kCohortSpread), v * (1.0 + kCohortSpread)); };
    MvpProfile p;
    p.c_i = draw(nominal.c_i);
    p.tau_1 = draw(nominal.tau_1);
    p.tau_2 = draw(nominal.tau_2);
    p.v_g = draw(nominal.v_g);
    p.p_2 = draw(nominal.p_2);
    p.egp = draw(nominal.egp);
    p.gezi = draw(nominal.gezi);
    p.s_i = draw(nominal.s_i);
    p.tau_m = draw(nominal.tau_m);
    p.validate();
    return p;
}

// Deterministic virtual cohort: same (n, seed) always yields the same list.
inline std::vector<MvpProfile> mvp_default_cohort(std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw ConfigError("cohort size must be >= 1");
    }
    Rng rng(seed);
    std::vector<MvpProfile> cohort;
    cohort.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cohort.push_back(mvp_sample_profile(rng));
    }
    return cohort;
}

} // namespace apsim
