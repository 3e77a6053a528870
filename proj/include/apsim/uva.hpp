#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/meal.hpp"
#include "apsim/rng.hpp"
#include "apsim/units.hpp"

namespace apsim {

// Reduced UVA-Padova parameter set. Glucose masses are per kg of body weight
// (mg/kg), insulin masses in pmol/kg, insulin concentrations in pmol/L.
//
// The glucose kinetics (k_1, k_2, kp_*, k_i, u_ii, v_g, g_pb) follow the
// published two-compartment form; the insulin-dependent utilization and the
// subcutaneous insulin chain that produce U_id and I(t) are closed with the
// standard minimal-model forms, with all closure parameters in the profile.
struct UvaProfile {
    double k_1 = 0.065;      // plasma -> tissue glucose rate (1/min)
    double k_2 = 0.079;      // tissue -> plasma glucose rate (1/min)
    double kp_1 = 4.3549;    // EGP at zero glucose and insulin (mg/kg/min)
    double kp_2 = 0.0021;    // EGP glucose suppression (1/min)
    double kp_3 = 0.009;     // EGP insulin suppression (mg/kg/min per pmol/L)
    double k_i = 0.0079;     // delayed insulin signal rate (1/min)
    double u_ii = 1.0;       // insulin-independent utilization (mg/kg/min)
    double v_g = 1.88;       // glucose distribution volume (dL/kg)
    double g_pb = 225.6;     // basal plasma glucose mass (mg/kg)
    double bw = 75.0;        // body weight (kg)

    // subcutaneous insulin chain closure
    double v_i = 0.05;       // insulin distribution volume (L/kg)
    double k_a = 0.02;       // subcutaneous transport rate (1/min)
    double k_e = 0.14;       // plasma insulin clearance (1/min)

    // insulin-dependent utilization closure
    double v_m0 = 2.5;       // basal utilization capacity (mg/kg/min)
    double v_mx = 0.047;     // insulin-driven capacity gain (mg/kg/min per pmol/L)
    double k_m0 = 225.59;    // utilization half-saturation (mg/kg)
    double p_2u = 0.0331;    // remote insulin action rate (1/min)
    double i_b = 200.0;      // basal plasma insulin concentration (pmol/L)

    double tau_m = 40.0;     // meal absorption time constant (min)

    // Optional hypoglycemia refinement: utilization capacity gain is boosted
    // when glucose falls below 60 mg/dL. Off by default.
    bool hypo_boost_enabled = false;
    double hypo_boost_factor = 1.5;

    void validate() const {
        require_positive(k_1, "k_1");
        require_positive(k_2, "k_2");
        require_positive(kp_1, "kp_1");
        require_positive(kp_2, "kp_2");
        require_positive(kp_3, "kp_3");
        require_positive(k_i, "k_i");
        require_positive(u_ii, "u_ii");
        require_positive(v_g, "v_g");
        require_positive(g_pb, "g_pb");
        require_positive(bw, "bw");
        require_positive(v_i, "v_i");
        require_positive(k_a, "k_a");
        require_positive(k_e, "k_e");
        require_positive(v_m0, "v_m0");
        require_positive(v_mx, "v_mx");
        require_positive(k_m0, "k_m0");
        require_positive(p_2u, "p_2u");
        require_positive(i_b, "i_b");
        require_positive(tau_m, "tau_m");
        require_positive(hypo_boost_factor, "hypo_boost_factor");
        if (kp_1 <= kp_2 * g_pb) {
            throw ConfigError("kp_1 must exceed kp_2 * g_pb (EGP positive at basal)");
        }
    }
};

inline constexpr double kHypoBoostThresholdMgDl = 60.0;

struct UvaState {
    double g_p = 225.6;   // plasma glucose (mg/kg)
    double g_t = 185.7;   // tissue glucose (mg/kg)
    double x_l = 0.0;     // delayed insulin action on EGP (pmol/L)
    double x = 0.0;       // remote insulin action on utilization (pmol/L, may be < 0 below basal)
    double i_sc1 = 0.0;   // first subcutaneous insulin depot (pmol/kg)
    double i_sc2 = 0.0;   // second subcutaneous insulin depot (pmol/kg)
    double i_p = 0.0;     // plasma insulin (pmol/kg)
    MealQueue meals;

    void validate() const {
        require_nonneg(g_p, "state.g_p");
        require_nonneg(g_t, "state.g_t");
        require_nonneg(x_l, "state.x_l");
        require_finite(x, "state.x");
        require_nonneg(i_sc1, "state.i_sc1");
        require_nonneg(i_sc2, "state.i_sc2");
        require_nonneg(i_p, "state.i_p");
    }
};

struct UvaDerivatives {
    double d_g_p = 0.0;
    double d_g_t = 0.0;
    double d_x_l = 0.0;
    double d_x = 0.0;
    double d_i_sc1 = 0.0;
    double d_i_sc2 = 0.0;
    double d_i_p = 0.0;
};

// Glucose concentration sampled by the CGM: plasma mass over volume.
inline double uva_observe_bg(const UvaState& state, const UvaProfile& profile) {
    return state.g_p / profile.v_g;
}

// Endogenous glucose production, suppressed by plasma glucose and delayed
// insulin action, clamped at zero (the linear form goes negative at high
// glucose, which is unphysiological).
inline double uva_egp(const UvaProfile& profile, double g_p, double x_l) {
    return clamp_nonneg(profile.kp_1 - profile.kp_2 * g_p - profile.kp_3 * x_l);
}

// Insulin-dependent utilization: Michaelis-Menten in tissue glucose with a
// capacity modulated by remote insulin action. The capacity is floored at
// zero so utilization never becomes a glucose source.
inline double uva_u_id(const UvaProfile& profile, double g_t, double x, double bg) {
    double v_mx = profile.v_mx;
    if (profile.hypo_boost_enabled && bg < kHypoBoostThresholdMgDl) {
        v_mx *= profile.hypo_boost_factor;
    }
    const double capacity = clamp_nonneg(profile.v_m0 + v_mx * x);
    return capacity * g_t / (profile.k_m0 + g_t);
}

// Full right-hand side. `insulin_rate` is the delivered rate in pmol/min.
inline UvaDerivatives uva_derivatives(const UvaState& state, const UvaProfile& profile,
                                      double insulin_rate) {
    profile.validate();
    state.validate();
    require_nonneg(insulin_rate, "insulin_rate");

    UvaDerivatives d;
    d.d_i_sc1 = -profile.k_a * state.i_sc1 + insulin_rate / profile.bw;
    d.d_i_sc2 = profile.k_a * (state.i_sc1 - state.i_sc2);
    d.d_i_p = profile.k_a * state.i_sc2 - profile.k_e * state.i_p;

    const double plasma_insulin = state.i_p / profile.v_i; // pmol/L
    d.d_x_l = -profile.k_i * (state.x_l - plasma_insulin);
    d.d_x = -profile.p_2u * state.x + profile.p_2u * (plasma_insulin - profile.i_b);

    const double bg = uva_observe_bg(state, profile);
    const double egp = uva_egp(profile, state.g_p, state.x_l);
    const double u_id = uva_u_id(profile, state.g_t, state.x, bg);
    const double ra = meal_appearance_total(state.meals, profile.tau_m, profile.bw); // mg/kg/min

    d.d_g_p = egp - profile.u_ii - profile.k_1 * state.g_p + profile.k_2 * state.g_t + ra;
    d.d_g_t = -u_id + profile.k_1 * state.g_p - profile.k_2 * state.g_t;
    return d;
}

inline UvaState uva_step(UvaState state, const UvaProfile& profile, double insulin_rate,
                         double dt) {
    require_finite(dt, "dt");
    if (dt <= 0.0) {
        throw ConfigError("dt must be > 0");
    }
    const int n = static_cast<int>(std::ceil(dt / 1.0));
    const double h = dt / n;
    for (int k = 0; k < n; ++k) {
        const UvaDerivatives d = uva_derivatives(state, profile, insulin_rate);
        state.i_sc1 = clamp_nonneg(state.i_sc1 + h * d.d_i_sc1);
        state.i_sc2 = clamp_nonneg(state.i_sc2 + h * d.d_i_sc2);
        state.i_p = clamp_nonneg(state.i_p + h * d.d_i_p);
        state.x_l = clamp_nonneg(state.x_l + h * d.d_x_l);
        state.x = state.x + h * d.d_x;
        state.g_p = clamp_nonneg(state.g_p + h * d.d_g_p);
        state.g_t = clamp_nonneg(state.g_t + h * d.d_g_t);
        advance_meals(state.meals, h, profile.tau_m);
    }
    return state;
}

// Basal insulin delivery (pmol/min) consistent with the profile's basal
// plasma insulin concentration: at steady state i_p settles at rate/(bw*k_e),
// so I = rate/(bw*k_e*v_i) and matching I = i_b gives the rate below.
inline double uva_basal_rate_pmol_min(const UvaProfile& profile) {
    return profile.i_b * profile.k_e * profile.v_i * profile.bw;
}

namespace detail {

// Tissue glucose equilibrated against a fixed plasma mass and remote insulin
// action: root of k_1*g_p - k_2*g_t - U_id(g_t) in g_t, found by bisection
// (the expression is strictly decreasing in g_t).
inline double uva_tissue_equilibrium(const UvaProfile& profile, double g_p, double x) {
    const double inflow = profile.k_1 * g_p;
    auto excess = [&](double g_t) {
        const double bg = g_p / profile.v_g;
        return inflow - profile.k_2 * g_t - uva_u_id(profile, g_t, x, bg);
    };
    double lo = 0.0;
    double hi = std::max(1.0, inflow / profile.k_2);
    if (excess(hi) > 0.0) {
        hi = 10.0 * hi + 1000.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Full steady state under a constant insulin rate (pmol/min), solved by
// bisection on the tissue compartment. Used both to initialize experiments
// and as the precomputed fixed point that long runs are checked against.
inline UvaState uva_basal_equilibrium(const UvaProfile& profile, double insulin_rate) {
    profile.validate();
    require_nonneg(insulin_rate, "insulin_rate");

    UvaState s;
    s.i_sc1 = insulin_rate / (profile.bw * profile.k_a);
    s.i_sc2 = s.i_sc1;
    s.i_p = insulin_rate / (profile.bw * profile.k_e);
    const double plasma_insulin = s.i_p / profile.v_i;
    s.x_l = plasma_insulin;
    s.x = plasma_insulin - profile.i_b;

    // Combined glucose balance: EGP(g_p, x_l) - u_ii - U_id(g_t(g_p)) = 0,
    // strictly decreasing in g_p, bracketed and bisected.
    auto net = [&](double g_p) {
        const double g_t = detail::uva_tissue_equilibrium(profile, g_p, s.x);
        const double bg = g_p / profile.v_g;
        return uva_egp(profile, g_p, s.x_l) - profile.u_ii - uva_u_id(profile, g_t, s.x, bg);
    };
    double lo = 0.0;
    double hi = 4.0 * profile.g_pb + 1000.0;
    if (net(lo) < 0.0) {
        s.g_p = 0.0;
        s.g_t = 0.0;
        return s;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (net(mid) > 0.0 ? lo : hi) = mid;
    }
    s.g_p = 0.5 * (lo + hi);
    s.g_t = detail::uva_tissue_equilibrium(profile, s.g_p, s.x);
    return s;
}

// State for starting a run at an arbitrary glucose level: insulin chain
// equilibrated to `basal_rate`, plasma glucose at bg0*v_g, tissue glucose
// equilibrated against it.
inline UvaState uva_init_state(const UvaProfile& profile, double bg0, double basal_rate) {
    require_nonneg(bg0, "initial_bg");
    UvaState s = uva_basal_equilibrium(profile, basal_rate);
    s.g_p = bg0 * profile.v_g;
    s.g_t = detail::uva_tissue_equilibrium(profile, s.g_p, s.x);
    return s;
}

// Builds a profile whose basal steady state sits exactly at `basal_bg` under
// the basal insulin rate implied by i_b: every parameter is taken as given
// and kp_1 absorbs the balance
//   kp_1 = u_ii + U_id_basal + kp_2*g_pb + kp_3*i_b.
inline UvaProfile uva_make_consistent(UvaProfile p, double basal_bg) {
    require_positive(basal_bg, "basal_bg");
    p.g_pb = basal_bg * p.v_g;
    const double g_tb = detail::uva_tissue_equilibrium(p, p.g_pb, 0.0);
    const double u_id_b = uva_u_id(p, g_tb, 0.0, basal_bg);
    p.kp_1 = p.u_ii + u_id_b + p.kp_2 * p.g_pb + p.kp_3 * p.i_b;
    p.validate();
    return p;
}

// Reference adult profile with a 120 mg/dL basal fixed point.
inline UvaProfile uva_nominal_profile() {
    return uva_make_consistent(UvaProfile{}, 120.0);
}

// Seeded virtual cohort. Rates and volumes vary within +/-30% of nominal and
// kp_1 is rederived per draw, so every sampled profile has a consistent basal
// fixed point in the 110-130 mg/dL band.
inline std::vector<UvaProfile> uva_default_cohort(std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw ConfigError("cohort size must be >= 1");
    }
    Rng rng(seed);
    std::vector<UvaProfile> cohort;
    cohort.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const UvaProfile nominal;
        auto draw = [&rng](double v) { return rng.uniform(v * (1.0 - kCohortSpread), v * (1.0 + kCohortSpread)); };
        UvaProfile p;
        p.k_1 = draw(nominal.k_1);
        p.k_2 = draw(nominal.k_2);
        p.kp_2 = draw(nominal.kp_2);
        p.kp_3 = draw(nominal.kp_3);
        p.k_i = draw(nominal.k_i);
        p.u_ii = draw(nominal.u_ii);
        p.v_g = draw(nominal.v_g);
        p.bw = rng.uniform(55.0, 95.0);
        p.v_i = draw(nominal.v_i);
        p.k_a = draw(nominal.k_a);
        p.k_e = draw(nominal.k_e);
        p.v_m0 = draw(nominal.v_m0);
        p.v_mx = draw(nominal.v_mx);
        p.k_m0 = draw(nominal.k_m0);
        p.p_2u = draw(nominal.p_2u);
        p.i_b = draw(nominal.i_b);
        p.tau_m = draw(nominal.tau_m);
        cohort.push_back(uva_make_consistent(p, rng.uniform(110.0, 130.0)));
    }
    return cohort;
}

} // namespace apsim
