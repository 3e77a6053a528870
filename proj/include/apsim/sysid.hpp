#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/loop.hpp"
#include "apsim/mvp.hpp"

namespace apsim {

// Profile estimation for the MVP model. The trace's glucose dynamics are
// linear in (egp, gezi, s_i) once the insulin cascade is simulated with the
// remaining parameters held fixed:
//   dBG/dt - R_A = egp + gezi * (-BG) + s_i * (-h * BG)
// where h is the doubly-lagged plasma-insulin signal (the insulin effect
// with s_i factored out). Ordinary least squares then recovers the free
// parameters directly.
struct FitSpec {
    // Fixed parameters, taken at nominal population values.
    double c_i = 2010.0;
    double tau_1 = 49.0;
    double tau_2 = 47.0;
    double p_2 = 0.0106;
    double tau_m = 40.0;
    double v_g = 253.0;

    double train_window_days = 10.0;
    double eval_window_days = 0.0; // 0 = everything after the train window

    // Pump and delivery settings of the trace's origin, used to replay the
    // fitted profile for train/eval MSE.
    PumpConfig pump;
    double init_basal_u_min = 0.0;
    BolusDelivery bolus_delivery = BolusDelivery::front_load;

    void validate() const {
        require_positive(c_i, "c_i");
        require_positive(tau_1, "tau_1");
        require_positive(tau_2, "tau_2");
        require_positive(p_2, "p_2");
        require_positive(tau_m, "tau_m");
        require_positive(v_g, "v_g");
        require_positive(train_window_days, "train_window_days");
        require_nonneg(eval_window_days, "eval_window_days");
    }
};

struct Regressors {
    // Row i: [1, -bg_i, -h_i * bg_i]; target y_i = dBG/dt - R_A at sample i.
    std::vector<std::array<double, 3>> x;
    std::vector<double> y;
    std::vector<double> h; // lagged insulin signal at each sample
};

inline constexpr std::size_t kMinFitSamples = 100;

// Simulates the fixed-parameter insulin cascade over the trace (1-min Euler
// substeps, rate constant within each interval) and assembles the linear
// system. Glucose derivatives use central differences at interior samples
// and one-sided differences at the ends.
inline Regressors build_regressors(const Trace& trace, const FitSpec& spec) {
    spec.validate();
    require_uniform_cadence(trace);
    if (trace.size() < kMinFitSamples) {
        throw ConfigError("trace too short for fitting (need >= " +
                          std::to_string(kMinFitSamples) + " samples)");
    }
    const double cadence = trace[1].t_min - trace[0].t_min;
    const std::size_t n = trace.size();

    // Insulin cascade with s_i factored out: h plays the role of the insulin
    // effect per unit sensitivity. Initialized at steady state for the first
    // recorded rate.
    std::vector<double> h_at(n);
    double dose0 = units_to_micro(trace[0].delivered_u_min); // uU/min
    double i_sc = dose0 / spec.c_i;
    double i_p = i_sc;
    double h = i_p;
    const int substeps = std::max(1, static_cast<int>(std::lround(cadence)));
    const double dt = cadence / substeps;
    for (std::size_t i = 0; i < n; ++i) {
        h_at[i] = h;
        const double dose = units_to_micro(trace[i].delivered_u_min);
        for (int k = 0; k < substeps; ++k) {
            const double d_isc = -(i_sc - dose / spec.c_i) / spec.tau_1;
            const double d_ip = -(i_p - i_sc) / spec.tau_2;
            const double d_h = -spec.p_2 * (h - i_p);
            i_sc += dt * d_isc;
            i_p += dt * d_ip;
            h += dt * d_h;
        }
    }

    // Meal appearance replayed from the cho column with the same queue
    // semantics as the simulator (meals expire after 8 * tau_m).
    auto ra_at = [&](std::size_t i) {
        double ra = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            if (trace[j].cho_g <= 0.0) continue;
            const double elapsed = trace[i].t_min - trace[j].t_min;
            if (elapsed > 8.0 * spec.tau_m) continue;
            ra += meal_appearance_single(trace[j].cho_g * 1000.0, elapsed, spec.tau_m,
                                         spec.v_g);
        }
        return ra;
    };

    Regressors reg;
    reg.x.reserve(n);
    reg.y.reserve(n);
    reg.h = h_at;
    for (std::size_t i = 0; i < n; ++i) {
        const double bg = trace[i].cgm;
        double dbg = 0.0;
        if (i == 0) {
            dbg = (trace[1].cgm - trace[0].cgm) / cadence;
        } else if (i == n - 1) {
            dbg = (trace[n - 1].cgm - trace[n - 2].cgm) / cadence;
        } else {
            dbg = (trace[i + 1].cgm - trace[i - 1].cgm) / (2.0 * cadence);
        }
        reg.x.push_back({1.0, -bg, -h_at[i] * bg});
        reg.y.push_back(dbg - ra_at(i));
    }
    return reg;
}

namespace detail {

inline const char* free_param_name(std::size_t col) {
    switch (col) {
        case 0: return "egp";
        case 1: return "gezi";
        default: return "s_i";
    }
}

// Solves the 3x3 normal equations with column equilibration and partial
// pivoting. A vanishing pivot means some free parameter direction is
// unsupported by the data; it is reported, never regularized away.
struct OlsSolution {
    std::array<double, 3> theta{};
    std::array<double, 3> normal_residual{}; // X^T (y - X theta), equilibrated scale
};

inline OlsSolution solve_ols_3(const std::vector<std::array<double, 3>>& x,
                               const std::vector<double>& y) {
    std::array<double, 3> scale{};
    for (const auto& row : x) {
        for (int j = 0; j < 3; ++j) {
            scale[j] += row[j] * row[j];
        }
    }
    for (int j = 0; j < 3; ++j) {
        scale[j] = std::sqrt(scale[j]);
        if (scale[j] == 0.0) {
            throw UnidentifiableError(free_param_name(j),
                                      "regressor column is identically zero");
        }
    }

    double a[3][4] = {};
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int r = 0; r < 3; ++r) {
            const double xr = x[i][r] / scale[r];
            for (int c = 0; c < 3; ++c) {
                a[r][c] += xr * x[i][c] / scale[c];
            }
            a[r][3] += xr * y[i];
        }
    }

    int perm[3] = {0, 1, 2};
    double m[3][4];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) m[r][c] = a[r][c];
    }
    for (int k = 0; k < 3; ++k) {
        int piv = k;
        for (int r = k + 1; r < 3; ++r) {
            if (std::fabs(m[r][k]) > std::fabs(m[piv][k])) piv = r;
        }
        if (std::fabs(m[piv][k]) < 1e-10) {
            throw UnidentifiableError(free_param_name(k),
                                      "design matrix is rank deficient");
        }
        if (piv != k) {
            for (int c = 0; c < 4; ++c) std::swap(m[k][c], m[piv][c]);
            std::swap(perm[k], perm[piv]);
        }
        for (int r = k + 1; r < 3; ++r) {
            const double f = m[r][k] / m[k][k];
            for (int c = k; c < 4; ++c) m[r][c] -= f * m[k][c];
        }
    }

    std::array<double, 3> theta_scaled{};
    for (int k = 2; k >= 0; --k) {
        double v = m[k][3];
        for (int c = k + 1; c < 3; ++c) v -= m[k][c] * theta_scaled[c];
        theta_scaled[k] = v / m[k][k];
    }

    OlsSolution sol;
    for (int j = 0; j < 3; ++j) {
        sol.theta[j] = theta_scaled[j] / scale[j];
    }
    for (int r = 0; r < 3; ++r) {
        double v = a[r][3];
        for (int c = 0; c < 3; ++c) v -= a[r][c] * theta_scaled[c];
        sol.normal_residual[r] = v;
    }
    return sol;
}

} // namespace detail

struct FitResult {
    MvpProfile profile;          // fixed params + fitted (egp, gezi, s_i)
    double train_mse = 0.0;      // (mg/dL)^2, replay vs observed glucose
    double eval_mse = 0.0;       // (mg/dL)^2 on the held-out window
    double tdd_u = 0.0;          // observed total daily dose over the train window
    double isf_1700 = 0.0;       // 1700 / TDD
    std::array<double, 3> normal_residual{};
    std::size_t train_samples = 0;
    std::size_t eval_samples = 0;
};

inline FitResult fit_profile(const FitSpec& spec, const Trace& trace) {
    spec.validate();
    require_uniform_cadence(trace);
    const double cadence = trace[1].t_min - trace[0].t_min;
    const double train_min = spec.train_window_days * 24.0 * 60.0;

    Trace train;
    for (const auto& r : trace) {
        if (r.t_min < train_min) train.push_back(r);
    }
    if (train.size() < kMinFitSamples) {
        throw ConfigError("train window too short");
    }

    const Regressors reg = build_regressors(train, spec);
    const detail::OlsSolution sol = detail::solve_ols_3(reg.x, reg.y);

    FitResult result;
    result.normal_residual = sol.normal_residual;
    result.profile.c_i = spec.c_i;
    result.profile.tau_1 = spec.tau_1;
    result.profile.tau_2 = spec.tau_2;
    result.profile.p_2 = spec.p_2;
    result.profile.tau_m = spec.tau_m;
    result.profile.v_g = spec.v_g;
    // OLS can place a coefficient at or below zero on noisy data; the profile
    // invariants require strict positivity.
    result.profile.egp = std::max(sol.theta[0], 1e-9);
    result.profile.gezi = std::max(sol.theta[1], 1e-9);
    result.profile.s_i = std::max(sol.theta[2], 1e-12);

    double delivered_u = 0.0;
    for (const auto& r : train) {
        delivered_u += r.delivered_u_min * cadence;
    }
    const double train_days = train.size() * cadence / (24.0 * 60.0);
    result.tdd_u = delivered_u / train_days;
    result.isf_1700 = 1700.0 / result.tdd_u;

    // Replay the whole trace with the fitted profile and score the two
    // windows against the observed glucose column.
    ReplaySetup setup;
    setup.model = ModelKind::mvp;
    setup.mvp_profile = result.profile;
    setup.pump = spec.pump;
    setup.initial_bg = trace.front().cgm;
    setup.init_basal_u_min = spec.init_basal_u_min;
    setup.bolus_delivery = spec.bolus_delivery;
    const std::vector<double> replayed = replay_insulin(setup, trace);

    const double eval_min = spec.eval_window_days > 0.0
                                ? train_min + spec.eval_window_days * 24.0 * 60.0
                                : trace.back().t_min + cadence;
    double train_ss = 0.0, eval_ss = 0.0;
    std::size_t n_train = 0, n_eval = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double d = replayed[i] - trace[i].cgm;
        if (trace[i].t_min < train_min) {
            train_ss += d * d;
            ++n_train;
        } else if (trace[i].t_min < eval_min) {
            eval_ss += d * d;
            ++n_eval;
        }
    }
    result.train_mse = n_train ? train_ss / n_train : 0.0;
    result.eval_mse = n_eval ? eval_ss / n_eval : 0.0;
    result.train_samples = n_train;
    result.eval_samples = n_eval;
    return result;
}

} // namespace apsim
