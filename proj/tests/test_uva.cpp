#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "apsim/rng.hpp"
#include "apsim/uva.hpp"

using namespace apsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("observed glucose is plasma mass over distribution volume") {
    UvaProfile p;
    UvaState s;
    s.g_p = 300.0;
    REQUIRE_THAT(uva_observe_bg(s, p), WithinAbs(159.57, 0.01));
    s.g_p = 0.0;
    REQUIRE(uva_observe_bg(s, p) == 0.0);
    s.g_p = 1.88 * 120.0;
    REQUIRE_THAT(uva_observe_bg(s, p), WithinAbs(120.0, 1e-12));
}

TEST_CASE("all derivatives vanish at the basal steady state") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    const UvaState s = uva_basal_equilibrium(p, rate);

    const UvaDerivatives d = uva_derivatives(s, p, rate);
    REQUIRE_THAT(d.d_g_p, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_g_t, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_x_l, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_x, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_i_sc1, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_i_sc2, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(d.d_i_p, WithinAbs(0.0, 1e-9));

    // The constructive profile pins the fixed point at 120 mg/dL.
    REQUIRE_THAT(uva_observe_bg(s, p), WithinAbs(120.0, 1e-6));
}

TEST_CASE("independent damped iteration finds the same equilibrium") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    const UvaState lib = uva_basal_equilibrium(p, rate);

    // Fixed-point iteration on (g_p, g_t), written without the library's
    // bisection: repeatedly relax each balance toward its own root.
    const double plasma_insulin = rate / (p.bw * p.k_e * p.v_i);
    double g_p = p.g_pb;
    double g_t = p.g_pb * p.k_1 / p.k_2;
    for (int it = 0; it < 200000; ++it) {
        const double u_id = uva_u_id(p, g_t, plasma_insulin - p.i_b, g_p / p.v_g);
        const double egp = uva_egp(p, g_p, plasma_insulin);
        const double g_p_next = g_p + 0.5 * (egp - p.u_ii - p.k_1 * g_p + p.k_2 * g_t);
        const double g_t_next = g_t + 0.5 * (-u_id + p.k_1 * g_p - p.k_2 * g_t);
        g_p = g_p_next;
        g_t = g_t_next;
    }
    REQUIRE_THAT(g_p, WithinRel(lib.g_p, 1e-6));
    REQUIRE_THAT(g_t, WithinRel(lib.g_t, 1e-6));
}

TEST_CASE("delayed insulin action relaxes to plasma insulin with rate k_i") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    UvaState s = uva_basal_equilibrium(p, rate);
    const double target = s.x_l; // equals the basal plasma concentration
    s.x_l = 0.0;

    const double horizon = 240.0;
    for (int k = 0; k < static_cast<int>(horizon); ++k) {
        s = uva_step(s, p, rate, 1.0);
    }
    const double expected_gap = target * std::exp(-p.k_i * horizon);
    REQUIRE_THAT(target - s.x_l, WithinRel(expected_gap, 0.05));
}

TEST_CASE("endogenous production clamps at zero for high glucose") {
    const UvaProfile p = uva_nominal_profile();
    const double huge_g_p = (p.kp_1 + 10.0) / p.kp_2;
    REQUIRE(uva_egp(p, huge_g_p, 0.0) == 0.0);

    UvaState s = uva_basal_equilibrium(p, uva_basal_rate_pmol_min(p));
    s.g_p = huge_g_p;
    const UvaDerivatives d = uva_derivatives(s, p, uva_basal_rate_pmol_min(p));
    // With EGP floored, plasma glucose can only drain at this level.
    REQUIRE(d.d_g_p < 0.0);
}

TEST_CASE("endogenous production is nonincreasing in glucose and insulin action") {
    const UvaProfile p = uva_nominal_profile();
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double g = rng.uniform(0.0, 1200.0);
        const double xl = rng.uniform(0.0, 600.0);
        const double dg = rng.uniform(0.0, 200.0);
        const double dxl = rng.uniform(0.0, 100.0);
        REQUIRE(uva_egp(p, g + dg, xl) <= uva_egp(p, g, xl) + 1e-12);
        REQUIRE(uva_egp(p, g, xl + dxl) <= uva_egp(p, g, xl) + 1e-12);
    }
}

TEST_CASE("zero-insulin trajectory dominates the basal trajectory") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    UvaState with = uva_basal_equilibrium(p, rate);
    UvaState without = with;
    for (int step = 0; step < 150; ++step) {
        with = uva_step(with, p, rate, 5.0);
        without = uva_step(without, p, 0.0, 5.0);
        REQUIRE(uva_observe_bg(without, p) >= uva_observe_bg(with, p) - 1e-9);
    }
}

TEST_CASE("identical inputs give bit-identical states") {
    const UvaProfile p = uva_nominal_profile();
    UvaState a = uva_init_state(p, 150.0, uva_basal_rate_pmol_min(p));
    UvaState b = a;
    a.meals.push_back({0.0, 50000.0});
    b.meals.push_back({0.0, 50000.0});
    for (int step = 0; step < 100; ++step) {
        a = uva_step(a, p, 300.0, 5.0);
        b = uva_step(b, p, 300.0, 5.0);
    }
    REQUIRE(a.g_p == b.g_p);
    REQUIRE(a.g_t == b.g_t);
    REQUIRE(a.i_p == b.i_p);
    REQUIRE(a.x == b.x);
    REQUIRE(a.x_l == b.x_l);
}

TEST_CASE("halving the substep moves a 12.5 h trajectory < 0.5 mg/dL") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    UvaState coarse = uva_init_state(p, 160.0, rate);
    UvaState fine = coarse;
    coarse.meals.push_back({0.0, 50000.0});
    fine.meals.push_back({0.0, 50000.0});

    double sup = 0.0;
    for (int minute = 0; minute < 750; ++minute) {
        coarse = uva_step(coarse, p, rate, 1.0);
        fine = uva_step(fine, p, rate, 0.5);
        fine = uva_step(fine, p, rate, 0.5);
        sup = std::max(sup, std::fabs(uva_observe_bg(coarse, p) - uva_observe_bg(fine, p)));
    }
    REQUIRE(sup < 0.5);
}

TEST_CASE("compartments stay nonnegative under random dosing") {
    const UvaProfile p = uva_nominal_profile();
    Rng rng(23);
    UvaState s = uva_init_state(p, 100.0, 0.0);
    s.meals.push_back({0.0, 80000.0});
    for (int step = 0; step < 400; ++step) {
        const double rate = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 2000.0);
        s = uva_step(s, p, rate, 5.0);
        REQUIRE(s.g_p >= 0.0);
        REQUIRE(s.g_t >= 0.0);
        REQUIRE(s.i_sc1 >= 0.0);
        REQUIRE(s.i_sc2 >= 0.0);
        REQUIRE(s.i_p >= 0.0);
        REQUIRE(s.x_l >= 0.0);
    }
}

TEST_CASE("initialized at the fixed point, glucose drifts < 1 mg/dL over 24 h") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    UvaState s = uva_basal_equilibrium(p, rate);
    const double bg0 = uva_observe_bg(s, p);
    for (int step = 0; step < 24 * 12; ++step) {
        s = uva_step(s, p, rate, 5.0);
        REQUIRE(std::fabs(uva_observe_bg(s, p) - bg0) < 1.0);
    }
}

TEST_CASE("pointwise-larger insulin never raises glucose") {
    const UvaProfile p = uva_nominal_profile();
    const double rate = uva_basal_rate_pmol_min(p);
    Rng rng(31);
    UvaState lo = uva_init_state(p, 180.0, rate);
    UvaState hi = lo;
    for (int step = 0; step < 150; ++step) {
        const double base = rng.uniform(0.0, 2.0 * rate);
        const double extra = rng.uniform(0.0, rate);
        lo = uva_step(lo, p, base, 5.0);
        hi = uva_step(hi, p, base + extra, 5.0);
        REQUIRE(uva_observe_bg(hi, p) <= uva_observe_bg(lo, p) + 1e-9);
    }
}

TEST_CASE("constructive profiles satisfy the basal-consistency invariant") {
    UvaProfile raw;
    raw.v_mx = 0.06;
    raw.i_b = 150.0;
    const UvaProfile p = uva_make_consistent(raw, 115.0);
    REQUIRE(p.kp_1 > p.kp_2 * p.g_pb);
    const UvaState eq = uva_basal_equilibrium(p, uva_basal_rate_pmol_min(p));
    REQUIRE_THAT(uva_observe_bg(eq, p), WithinAbs(115.0, 1e-6));
}

TEST_CASE("cohort sampling is deterministic and consistent") {
    const auto a = uva_default_cohort(5, 9);
    const auto b = uva_default_cohort(5, 9);
    REQUIRE(a.size() == 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].kp_1 == b[i].kp_1);
        REQUIRE_NOTHROW(a[i].validate());
        const UvaState eq = uva_basal_equilibrium(a[i], uva_basal_rate_pmol_min(a[i]));
        const double bg = uva_observe_bg(eq, a[i]);
        REQUIRE(bg > 105.0);
        REQUIRE(bg < 135.0);
    }
    REQUIRE_THROWS_AS(uva_default_cohort(0, 1), ConfigError);
}

TEST_CASE("hypoglycemia boost raises utilization only below the threshold") {
    UvaProfile p = uva_nominal_profile();
    p.hypo_boost_enabled = true;
    p.hypo_boost_factor = 1.5;
    const UvaProfile off = uva_nominal_profile();

    const double g_t = 150.0;
    const double x = 50.0;
    REQUIRE(uva_u_id(p, g_t, x, 55.0) > uva_u_id(off, g_t, x, 55.0));
    REQUIRE(uva_u_id(p, g_t, x, 80.0) == uva_u_id(off, g_t, x, 80.0));
}

TEST_CASE("non-finite inputs are rejected naming the field") {
    const UvaProfile p = uva_nominal_profile();
    UvaState s = uva_basal_equilibrium(p, uva_basal_rate_pmol_min(p));
    s.g_t = std::numeric_limits<double>::infinity();
    try {
        uva_derivatives(s, p, 0.0);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("g_t") != std::string::npos);
    }
}
