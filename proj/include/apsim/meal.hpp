#pragma once

#include <cmath>
#include <vector>

#include "apsim/units.hpp"

namespace apsim {

// One active meal: elapsed time since ingestion and carbohydrate mass.
struct ActiveMeal {
    double elapsed_min = 0.0;
    double carbs_mg = 0.0;
};

using MealQueue = std::vector<ActiveMeal>;

// Two-compartment glucose appearance curve for a single meal,
//   ra(t) = CH * t * exp(-t / tau_m) / (denom * tau_m^2),
// which rises from zero, peaks at t = tau_m with CH*e^-1/(denom*tau_m), and
// decays back to zero. `denom` is the distribution volume (dL) for the
// concentration-based model or body weight (kg) for the per-kg model.
inline double meal_appearance_single(double carbs_mg, double t_min, double tau_m,
                                     double denom) {
    if (t_min < 0.0) {
        return 0.0;
    }
    return carbs_mg * t_min * std::exp(-t_min / tau_m) / (denom * tau_m * tau_m);
}

inline double meal_appearance_total(const MealQueue& meals, double tau_m, double denom) {
    double ra = 0.0;
    for (const auto& m : meals) {
        ra += meal_appearance_single(m.carbs_mg, m.elapsed_min, tau_m, denom);
    }
    return ra;
}

// Advances meal clocks and drops meals past 8*tau_m, where the curve has
// fallen below 0.27% of its peak; keeps the queue bounded on long runs.
inline void advance_meals(MealQueue& meals, double dt_min, double tau_m) {
    for (auto& m : meals) {
        m.elapsed_min += dt_min;
    }
    std::erase_if(meals, [tau_m](const ActiveMeal& m) { return m.elapsed_min > 8.0 * tau_m; });
}

} // namespace apsim
