#pragma once

#include <cmath>
#include <string>

#include "apsim/errors.hpp"

namespace apsim {

// 1 international unit of insulin = 1e6 microunits = 6000 pmol.
inline constexpr double kMicroUnitsPerUnit = 1.0e6;
inline constexpr double kPmolPerUnit = 6000.0;
inline constexpr double kMinutesPerHour = 60.0;

inline constexpr double u_per_hr_to_u_per_min(double u_hr) { return u_hr / kMinutesPerHour; }
inline constexpr double u_per_min_to_u_per_hr(double u_min) { return u_min * kMinutesPerHour; }
inline constexpr double units_to_micro(double u) { return u * kMicroUnitsPerUnit; }
inline constexpr double units_to_pmol(double u) { return u * kPmolPerUnit; }

inline double clamp_nonneg(double v) { return v < 0.0 ? 0.0 : v; }

// Rejects non-finite values with a diagnostic naming the offending field.
inline void require_finite(double v, const char* field) {
    if (!std::isfinite(v)) {
        throw ConfigError(std::string(field) + " is not finite");
    }
}

inline void require_positive(double v, const char* field) {
    require_finite(v, field);
    if (v <= 0.0) {
        throw ConfigError(std::string(field) + " must be > 0");
    }
}

inline void require_nonneg(double v, const char* field) {
    require_finite(v, field);
    if (v < 0.0) {
        throw ConfigError(std::string(field) + " must be >= 0");
    }
}

} // namespace apsim
