#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "apsim/controllers.hpp"
#include "apsim/errors.hpp"
#include "apsim/rng.hpp"
#include "apsim/units.hpp"

namespace apsim {

// CGM sensor model: additive gaussian noise, then clipping to the reportable
// range. The default range matches commercial CGM displays.
struct SensorConfig {
    double noise_sd = 2.0;         // mg/dL
    double range_min = 39.0;       // mg/dL
    double range_max = 400.0;      // mg/dL
    double sample_interval = 5.0;  // min
    std::uint64_t seed = 0;

    void validate() const {
        require_nonneg(noise_sd, "noise_sd");
        require_finite(range_min, "range_min");
        require_finite(range_max, "range_max");
        if (!(range_min < range_max)) {
            throw ConfigError("sensor range must satisfy min < max");
        }
        require_positive(sample_interval, "sample_interval");
    }
};

// A zero-sd sensor never touches the RNG, so noiseless runs are independent
// of the seed entirely.
inline double cgm_read(double true_bg, const SensorConfig& config, Rng& rng) {
    require_nonneg(true_bg, "true_bg");
    double reading = true_bg;
    if (config.noise_sd > 0.0) {
        reading = rng.gaussian(true_bg, config.noise_sd);
    }
    return std::clamp(reading, config.range_min, config.range_max);
}

enum class PumpOutputUnit { u_per_min, pmol_per_min };

struct PumpConfig {
    double max_basal = 10.0;        // U/hr
    double max_bolus = 10.0;        // U
    double basal_resolution = 0.05; // U/hr quantum
    PumpOutputUnit output_unit = PumpOutputUnit::u_per_min;

    void validate() const {
        require_positive(max_basal, "max_basal");
        require_positive(max_bolus, "max_bolus");
        require_positive(basal_resolution, "basal_resolution");
    }
};

struct PumpDelivery {
    double basal_u_hr = 0.0;     // after quantization and clipping
    double bolus_u = 0.0;        // after clipping
    double basal_per_min = 0.0;  // basal rate in the configured output unit
    double bolus_amount = 0.0;   // bolus in the configured output unit (U or pmol)
    PumpOutputUnit unit = PumpOutputUnit::u_per_min;
};

// Quantize toward zero: the pump never delivers more than commanded. The
// tiny epsilon keeps exact grid multiples from landing one step low.
inline double quantize_down(double value, double resolution) {
    return std::floor(value / resolution + 1e-9) * resolution;
}

inline PumpDelivery pump_deliver(const ControlDecision& decision, const PumpConfig& config) {
    config.validate();
    require_nonneg(decision.basal, "decision.basal");
    require_nonneg(decision.bolus, "decision.bolus");

    PumpDelivery out;
    out.unit = config.output_unit;
    out.basal_u_hr = std::clamp(quantize_down(decision.basal, config.basal_resolution),
                                0.0, config.max_basal);
    out.bolus_u = std::clamp(decision.bolus, 0.0, config.max_bolus);

    const double basal_u_min = u_per_hr_to_u_per_min(out.basal_u_hr);
    if (config.output_unit == PumpOutputUnit::u_per_min) {
        out.basal_per_min = basal_u_min;
        out.bolus_amount = out.bolus_u;
    } else {
        out.basal_per_min = units_to_pmol(basal_u_min);
        out.bolus_amount = units_to_pmol(out.bolus_u);
    }
    return out;
}

} // namespace apsim
