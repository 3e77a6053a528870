#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/units.hpp"

namespace apsim {

// Dosing parameters derived from body weight by the standard clinical rules:
// total daily dose at 0.55 U/kg, carb ratio by the 450 rule, correction and
// sensitivity factors by the 1700 rule (the latter two coincide).
struct DosingParams {
    double tdd = 0.0;  // U/day
    double cr = 0.0;   // g/U
    double cf = 0.0;   // mg/dL per U
    double isf = 0.0;  // mg/dL per U
};

inline DosingParams derive_dosing_params(double bw_kg) {
    require_positive(bw_kg, "bw");
    DosingParams p;
    p.tdd = 0.55 * bw_kg;
    p.cr = 450.0 / p.tdd;
    p.cf = 1700.0 / p.tdd;
    p.isf = 1700.0 / p.tdd;
    return p;
}

enum class IobCurve { linear, exponential };

struct ControllerConfig {
    double bg_target = 120.0;     // mg/dL
    double bg_range_low = 70.0;   // mg/dL
    double bg_range_high = 180.0; // mg/dL
    double isf = 41.2121;         // mg/dL per U
    double cr = 10.9091;          // g/U
    double cf = 41.2121;          // mg/dL per U
    double basal_rate = 1.0;      // profile basal (U/hr)
    double u_2ss = 1.4;           // steady-state insulin rate (pmol/kg/min)
    double bw = 75.0;             // kg
    double dia = 240.0;           // insulin action duration (min)
    double max_basal = 10.0;      // U/hr
    double max_bolus = 10.0;      // U
    IobCurve iob_curve = IobCurve::linear;

    void validate() const {
        require_positive(isf, "isf");
        require_positive(cr, "cr");
        require_positive(cf, "cf");
        require_positive(dia, "dia");
        require_positive(max_basal, "max_basal");
        require_positive(max_bolus, "max_bolus");
        require_positive(bw, "bw");
        require_nonneg(u_2ss, "u_2ss");
        require_nonneg(basal_rate, "basal_rate");
        require_finite(bg_target, "bg_target");
        if (!(bg_range_low < bg_target && bg_target < bg_range_high)) {
            throw ConfigError("bg_range must satisfy low < target < high");
        }
    }
};

// The low-glucose suspend threshold equals the target-range floor.
inline constexpr double kSuspendThresholdMgDl = 70.0;
// Meal boluses add a correction term above this CGM reading.
inline constexpr double kBolusCorrectionThresholdMgDl = 150.0;
inline constexpr double kTempBasalDurationMin = 30.0;

// Which branch of the decision logic produced a command.
enum class Rationale {
    fixed_basal,
    bb_basal_only,
    bb_meal_bolus,
    bb_meal_bolus_corrected,
    low_glucose_suspend,
    rising_but_low,
    falling_but_high,
    high_eventual_temp,
    low_eventual_zero_temp,
    on_target,
};

inline const char* to_string(Rationale r) {
    switch (r) {
        case Rationale::fixed_basal: return "fixed_basal";
        case Rationale::bb_basal_only: return "bb_basal_only";
        case Rationale::bb_meal_bolus: return "bb_meal_bolus";
        case Rationale::bb_meal_bolus_corrected: return "bb_meal_bolus_corrected";
        case Rationale::low_glucose_suspend: return "low_glucose_suspend";
        case Rationale::rising_but_low: return "rising_but_low";
        case Rationale::falling_but_high: return "falling_but_high";
        case Rationale::high_eventual_temp: return "high_eventual_temp";
        case Rationale::low_eventual_zero_temp: return "low_eventual_zero_temp";
        case Rationale::on_target: return "on_target";
    }
    return "unknown";
}

struct ControlDiagnostics {
    double iob = 0.0;          // U
    double eventual_bg = 0.0;  // mg/dL
    double deviation = 0.0;    // mg/dL
    Rationale rationale = Rationale::fixed_basal;
};

struct ControlDecision {
    double basal = 0.0;  // U/hr
    double bolus = 0.0;  // U
    ControlDiagnostics diagnostics;
};

struct PumpHistoryRecord {
    double t_min = 0.0;
    double basal_u_hr = 0.0;
    double bolus_u = 0.0;
};

struct PumpHistory {
    std::vector<PumpHistoryRecord> records;

    void validate() const {
        for (std::size_t i = 1; i < records.size(); ++i) {
            if (!(records[i].t_min > records[i - 1].t_min)) {
                throw ConfigError("pump history timestamps must be strictly increasing");
            }
        }
    }

    void push(double t_min, double basal_u_hr, double bolus_u) {
        records.push_back({t_min, basal_u_hr, bolus_u});
    }
};

namespace detail {

// Remaining fraction of a delivery after `age` minutes. The linear curve hits
// zero at DIA; the exponential variant is normalized to do the same.
inline double iob_remaining(double age_min, double dia, IobCurve curve) {
    if (age_min < 0.0) return 0.0;
    if (age_min >= dia) return 0.0;
    if (curve == IobCurve::linear) {
        return 1.0 - age_min / dia;
    }
    constexpr double k = 3.0;
    const double norm = 1.0 - std::exp(-k);
    return (std::exp(-k * age_min / dia) - std::exp(-k)) / norm;
}

// Decay rate of the remaining fraction (1/min); drives the insulin-activity
// part of the deviation estimate.
inline double iob_decay_rate(double age_min, double dia, IobCurve curve) {
    if (age_min < 0.0 || age_min >= dia) return 0.0;
    if (curve == IobCurve::linear) {
        return 1.0 / dia;
    }
    constexpr double k = 3.0;
    const double norm = 1.0 - std::exp(-k);
    return k * std::exp(-k * age_min / dia) / (dia * norm);
}

struct IobContribution {
    double t_min = 0.0;
    double units = 0.0;
};

// Boluses count gross; basal counts net of the profile basal rate, so a
// suspended pump accrues negative insulin-on-board. Each record covers the
// interval up to the next record (the final one up to `now`).
inline std::vector<IobContribution> iob_contributions(const PumpHistory& history,
                                                      double now_min,
                                                      const ControllerConfig& config) {
    std::vector<IobContribution> out;
    const auto& rec = history.records;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const double until = (i + 1 < rec.size()) ? rec[i + 1].t_min : now_min;
        const double span = std::max(0.0, until - rec[i].t_min);
        const double net_basal_u = (rec[i].basal_u_hr - config.basal_rate) / kMinutesPerHour * span;
        if (net_basal_u != 0.0) {
            out.push_back({rec[i].t_min, net_basal_u});
        }
        if (rec[i].bolus_u != 0.0) {
            out.push_back({rec[i].t_min, rec[i].bolus_u});
        }
    }
    return out;
}

} // namespace detail

// Net insulin on board (U) at `now_min`.
inline double calculate_iob(const PumpHistory& history, double now_min,
                            const ControllerConfig& config) {
    history.validate();
    if (!history.records.empty() && now_min < history.records.back().t_min) {
        throw ConfigError("now precedes the last pump history record");
    }
    double iob = 0.0;
    for (const auto& c : detail::iob_contributions(history, now_min, config)) {
        iob += c.units * detail::iob_remaining(now_min - c.t_min, config.dia, config.iob_curve);
    }
    return iob;
}

// Rate at which on-board insulin is currently being consumed (U/min).
inline double iob_activity(const PumpHistory& history, double now_min,
                           const ControllerConfig& config) {
    double activity = 0.0;
    for (const auto& c : detail::iob_contributions(history, now_min, config)) {
        activity += c.units * detail::iob_decay_rate(now_min - c.t_min, config.dia, config.iob_curve);
    }
    return activity;
}

// Basal-Bolus controller: constant basal from the steady-state insulin rate,
// plus a carb bolus when a meal is announced, with a correction term when the
// CGM reading is elevated. Stateless.
inline ControlDecision basal_bolus_decide(double cgm, std::optional<double> meal_cho_g,
                                          const ControllerConfig& config) {
    config.validate();
    require_finite(cgm, "cgm");
    require_nonneg(cgm, "cgm");

    ControlDecision d;
    const double basal_u_min = config.u_2ss * config.bw / kPmolPerUnit;
    d.basal = std::clamp(u_per_min_to_u_per_hr(basal_u_min), 0.0, config.max_basal);
    d.diagnostics.eventual_bg = cgm;
    d.diagnostics.rationale = Rationale::bb_basal_only;

    if (meal_cho_g.has_value()) {
        require_finite(*meal_cho_g, "meal_cho");
        if (*meal_cho_g < 0.0) {
            throw ConfigError("meal_cho must be >= 0");
        }
        double bolus = *meal_cho_g / config.cr;
        if (cgm > kBolusCorrectionThresholdMgDl) {
            bolus += (cgm - config.bg_target) / config.cf;
            d.diagnostics.rationale = Rationale::bb_meal_bolus_corrected;
        } else {
            d.diagnostics.rationale = Rationale::bb_meal_bolus;
        }
        d.bolus = std::clamp(bolus, 0.0, config.max_bolus);
    }
    return d;
}

// Intermediate quantities of one predictive-controller evaluation.
struct GlucoseAssessment {
    double cgm = 0.0;
    double iob = 0.0;        // U
    double activity = 0.0;   // U/min
    double delta = 0.0;      // observed 5-min change (mg/dL)
    double bgi = 0.0;        // predicted 5-min change from insulin alone (mg/dL)
    double deviation = 0.0;  // 30-min extrapolated excess change (mg/dL)
    double eventual_bg = 0.0;
    double slope = 0.0;      // mg/dL per min, least squares over last 3 samples
};

inline constexpr double kCgmCadenceMin = 5.0;

inline GlucoseAssessment openaps_assess(const std::vector<double>& cgm_history,
                                        const PumpHistory& pump_history, double now_min,
                                        const ControllerConfig& config) {
    if (cgm_history.size() < 3) {
        throw ConfigError("openaps needs at least 3 CGM samples of history");
    }
    const std::size_t n = cgm_history.size();
    for (std::size_t i = n - 3; i < n; ++i) {
        require_finite(cgm_history[i], "cgm_history sample");
    }

    GlucoseAssessment a;
    a.cgm = cgm_history[n - 1];
    a.iob = calculate_iob(pump_history, now_min, config);
    a.activity = iob_activity(pump_history, now_min, config);
    a.delta = cgm_history[n - 1] - cgm_history[n - 2];
    a.bgi = -config.isf * a.activity * kCgmCadenceMin;
    a.deviation = (30.0 / kCgmCadenceMin) * (a.delta - a.bgi);
    a.eventual_bg = a.cgm - config.isf * a.iob + a.deviation;

    // Least-squares slope over the last three samples at the 5-min cadence:
    // with x in {-5, 0, +5} this reduces to (y2 - y0) / 10.
    a.slope = (cgm_history[n - 1] - cgm_history[n - 3]) / (2.0 * kCgmCadenceMin);
    return a;
}

// Branch dispatch over an assessment. Exactly one branch fires:
//  - CGM below the suspend threshold: zero temp until glucose recovers
//  - rising but predicted below target: cancel any temp, resume profile basal
//  - falling but predicted above target: cancel any temp
//  - predicted above target: 30-min high temp sized to deliver the insulin
//    requirement (eventualBG - target)/ISF
//  - predicted below target: (re)issue a 30-min zero temp
//  - on target: profile basal
inline ControlDecision openaps_dispatch(const GlucoseAssessment& a,
                                        double current_temp_basal,
                                        const ControllerConfig& config) {
    ControlDecision d;
    d.diagnostics.iob = a.iob;
    d.diagnostics.eventual_bg = a.eventual_bg;
    d.diagnostics.deviation = a.deviation;

    const bool rising = a.slope > 0.0;
    const bool falling = a.slope < 0.0;

    if (a.cgm < kSuspendThresholdMgDl) {
        d.basal = 0.0;
        d.diagnostics.rationale = Rationale::low_glucose_suspend;
    } else if (rising && a.eventual_bg < config.bg_target) {
        d.basal = config.basal_rate;
        d.diagnostics.rationale = Rationale::rising_but_low;
    } else if (falling && a.eventual_bg > config.bg_target) {
        d.basal = config.basal_rate;
        d.diagnostics.rationale = Rationale::falling_but_high;
    } else if (a.eventual_bg > config.bg_target) {
        const double rate = config.basal_rate +
                            2.0 * (a.eventual_bg - config.bg_target) /
                                (config.isf * (kTempBasalDurationMin / kMinutesPerHour));
        d.basal = std::clamp(rate, 0.0, config.max_basal);
        d.diagnostics.rationale = Rationale::high_eventual_temp;
    } else if (a.eventual_bg < config.bg_target) {
        d.basal = 0.0;
        d.diagnostics.rationale = Rationale::low_eventual_zero_temp;
    } else {
        d.basal = current_temp_basal == config.basal_rate ? current_temp_basal
                                                          : config.basal_rate;
        d.diagnostics.rationale = Rationale::on_target;
    }
    d.basal = std::clamp(d.basal, 0.0, config.max_basal);
    return d;
}

inline ControlDecision openaps_decide(const std::vector<double>& cgm_history,
                                      const PumpHistory& pump_history, double now_min,
                                      double current_temp_basal,
                                      const ControllerConfig& config) {
    config.validate();
    const GlucoseAssessment a = openaps_assess(cgm_history, pump_history, now_min, config);
    return openaps_dispatch(a, current_temp_basal, config);
}

// Stateful wrapper that tracks the issued temp basal and its expiry; one
// instance per simulated patient.
class OpenApsController {
public:
    explicit OpenApsController(ControllerConfig config) : config_(std::move(config)) {
        config_.validate();
    }

    ControlDecision decide(const std::vector<double>& cgm_history, double now_min) {
        const double current = temp_remaining_min_ > 0.0 ? temp_rate_ : config_.basal_rate;
        ControlDecision d = openaps_decide(cgm_history, pump_history_, now_min, current, config_);
        switch (d.diagnostics.rationale) {
            case Rationale::rising_but_low:
            case Rationale::falling_but_high:
            case Rationale::on_target:
                temp_remaining_min_ = 0.0;
                break;
            default:
                temp_rate_ = d.basal;
                temp_remaining_min_ = kTempBasalDurationMin;
                break;
        }
        return d;
    }

    // The loop reports what the pump actually delivered over the interval.
    void record_delivery(double t_min, double basal_u_hr, double bolus_u, double interval_min) {
        pump_history_.push(t_min, basal_u_hr, bolus_u);
        if (temp_remaining_min_ > 0.0) {
            temp_remaining_min_ = std::max(0.0, temp_remaining_min_ - interval_min);
        }
    }

    const ControllerConfig& config() const { return config_; }
    const PumpHistory& pump_history() const { return pump_history_; }

private:
    ControllerConfig config_;
    PumpHistory pump_history_;
    double temp_rate_ = 0.0;
    double temp_remaining_min_ = 0.0;
};

} // namespace apsim
