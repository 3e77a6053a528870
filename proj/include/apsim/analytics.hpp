#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/loop.hpp"

namespace apsim {

// Glycemic thresholds used throughout the outcome analysis. In-range is the
// closed interval [70, 180]; the outer buckets are strict, so boundary
// samples count as in range and the three main buckets always sum to 100%.
inline constexpr double kRangeLowMgDl = 70.0;
inline constexpr double kRangeHighMgDl = 180.0;
inline constexpr double kSevereLowMgDl = 54.0;
inline constexpr double kSevereHighMgDl = 250.0;

struct Outcomes {
    double pct_in_range = 0.0;   // [70, 180]
    double pct_above_180 = 0.0;  // > 180
    double pct_below_70 = 0.0;   // < 70
    double pct_below_54 = 0.0;   // < 54
    double pct_above_250 = 0.0;  // > 250
    std::size_t samples = 0;
};

// Low/high glucose hazard labels for one run, judged on the true glucose
// column only - corrupted CGM readings never set a hazard.
struct HazardLabel {
    bool h1 = false;          // any sample below 70
    bool h2 = false;          // any sample above 180
    bool severe_low = false;  // any sample below 54
    bool severe_high = false; // any sample above 250
};

inline Outcomes compute_outcomes(const std::vector<double>& bg) {
    if (bg.empty()) {
        throw ConfigError("cannot compute outcomes of an empty trace");
    }
    Outcomes o;
    o.samples = bg.size();
    std::size_t in = 0, above = 0, below = 0, below54 = 0, above250 = 0;
    for (double v : bg) {
        if (v > kRangeHighMgDl) {
            ++above;
        } else if (v < kRangeLowMgDl) {
            ++below;
        } else {
            ++in;
        }
        if (v < kSevereLowMgDl) ++below54;
        if (v > kSevereHighMgDl) ++above250;
    }
    const double n = static_cast<double>(bg.size());
    o.pct_in_range = 100.0 * in / n;
    o.pct_above_180 = 100.0 * above / n;
    o.pct_below_70 = 100.0 * below / n;
    o.pct_below_54 = 100.0 * below54 / n;
    o.pct_above_250 = 100.0 * above250 / n;
    return o;
}

inline std::vector<double> bg_true_column(const Trace& trace) {
    std::vector<double> bg;
    bg.reserve(trace.size());
    for (const auto& r : trace) {
        bg.push_back(r.bg_true);
    }
    return bg;
}

inline Outcomes compute_outcomes(const Trace& trace) {
    return compute_outcomes(bg_true_column(trace));
}

inline HazardLabel compute_hazards(const Trace& trace) {
    HazardLabel h;
    for (const auto& r : trace) {
        if (r.bg_true < kRangeLowMgDl) h.h1 = true;
        if (r.bg_true > kRangeHighMgDl) h.h2 = true;
        if (r.bg_true < kSevereLowMgDl) h.severe_low = true;
        if (r.bg_true > kSevereHighMgDl) h.severe_high = true;
    }
    return h;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& values) {
    MeanSd out;
    if (values.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = values.size() > 1 ? std::sqrt(ss / (values.size() - 1)) : 0.0;
    return out;
}

// Cohort-level outcome report: per-patient buckets plus mean +/- sd lines.
struct OutcomeReport {
    std::vector<Outcomes> per_patient;
    MeanSd in_range;
    MeanSd above_180;
    MeanSd below_70;
    MeanSd below_54;
};

inline OutcomeReport cohort_outcomes(const std::vector<Trace>& traces) {
    if (traces.empty()) {
        throw ConfigError("cannot compute outcomes of an empty cohort");
    }
    OutcomeReport rep;
    std::vector<double> in, above, below, below54;
    for (const auto& t : traces) {
        const Outcomes o = compute_outcomes(t);
        rep.per_patient.push_back(o);
        in.push_back(o.pct_in_range);
        above.push_back(o.pct_above_180);
        below.push_back(o.pct_below_70);
        below54.push_back(o.pct_below_54);
    }
    rep.in_range = mean_sd(in);
    rep.above_180 = mean_sd(above);
    rep.below_70 = mean_sd(below);
    rep.below_54 = mean_sd(below54);
    return rep;
}

// Time-bucketed in-range percentages (e.g. 30-day buckets for month-by-month
// summaries of long traces).
inline std::vector<Outcomes> bucketed_outcomes(const Trace& trace, double bucket_min) {
    require_positive(bucket_min, "bucket_min");
    if (trace.empty()) {
        throw ConfigError("cannot bucket an empty trace");
    }
    std::vector<Outcomes> out;
    std::vector<double> bucket;
    double bucket_end = trace.front().t_min + bucket_min;
    for (const auto& r : trace) {
        if (r.t_min >= bucket_end) {
            if (!bucket.empty()) {
                out.push_back(compute_outcomes(bucket));
            }
            bucket.clear();
            bucket_end += bucket_min * std::ceil((r.t_min - bucket_end) / bucket_min + 1e-12);
            if (r.t_min >= bucket_end) {
                bucket_end = r.t_min + bucket_min;
            }
        }
        bucket.push_back(r.bg_true);
    }
    if (!bucket.empty()) {
        out.push_back(compute_outcomes(bucket));
    }
    return out;
}

enum class TraceColumn { bg_true, cgm, basal_cmd, bolus_cmd, delivered, total_insulin_u_min };

inline double column_value(const TraceRecord& r, TraceColumn c) {
    switch (c) {
        case TraceColumn::bg_true: return r.bg_true;
        case TraceColumn::cgm: return r.cgm;
        case TraceColumn::basal_cmd: return r.basal_cmd_u_hr;
        case TraceColumn::bolus_cmd: return r.bolus_cmd_u;
        case TraceColumn::delivered: return r.delivered_u_min;
        case TraceColumn::total_insulin_u_min:
            return u_per_hr_to_u_per_min(r.basal_cmd_u_hr) + r.bolus_cmd_u / kCgmCadenceMin;
    }
    return 0.0;
}

// Mean squared error over one column of two aligned traces.
inline double compute_mse(const Trace& a, const Trace& b, TraceColumn column) {
    if (a.size() != b.size() || a.empty()) {
        throw ConfigError("traces must be non-empty and equal length");
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].t_min != b[i].t_min) {
            throw ConfigError("trace timestamps are misaligned");
        }
        const double d = column_value(a[i], column) - column_value(b[i], column);
        ss += d * d;
    }
    return ss / a.size();
}

inline double compute_mse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ConfigError("series must be non-empty and equal length");
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        ss += d * d;
    }
    return ss / a.size();
}

// Hazard-rate aggregation over a campaign: overall and per fault class.
struct CampaignReport {
    struct Bucket {
        std::size_t runs = 0;
        std::size_t hazardous = 0; // h1 or h2
        std::size_t h1 = 0;
        std::size_t h2 = 0;
        double rate() const { return runs == 0 ? 0.0 : static_cast<double>(hazardous) / runs; }
    };
    Bucket overall;
    std::map<std::string, Bucket> by_fault_class;
    std::map<std::string, Bucket> by_model;
    std::map<std::string, Bucket> by_controller;
};

inline std::string fault_class_of(const ExperimentSpec& spec) {
    if (spec.faults.empty()) {
        return "none";
    }
    const FaultSpec& f = spec.faults.front();
    return std::string(to_string(f.target)) + "_" + to_string(f.kind);
}

inline CampaignReport campaign_report(const std::vector<ExperimentSpec>& specs,
                                      const std::vector<Trace>& traces) {
    if (specs.empty() || specs.size() != traces.size()) {
        throw ConfigError("campaign report needs matching non-empty specs and traces");
    }
    CampaignReport rep;
    auto tally = [](CampaignReport::Bucket& b, const HazardLabel& h) {
        ++b.runs;
        if (h.h1) ++b.h1;
        if (h.h2) ++b.h2;
        if (h.h1 || h.h2) ++b.hazardous;
    };
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const HazardLabel h = compute_hazards(traces[i]);
        tally(rep.overall, h);
        tally(rep.by_fault_class[fault_class_of(specs[i])], h);
        tally(rep.by_model[to_string(specs[i].model)], h);
        tally(rep.by_controller[to_string(specs[i].controller)], h);
    }
    return rep;
}

} // namespace apsim
