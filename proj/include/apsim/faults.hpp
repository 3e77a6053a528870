#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/units.hpp"

namespace apsim {

enum class FaultTarget { cgm, insulin };
enum class FaultKind { truncate, hold, add, sub };

inline const char* to_string(FaultTarget t) {
    return t == FaultTarget::cgm ? "cgm" : "insulin";
}

inline const char* to_string(FaultKind k) {
    switch (k) {
        case FaultKind::truncate: return "truncate";
        case FaultKind::hold: return "hold";
        case FaultKind::add: return "add";
        case FaultKind::sub: return "sub";
    }
    return "unknown";
}

// Optional activation predicate evaluated on the patient's glucose.
struct FaultTrigger {
    enum class Kind { none, bg_above, bg_below };
    Kind kind = Kind::none;
    double threshold = 0.0;

    bool satisfied(double bg) const {
        switch (kind) {
            case Kind::none: return true;
            case Kind::bg_above: return bg > threshold;
            case Kind::bg_below: return bg < threshold;
        }
        return true;
    }
};

// One injected fault: a corruption of the CGM or delivered-insulin signal
// over the window [start, start + duration), gated by the trigger.
//  - truncate: force the signal to zero
//  - hold: freeze the last value seen before activation
//  - add/sub: shift by `magnitude` (signal units), re-clipped downstream
struct FaultSpec {
    FaultTarget target = FaultTarget::cgm;
    FaultKind kind = FaultKind::truncate;
    std::optional<double> magnitude;
    double start_min = 0.0;
    double duration_min = 0.0;
    FaultTrigger trigger;

    void validate() const {
        require_nonneg(start_min, "fault.start");
        require_nonneg(duration_min, "fault.duration");
        const bool needs_mag = kind == FaultKind::add || kind == FaultKind::sub;
        if (needs_mag && !magnitude.has_value()) {
            throw ConfigError("add/sub fault requires a magnitude");
        }
        if (!needs_mag && magnitude.has_value()) {
            throw ConfigError("magnitude is only valid for add/sub faults");
        }
        if (magnitude.has_value()) {
            require_finite(*magnitude, "fault.magnitude");
        }
    }

    bool in_window(double now_min) const {
        return now_min >= start_min && now_min < start_min + duration_min;
    }
};

struct FaultResult {
    double value = 0.0;
    bool active = false;
};

// Total function: outside the window or with an unsatisfied trigger the
// signal passes through untouched. `last_clean_value` is the caller-tracked
// value from the last inactive instant, used by hold.
inline FaultResult apply_fault(const FaultSpec& spec, double signal_value, double now_min,
                               double last_clean_value, double trigger_bg) {
    spec.validate();
    require_nonneg(now_min, "now");
    if (!spec.in_window(now_min) || !spec.trigger.satisfied(trigger_bg)) {
        return {signal_value, false};
    }
    switch (spec.kind) {
        case FaultKind::truncate: return {0.0, true};
        case FaultKind::hold: return {last_clean_value, true};
        case FaultKind::add: return {signal_value + *spec.magnitude, true};
        case FaultKind::sub: return {signal_value - *spec.magnitude, true};
    }
    return {signal_value, false};
}

// Stateful tap on one scalar signal path. Tracks the pre-activation value per
// fault (for hold) and re-clips the corrupted signal to the downstream device
// range so faults cannot produce unrepresentable values.
class FaultChannel {
public:
    FaultChannel(std::vector<FaultSpec> faults, double clip_lo, double clip_hi)
        : clip_lo_(clip_lo), clip_hi_(clip_hi) {
        for (auto& f : faults) {
            f.validate();
            states_.push_back({std::move(f), std::nullopt});
        }
    }

    // `applicable` filters fault kinds for paths where add/sub has no meaning
    // (e.g. the discrete bolus channel shares truncate/hold with the basal
    // rate channel but ignores magnitude shifts).
    double process(double clean_value, double now_min, double trigger_bg, bool& any_active,
                   bool shifts_apply = true) {
        double value = clean_value;
        for (auto& st : states_) {
            const bool shift = st.spec.kind == FaultKind::add || st.spec.kind == FaultKind::sub;
            if (shift && !shifts_apply) {
                continue;
            }
            const double last = st.last_clean.value_or(value);
            const FaultResult r = apply_fault(st.spec, value, now_min, last, trigger_bg);
            if (r.active) {
                if (!st.last_clean.has_value()) {
                    st.last_clean = value;
                }
                value = r.value;
                any_active = true;
            } else {
                st.last_clean = value;
            }
        }
        return std::clamp(value, clip_lo_, clip_hi_);
    }

private:
    struct State {
        FaultSpec spec;
        std::optional<double> last_clean;
    };
    std::vector<State> states_;
    double clip_lo_;
    double clip_hi_;
};

// A named scenario, usually a single fault; the campaign axes instantiate
// its start/duration.
struct FaultScenario {
    std::string name;
    std::vector<FaultSpec> faults;
};

} // namespace apsim
