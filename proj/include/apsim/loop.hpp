#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apsim/controllers.hpp"
#include "apsim/devices.hpp"
#include "apsim/errors.hpp"
#include "apsim/faults.hpp"
#include "apsim/mvp.hpp"
#include "apsim/rng.hpp"
#include "apsim/units.hpp"
#include "apsim/uva.hpp"

namespace apsim {

enum class ModelKind { mvp, uva };
enum class ControllerKind { basal_bolus, openaps, fixed_basal };

inline const char* to_string(ModelKind m) { return m == ModelKind::mvp ? "mvp" : "uva"; }

inline const char* to_string(ControllerKind c) {
    switch (c) {
        case ControllerKind::basal_bolus: return "basal_bolus";
        case ControllerKind::openaps: return "openaps";
        case ControllerKind::fixed_basal: return "fixed_basal";
    }
    return "unknown";
}

struct MealEvent {
    double t_min = 0.0;
    double cho_g = 0.0;
};

enum class BolusDelivery { front_load, spread };

// Everything needed to run one experiment. Expanded campaign specs are fully
// resolved (no sampling left), so a spec alone reproduces its trace.
struct ExperimentSpec {
    std::string name = "experiment";
    ModelKind model = ModelKind::mvp;
    MvpProfile mvp_profile;
    UvaProfile uva_profile;
    ControllerKind controller = ControllerKind::basal_bolus;
    ControllerConfig controller_config;
    SensorConfig sensor;
    PumpConfig pump;
    std::vector<MealEvent> meals;
    double initial_bg = 120.0;
    double duration_min = 750.0;
    std::vector<FaultSpec> faults;
    std::uint64_t seed = 0;
    BolusDelivery bolus_delivery = BolusDelivery::front_load;
    bool announce_meals_to_openaps = false;

    void validate() const {
        if (model == ModelKind::mvp) {
            mvp_profile.validate();
            if (pump.output_unit != PumpOutputUnit::u_per_min) {
                throw ConfigError("mvp model expects pump output in U/min");
            }
        } else {
            uva_profile.validate();
            if (pump.output_unit != PumpOutputUnit::pmol_per_min) {
                throw ConfigError("uva model expects pump output in pmol/min");
            }
        }
        controller_config.validate();
        sensor.validate();
        pump.validate();
        require_positive(duration_min, "duration");
        require_nonneg(initial_bg, "initial_bg");
        for (const auto& m : meals) {
            require_nonneg(m.cho_g, "meal.cho_g");
            if (m.t_min < 0.0 || m.t_min >= duration_min) {
                throw ConfigError("meal time must lie within [0, duration)");
            }
        }
        for (const auto& f : faults) {
            f.validate();
        }
    }
};

// One sampling instant of a run at the control cadence.
struct TraceRecord {
    double t_min = 0.0;
    double bg_true = 0.0;        // mg/dL, model state before this interval
    double cgm = 0.0;            // mg/dL, after noise, clipping and faults
    double basal_cmd_u_hr = 0.0; // controller command, pre-pump
    double bolus_cmd_u = 0.0;    // controller command, pre-pump
    double delivered_u_min = 0.0;// interval-average delivery reaching the patient
    double iob_u = 0.0;
    double cho_g = 0.0;          // carbs ingested at this step
    bool fault_active = false;
    Rationale rationale = Rationale::fixed_basal;
};

using Trace = std::vector<TraceRecord>;

namespace detail {

// The patient model behind a common step/observe surface. Insulin enters in
// U/min and converts to the model's native unit at this boundary.
class Patient {
public:
    Patient(const ExperimentSpec& spec, double init_basal_u_min) : model_(spec.model) {
        if (model_ == ModelKind::mvp) {
            mvp_profile_ = spec.mvp_profile;
            mvp_ = mvp_init_state(mvp_profile_, spec.initial_bg,
                                  units_to_micro(init_basal_u_min));
        } else {
            uva_profile_ = spec.uva_profile;
            uva_ = uva_init_state(uva_profile_, spec.initial_bg,
                                  units_to_pmol(init_basal_u_min));
        }
    }

    double observe_bg() const {
        return model_ == ModelKind::mvp ? mvp_.bg : uva_observe_bg(uva_, uva_profile_);
    }

    void ingest(double cho_g) {
        auto& meals = model_ == ModelKind::mvp ? mvp_.meals : uva_.meals;
        meals.push_back({0.0, cho_g * 1000.0}); // g -> mg
    }

    void step(double insulin_u_min, double dt_min) {
        if (model_ == ModelKind::mvp) {
            mvp_ = mvp_step(mvp_, mvp_profile_, units_to_micro(insulin_u_min), dt_min);
        } else {
            uva_ = uva_step(uva_, uva_profile_, units_to_pmol(insulin_u_min), dt_min);
        }
    }

    bool finite() const {
        if (model_ == ModelKind::mvp) {
            return std::isfinite(mvp_.bg) && std::isfinite(mvp_.i_sc) &&
                   std::isfinite(mvp_.i_p) && std::isfinite(mvp_.i_eff);
        }
        return std::isfinite(uva_.g_p) && std::isfinite(uva_.g_t) &&
               std::isfinite(uva_.i_p) && std::isfinite(uva_.x);
    }

private:
    ModelKind model_;
    MvpProfile mvp_profile_;
    UvaProfile uva_profile_;
    MvpState mvp_;
    UvaState uva_;
};

inline double profile_basal_u_min(const ExperimentSpec& spec) {
    if (spec.controller == ControllerKind::fixed_basal) {
        return u_per_hr_to_u_per_min(spec.controller_config.basal_rate);
    }
    return spec.controller_config.u_2ss * spec.controller_config.bw / kPmolPerUnit;
}

// Carbs ingested within [t, t + interval).
inline double carbs_at_step(const std::vector<MealEvent>& meals, double t, double interval) {
    double cho = 0.0;
    for (const auto& m : meals) {
        if (m.t_min >= t && m.t_min < t + interval) {
            cho += m.cho_g;
        }
    }
    return cho;
}

// Integrates one control interval with 1-min substeps; the bolus is either
// front-loaded into the first substep or spread evenly.
inline void integrate_interval(Patient& patient, double basal_u_min, double bolus_u,
                               double interval_min, BolusDelivery delivery) {
    const int n = static_cast<int>(std::lround(interval_min));
    for (int k = 0; k < n; ++k) {
        double rate = basal_u_min;
        if (delivery == BolusDelivery::front_load) {
            if (k == 0) rate += bolus_u; // U over one minute
        } else {
            rate += bolus_u / interval_min;
        }
        patient.step(rate, 1.0);
    }
}

} // namespace detail

// Closed loop at the sensor cadence: read CGM through the sensor-path fault
// tap, decide, deliver through the pump and the actuation-path fault tap,
// then integrate the patient model with 1-min substeps. Deterministic in the
// spec's seed.
inline Trace run_closed_loop(const ExperimentSpec& spec) {
    spec.validate();
    const double interval = spec.sensor.sample_interval;
    const double init_basal_u_min = detail::profile_basal_u_min(spec);

    detail::Patient patient(spec, init_basal_u_min);
    Rng rng(spec.seed);

    std::vector<FaultSpec> cgm_faults;
    std::vector<FaultSpec> insulin_faults;
    for (const auto& f : spec.faults) {
        (f.target == FaultTarget::cgm ? cgm_faults : insulin_faults).push_back(f);
    }
    FaultChannel cgm_tap(cgm_faults, spec.sensor.range_min, spec.sensor.range_max);
    FaultChannel basal_tap(insulin_faults, 0.0, u_per_hr_to_u_per_min(spec.pump.max_basal));
    FaultChannel bolus_tap(insulin_faults, 0.0, spec.pump.max_bolus);

    OpenApsController openaps(spec.controller_config);
    std::vector<double> cgm_history;

    Trace trace;
    const long n_steps = static_cast<long>(spec.duration_min / interval);
    trace.reserve(n_steps);

    for (long i = 0; i < n_steps; ++i) {
        const double t = i * interval;
        if (!patient.finite()) {
            throw NumericError("patient state became non-finite", i);
        }
        const double bg_true = patient.observe_bg();

        bool fault_active = false;
        const double clean_cgm = cgm_read(bg_true, spec.sensor, rng);
        const double cgm = cgm_tap.process(clean_cgm, t, bg_true, fault_active);

        if (cgm_history.empty()) {
            // Seed two pre-run readings so the predictive controller has the
            // three samples it requires from the very first decision.
            cgm_history.assign(2, cgm);
        }
        cgm_history.push_back(cgm);

        const double cho = detail::carbs_at_step(spec.meals, t, interval);

        ControlDecision decision;
        switch (spec.controller) {
            case ControllerKind::fixed_basal:
                decision.basal = std::clamp(spec.controller_config.basal_rate, 0.0,
                                            spec.controller_config.max_basal);
                decision.diagnostics.rationale = Rationale::fixed_basal;
                break;
            case ControllerKind::basal_bolus:
                decision = basal_bolus_decide(
                    cgm, cho > 0.0 ? std::optional<double>(cho) : std::nullopt,
                    spec.controller_config);
                break;
            case ControllerKind::openaps:
                decision = openaps.decide(cgm_history, t);
                if (spec.announce_meals_to_openaps && cho > 0.0) {
                    const ControlDecision meal = basal_bolus_decide(
                        cgm, cho, spec.controller_config);
                    decision.bolus = meal.bolus;
                }
                break;
        }

        const PumpDelivery delivery = pump_deliver(decision, spec.pump);
        const double basal_u_min = basal_tap.process(
            u_per_hr_to_u_per_min(delivery.basal_u_hr), t, bg_true, fault_active);
        const double bolus_u = bolus_tap.process(delivery.bolus_u, t, bg_true, fault_active,
                                                 /*shifts_apply=*/false);

        if (spec.controller == ControllerKind::openaps) {
            // The pump logs its own deliveries; a downstream fault is invisible
            // to the controller, exactly like an occluded or tampered line.
            openaps.record_delivery(t, delivery.basal_u_hr, delivery.bolus_u, interval);
        }

        TraceRecord rec;
        rec.t_min = t;
        rec.bg_true = bg_true;
        rec.cgm = cgm;
        rec.basal_cmd_u_hr = decision.basal;
        rec.bolus_cmd_u = decision.bolus;
        rec.delivered_u_min = basal_u_min + bolus_u / interval;
        rec.iob_u = decision.diagnostics.iob;
        rec.cho_g = cho;
        rec.fault_active = fault_active;
        rec.rationale = decision.diagnostics.rationale;
        trace.push_back(rec);

        if (cho > 0.0) {
            patient.ingest(cho);
        }
        detail::integrate_interval(patient, basal_u_min, bolus_u, interval,
                                   spec.bolus_delivery);
    }
    return trace;
}

// Inputs replay modes need beyond the trace itself; a run's embedded spec
// carries all of them.
struct ReplaySetup {
    ModelKind model = ModelKind::mvp;
    MvpProfile mvp_profile;
    UvaProfile uva_profile;
    PumpConfig pump;
    double initial_bg = 120.0;
    double init_basal_u_min = 0.0;
    BolusDelivery bolus_delivery = BolusDelivery::front_load;

    static ReplaySetup from_spec(const ExperimentSpec& spec) {
        ReplaySetup s;
        s.model = spec.model;
        s.mvp_profile = spec.mvp_profile;
        s.uva_profile = spec.uva_profile;
        s.pump = spec.pump;
        s.initial_bg = spec.initial_bg;
        s.init_basal_u_min = detail::profile_basal_u_min(spec);
        s.bolus_delivery = spec.bolus_delivery;
        return s;
    }
};

inline void require_uniform_cadence(const Trace& trace) {
    if (trace.size() < 2) {
        throw ConfigError("trace needs at least 2 records");
    }
    const double cadence = trace[1].t_min - trace[0].t_min;
    if (cadence <= 0.0) {
        throw ConfigError("trace timestamps must be increasing");
    }
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (trace[i].t_min - trace[i - 1].t_min != cadence) {
            throw ConfigError("trace cadence is not uniform");
        }
    }
}

// Open-loop glucose reconstruction: drive the patient model with the trace's
// commanded insulin re-applied through the pump transform, with meals taken
// from the cho column. On a no-noise, no-fault trace this reproduces bg_true
// bit-identically.
inline std::vector<double> replay_insulin(const ReplaySetup& setup, const Trace& trace) {
    require_uniform_cadence(trace);
    const double interval = trace[1].t_min - trace[0].t_min;

    // The spec that produced the trace validated against the same pump limits.
    detail::Patient patient(
        [&] {
            ExperimentSpec s;
            s.model = setup.model;
            s.mvp_profile = setup.mvp_profile;
            s.uva_profile = setup.uva_profile;
            s.initial_bg = setup.initial_bg;
            return s;
        }(),
        setup.init_basal_u_min);

    std::vector<double> bg;
    bg.reserve(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (!patient.finite()) {
            throw NumericError("patient state became non-finite", static_cast<long>(i));
        }
        bg.push_back(patient.observe_bg());

        ControlDecision cmd;
        cmd.basal = trace[i].basal_cmd_u_hr;
        cmd.bolus = trace[i].bolus_cmd_u;
        const PumpDelivery delivery = pump_deliver(cmd, setup.pump);

        if (trace[i].cho_g > 0.0) {
            patient.ingest(trace[i].cho_g);
        }
        detail::integrate_interval(patient, u_per_hr_to_u_per_min(delivery.basal_u_hr),
                                   delivery.bolus_u, interval, setup.bolus_delivery);
    }
    return bg;
}

struct InsulinCommand {
    double t_min = 0.0;
    double basal_u_hr = 0.0;
    double bolus_u = 0.0;
    Rationale rationale = Rationale::fixed_basal;
};

// Open-loop controller replay: feed a fixed glucose sequence to a controller
// and emit its commands, for comparison against a reference pump trace. The
// predictive controller's history is fed with its own commands (delivery
// assumed as commanded).
inline std::vector<InsulinCommand> replay_bg(ControllerKind controller,
                                             const ControllerConfig& config,
                                             const std::vector<double>& bg_trace,
                                             const std::vector<MealEvent>& meals,
                                             double cadence_min = kCgmCadenceMin) {
    config.validate();
    if (bg_trace.empty()) {
        throw ConfigError("bg trace is empty");
    }
    require_positive(cadence_min, "cadence");

    OpenApsController openaps(config);
    std::vector<double> cgm_history;
    std::vector<InsulinCommand> out;
    out.reserve(bg_trace.size());

    for (std::size_t i = 0; i < bg_trace.size(); ++i) {
        const double t = i * cadence_min;
        const double cgm = bg_trace[i];
        if (cgm_history.empty()) {
            cgm_history.assign(2, cgm);
        }
        cgm_history.push_back(cgm);
        const double cho = detail::carbs_at_step(meals, t, cadence_min);

        ControlDecision decision;
        switch (controller) {
            case ControllerKind::fixed_basal:
                decision.basal = std::clamp(config.basal_rate, 0.0, config.max_basal);
                decision.diagnostics.rationale = Rationale::fixed_basal;
                break;
            case ControllerKind::basal_bolus:
                decision = basal_bolus_decide(
                    cgm, cho > 0.0 ? std::optional<double>(cho) : std::nullopt, config);
                break;
            case ControllerKind::openaps:
                decision = openaps.decide(cgm_history, t);
                openaps.record_delivery(t, decision.basal, decision.bolus, cadence_min);
                break;
        }
        out.push_back({t, decision.basal, decision.bolus, decision.diagnostics.rationale});
    }
    return out;
}

} // namespace apsim
