#pragma once

#include "apsim/campaign.hpp"
#include "apsim/controllers.hpp"
#include "apsim/loop.hpp"
#include "apsim/mvp.hpp"
#include "apsim/uva.hpp"

namespace apsim {

inline constexpr double kDefaultBodyWeightKg = 75.0;

// Controller settings matched to a patient profile: the steady-state insulin
// rate holds the profile at the glucose target, and the carb/correction
// factors come from the body-weight dosing rules. Campaign and cohort runs
// use the nominal profile's settings for every patient, population-style.
inline ControllerConfig matched_controller_config(const MvpProfile& profile,
                                                  double bw_kg = kDefaultBodyWeightKg,
                                                  double target_bg = 120.0) {
    const DosingParams dosing = derive_dosing_params(bw_kg);
    const double basal_u_min = mvp_basal_dose_for_bg(profile, target_bg) / kMicroUnitsPerUnit;
    ControllerConfig c;
    c.bg_target = target_bg;
    c.bw = bw_kg;
    c.u_2ss = basal_u_min * kPmolPerUnit / bw_kg;
    c.basal_rate = u_per_min_to_u_per_hr(basal_u_min);
    c.isf = dosing.isf;
    c.cr = dosing.cr;
    c.cf = dosing.cf;
    return c;
}

inline ControllerConfig matched_controller_config(const UvaProfile& profile,
                                                  double target_bg = 120.0) {
    const DosingParams dosing = derive_dosing_params(profile.bw);
    const double basal_u_min = uva_basal_rate_pmol_min(profile) / kPmolPerUnit;
    ControllerConfig c;
    c.bg_target = target_bg;
    c.bw = profile.bw;
    c.u_2ss = profile.i_b * profile.k_e * profile.v_i;
    c.basal_rate = u_per_min_to_u_per_hr(basal_u_min);
    c.isf = dosing.isf;
    c.cr = dosing.cr;
    c.cf = dosing.cf;
    return c;
}

// 12.5 h closed loop on the nominal adult MVP patient with one 50 g meal.
inline ExperimentSpec nominal_mvp_experiment() {
    ExperimentSpec spec;
    spec.name = "nominal_mvp";
    spec.model = ModelKind::mvp;
    spec.mvp_profile = MvpProfile{};
    spec.controller = ControllerKind::openaps;
    spec.controller_config = matched_controller_config(spec.mvp_profile);
    spec.pump.output_unit = PumpOutputUnit::u_per_min;
    spec.meals = {{180.0, 50.0}};
    spec.initial_bg = 120.0;
    spec.duration_min = 750.0;
    spec.seed = 1;
    return spec;
}

inline ExperimentSpec nominal_uva_experiment() {
    ExperimentSpec spec;
    spec.name = "nominal_uva";
    spec.model = ModelKind::uva;
    spec.uva_profile = uva_nominal_profile();
    spec.controller = ControllerKind::basal_bolus;
    spec.controller_config = matched_controller_config(spec.uva_profile);
    spec.pump.output_unit = PumpOutputUnit::pmol_per_min;
    spec.meals = {{180.0, 50.0}};
    spec.initial_bg = 120.0;
    spec.duration_min = 750.0;
    spec.seed = 1;
    return spec;
}

inline ExperimentSpec default_campaign_base(ModelKind model) {
    return model == ModelKind::mvp ? nominal_mvp_experiment() : nominal_uva_experiment();
}

} // namespace apsim
