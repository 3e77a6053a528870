#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apsim/analytics.hpp"
#include "apsim/campaign.hpp"
#include "apsim/errors.hpp"
#include "apsim/loop.hpp"
#include "apsim/sysid.hpp"

namespace apsim {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Exact CSV header of a trace file, one row per control step.
inline constexpr const char* kTraceHeader =
    "t_min,bg_true,cgm,basal_cmd_Uhr,bolus_cmd_U,delivered_Umin,iob_U,cho_g,"
    "fault_active,rationale";

// --- strict JSON access -----------------------------------------------------
// Violations report the JSON path of the offending node.

namespace jsonio {

inline ConfigError schema_error(const std::string& path, const std::string& why) {
    return ConfigError("schema violation at " + path + ": " + why);
}

inline const json& member(const json& j, const std::string& path, const std::string& key) {
    if (!j.is_object()) {
        throw schema_error(path, "expected an object");
    }
    auto it = j.find(key);
    if (it == j.end()) {
        throw schema_error(path + "." + key, "missing required field");
    }
    return *it;
}

inline double number(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_number()) {
        throw schema_error(path + "." + key, "expected a number");
    }
    return v.get<double>();
}

inline double number_or(const json& j, const std::string& path, const std::string& key,
                        double fallback) {
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    return number(j, path, key);
}

inline std::uint64_t uinteger_or(const json& j, const std::string& path,
                                 const std::string& key, std::uint64_t fallback) {
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
        throw schema_error(path + "." + key, "expected an integer");
    }
    return v.get<std::uint64_t>();
}

inline std::string text(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_string()) {
        throw schema_error(path + "." + key, "expected a string");
    }
    return v.get<std::string>();
}

inline std::string text_or(const json& j, const std::string& path, const std::string& key,
                           const std::string& fallback) {
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    return text(j, path, key);
}

inline bool boolean_or(const json& j, const std::string& path, const std::string& key,
                       bool fallback) {
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_boolean()) {
        throw schema_error(path + "." + key, "expected a boolean");
    }
    return v.get<bool>();
}

inline void reject_unknown(const json& j, const std::string& path,
                           const std::vector<std::string>& allowed) {
    if (!j.is_object()) {
        throw schema_error(path, "expected an object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw schema_error(path + "." + it.key(), "unknown field");
        }
    }
}

inline void check_schema_version(const json& j, const std::string& path) {
    const double v = number_or(j, path, "schema_version", kSchemaVersion);
    if (static_cast<int>(v) != kSchemaVersion) {
        throw schema_error(path + ".schema_version",
                           "unsupported version " + std::to_string(static_cast<int>(v)));
    }
}

} // namespace jsonio

// --- profiles ----------------------------------------------------------------

inline json mvp_profile_to_json(const MvpProfile& p) {
    return json{{"c_i", p.c_i},   {"tau_1", p.tau_1}, {"tau_2", p.tau_2},
                {"v_g", p.v_g},   {"p_2", p.p_2},     {"egp", p.egp},
                {"gezi", p.gezi}, {"s_i", p.s_i},     {"tau_m", p.tau_m}};
}

inline MvpProfile mvp_profile_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(j, path,
                           {"c_i", "tau_1", "tau_2", "v_g", "p_2", "egp", "gezi", "s_i",
                            "tau_m"});
    MvpProfile p;
    p.c_i = jsonio::number(j, path, "c_i");
    p.tau_1 = jsonio::number(j, path, "tau_1");
    p.tau_2 = jsonio::number(j, path, "tau_2");
    p.v_g = jsonio::number(j, path, "v_g");
    p.p_2 = jsonio::number(j, path, "p_2");
    p.egp = jsonio::number(j, path, "egp");
    p.gezi = jsonio::number(j, path, "gezi");
    p.s_i = jsonio::number(j, path, "s_i");
    p.tau_m = jsonio::number(j, path, "tau_m");
    p.validate();
    return p;
}

inline json uva_profile_to_json(const UvaProfile& p) {
    return json{{"k_1", p.k_1},     {"k_2", p.k_2},     {"kp_1", p.kp_1},
                {"kp_2", p.kp_2},   {"kp_3", p.kp_3},   {"k_i", p.k_i},
                {"u_ii", p.u_ii},   {"v_g", p.v_g},     {"g_pb", p.g_pb},
                {"bw", p.bw},       {"v_i", p.v_i},     {"k_a", p.k_a},
                {"k_e", p.k_e},     {"v_m0", p.v_m0},   {"v_mx", p.v_mx},
                {"k_m0", p.k_m0},   {"p_2u", p.p_2u},   {"i_b", p.i_b},
                {"tau_m", p.tau_m}, {"hypo_boost_enabled", p.hypo_boost_enabled},
                {"hypo_boost_factor", p.hypo_boost_factor}};
}

inline UvaProfile uva_profile_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(
        j, path, {"k_1", "k_2", "kp_1", "kp_2", "kp_3", "k_i", "u_ii", "v_g", "g_pb",
                  "bw", "v_i", "k_a", "k_e", "v_m0", "v_mx", "k_m0", "p_2u", "i_b",
                  "tau_m", "hypo_boost_enabled", "hypo_boost_factor"});
    UvaProfile p;
    p.k_1 = jsonio::number(j, path, "k_1");
    p.k_2 = jsonio::number(j, path, "k_2");
    p.kp_1 = jsonio::number(j, path, "kp_1");
    p.kp_2 = jsonio::number(j, path, "kp_2");
    p.kp_3 = jsonio::number(j, path, "kp_3");
    p.k_i = jsonio::number(j, path, "k_i");
    p.u_ii = jsonio::number(j, path, "u_ii");
    p.v_g = jsonio::number(j, path, "v_g");
    p.g_pb = jsonio::number(j, path, "g_pb");
    p.bw = jsonio::number(j, path, "bw");
    p.v_i = jsonio::number(j, path, "v_i");
    p.k_a = jsonio::number(j, path, "k_a");
    p.k_e = jsonio::number(j, path, "k_e");
    p.v_m0 = jsonio::number(j, path, "v_m0");
    p.v_mx = jsonio::number(j, path, "v_mx");
    p.k_m0 = jsonio::number(j, path, "k_m0");
    p.p_2u = jsonio::number(j, path, "p_2u");
    p.i_b = jsonio::number(j, path, "i_b");
    p.tau_m = jsonio::number(j, path, "tau_m");
    p.hypo_boost_enabled = jsonio::boolean_or(j, path, "hypo_boost_enabled", false);
    p.hypo_boost_factor = jsonio::number_or(j, path, "hypo_boost_factor", 1.5);
    p.validate();
    return p;
}

// Units sidecar map, written next to params in every profile file.
inline json mvp_units_json() {
    return json{{"c_i", "mL/min"},      {"tau_1", "min"},  {"tau_2", "min"},
                {"v_g", "dL"},          {"p_2", "1/min"},  {"egp", "mg/dL/min"},
                {"gezi", "1/min"},      {"s_i", "mL/uU/min"}, {"tau_m", "min"}};
}

inline json uva_units_json() {
    return json{{"k_1", "1/min"},   {"k_2", "1/min"},  {"kp_1", "mg/kg/min"},
                {"kp_2", "1/min"},  {"kp_3", "mg/kg/min per pmol/L"},
                {"k_i", "1/min"},   {"u_ii", "mg/kg/min"}, {"v_g", "dL/kg"},
                {"g_pb", "mg/kg"},  {"bw", "kg"},      {"v_i", "L/kg"},
                {"k_a", "1/min"},   {"k_e", "1/min"},  {"v_m0", "mg/kg/min"},
                {"v_mx", "mg/kg/min per pmol/L"},      {"k_m0", "mg/kg"},
                {"p_2u", "1/min"},  {"i_b", "pmol/L"}, {"tau_m", "min"}};
}

struct ProfileFile {
    ModelKind model = ModelKind::mvp;
    std::string name;
    MvpProfile mvp;
    UvaProfile uva;
};

inline json profile_file_to_json(const ProfileFile& p) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["model"] = to_string(p.model);
    j["name"] = p.name;
    if (p.model == ModelKind::mvp) {
        j["params"] = mvp_profile_to_json(p.mvp);
        j["units"] = mvp_units_json();
    } else {
        j["params"] = uva_profile_to_json(p.uva);
        j["units"] = uva_units_json();
    }
    return j;
}

inline ModelKind model_from_string(const std::string& s, const std::string& path) {
    if (s == "mvp") return ModelKind::mvp;
    if (s == "uva") return ModelKind::uva;
    throw jsonio::schema_error(path, "model must be 'mvp' or 'uva'");
}

inline ControllerKind controller_from_string(const std::string& s, const std::string& path) {
    if (s == "basal_bolus") return ControllerKind::basal_bolus;
    if (s == "openaps") return ControllerKind::openaps;
    if (s == "fixed_basal") return ControllerKind::fixed_basal;
    throw jsonio::schema_error(path, "controller must be basal_bolus, openaps or fixed_basal");
}

inline ProfileFile profile_file_from_json(const json& j, const std::string& path = "$") {
    jsonio::reject_unknown(j, path, {"schema_version", "model", "name", "params", "units"});
    jsonio::check_schema_version(j, path);
    ProfileFile p;
    p.model = model_from_string(jsonio::text(j, path, "model"), path + ".model");
    p.name = jsonio::text_or(j, path, "name", "unnamed");
    const json& params = jsonio::member(j, path, "params");
    if (p.model == ModelKind::mvp) {
        p.mvp = mvp_profile_from_json(params, path + ".params");
    } else {
        p.uva = uva_profile_from_json(params, path + ".params");
    }
    return p;
}

// --- experiment specs ---------------------------------------------------------

inline json fault_to_json(const FaultSpec& f) {
    json j;
    j["target"] = to_string(f.target);
    j["kind"] = to_string(f.kind);
    if (f.magnitude.has_value()) {
        j["magnitude"] = *f.magnitude;
    }
    j["start_min"] = f.start_min;
    j["duration_min"] = f.duration_min;
    if (f.trigger.kind != FaultTrigger::Kind::none) {
        j["trigger"] = json{
            {"kind", f.trigger.kind == FaultTrigger::Kind::bg_above ? "bg_above" : "bg_below"},
            {"threshold", f.trigger.threshold}};
    }
    return j;
}

inline FaultSpec fault_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(j, path,
                           {"target", "kind", "magnitude", "start_min", "duration_min",
                            "trigger"});
    FaultSpec f;
    const std::string target = jsonio::text(j, path, "target");
    if (target == "cgm") {
        f.target = FaultTarget::cgm;
    } else if (target == "insulin") {
        f.target = FaultTarget::insulin;
    } else {
        throw jsonio::schema_error(path + ".target", "must be 'cgm' or 'insulin'");
    }
    const std::string kind = jsonio::text(j, path, "kind");
    if (kind == "truncate") {
        f.kind = FaultKind::truncate;
    } else if (kind == "hold") {
        f.kind = FaultKind::hold;
    } else if (kind == "add") {
        f.kind = FaultKind::add;
    } else if (kind == "sub") {
        f.kind = FaultKind::sub;
    } else {
        throw jsonio::schema_error(path + ".kind", "must be truncate, hold, add or sub");
    }
    if (j.contains("magnitude")) {
        f.magnitude = jsonio::number(j, path, "magnitude");
    }
    f.start_min = jsonio::number_or(j, path, "start_min", 0.0);
    f.duration_min = jsonio::number(j, path, "duration_min");
    if (j.contains("trigger")) {
        const json& t = j.at("trigger");
        const std::string tpath = path + ".trigger";
        jsonio::reject_unknown(t, tpath, {"kind", "threshold"});
        const std::string tk = jsonio::text(t, tpath, "kind");
        if (tk == "bg_above") {
            f.trigger.kind = FaultTrigger::Kind::bg_above;
        } else if (tk == "bg_below") {
            f.trigger.kind = FaultTrigger::Kind::bg_below;
        } else {
            throw jsonio::schema_error(tpath + ".kind", "must be bg_above or bg_below");
        }
        f.trigger.threshold = jsonio::number(t, tpath, "threshold");
    }
    f.validate();
    return f;
}

inline json controller_config_to_json(const ControllerConfig& c) {
    return json{{"bg_target", c.bg_target},
                {"bg_range_low", c.bg_range_low},
                {"bg_range_high", c.bg_range_high},
                {"isf", c.isf},
                {"cr", c.cr},
                {"cf", c.cf},
                {"basal_rate", c.basal_rate},
                {"u_2ss", c.u_2ss},
                {"bw", c.bw},
                {"dia", c.dia},
                {"max_basal", c.max_basal},
                {"max_bolus", c.max_bolus},
                {"iob_curve", c.iob_curve == IobCurve::linear ? "linear" : "exponential"}};
}

inline ControllerConfig controller_config_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(j, path,
                           {"bg_target", "bg_range_low", "bg_range_high", "isf", "cr", "cf",
                            "basal_rate", "u_2ss", "bw", "dia", "max_basal", "max_bolus",
                            "iob_curve"});
    ControllerConfig c;
    c.bg_target = jsonio::number_or(j, path, "bg_target", c.bg_target);
    c.bg_range_low = jsonio::number_or(j, path, "bg_range_low", c.bg_range_low);
    c.bg_range_high = jsonio::number_or(j, path, "bg_range_high", c.bg_range_high);
    c.isf = jsonio::number_or(j, path, "isf", c.isf);
    c.cr = jsonio::number_or(j, path, "cr", c.cr);
    c.cf = jsonio::number_or(j, path, "cf", c.cf);
    c.basal_rate = jsonio::number_or(j, path, "basal_rate", c.basal_rate);
    c.u_2ss = jsonio::number_or(j, path, "u_2ss", c.u_2ss);
    c.bw = jsonio::number_or(j, path, "bw", c.bw);
    c.dia = jsonio::number_or(j, path, "dia", c.dia);
    c.max_basal = jsonio::number_or(j, path, "max_basal", c.max_basal);
    c.max_bolus = jsonio::number_or(j, path, "max_bolus", c.max_bolus);
    const std::string curve = jsonio::text_or(j, path, "iob_curve", "linear");
    if (curve == "linear") {
        c.iob_curve = IobCurve::linear;
    } else if (curve == "exponential") {
        c.iob_curve = IobCurve::exponential;
    } else {
        throw jsonio::schema_error(path + ".iob_curve", "must be linear or exponential");
    }
    c.validate();
    return c;
}

inline json sensor_to_json(const SensorConfig& s) {
    return json{{"noise_sd", s.noise_sd},
                {"range_min", s.range_min},
                {"range_max", s.range_max},
                {"sample_interval", s.sample_interval}};
}

inline SensorConfig sensor_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(j, path, {"noise_sd", "range_min", "range_max", "sample_interval"});
    SensorConfig s;
    s.noise_sd = jsonio::number_or(j, path, "noise_sd", s.noise_sd);
    s.range_min = jsonio::number_or(j, path, "range_min", s.range_min);
    s.range_max = jsonio::number_or(j, path, "range_max", s.range_max);
    s.sample_interval = jsonio::number_or(j, path, "sample_interval", s.sample_interval);
    s.validate();
    return s;
}

inline json pump_to_json(const PumpConfig& p) {
    return json{{"max_basal", p.max_basal},
                {"max_bolus", p.max_bolus},
                {"basal_resolution", p.basal_resolution},
                {"output_unit",
                 p.output_unit == PumpOutputUnit::u_per_min ? "U/min" : "pmol/min"}};
}

inline PumpConfig pump_from_json(const json& j, const std::string& path) {
    jsonio::reject_unknown(j, path,
                           {"max_basal", "max_bolus", "basal_resolution", "output_unit"});
    PumpConfig p;
    p.max_basal = jsonio::number_or(j, path, "max_basal", p.max_basal);
    p.max_bolus = jsonio::number_or(j, path, "max_bolus", p.max_bolus);
    p.basal_resolution = jsonio::number_or(j, path, "basal_resolution", p.basal_resolution);
    const std::string unit = jsonio::text_or(j, path, "output_unit", "U/min");
    if (unit == "U/min") {
        p.output_unit = PumpOutputUnit::u_per_min;
    } else if (unit == "pmol/min") {
        p.output_unit = PumpOutputUnit::pmol_per_min;
    } else {
        throw jsonio::schema_error(path + ".output_unit", "must be 'U/min' or 'pmol/min'");
    }
    p.validate();
    return p;
}

// Fully resolved spec, embedded verbatim in every output for provenance.
inline json spec_to_json(const ExperimentSpec& spec) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = spec.name;
    j["model"] = to_string(spec.model);
    if (spec.model == ModelKind::mvp) {
        j["profile"] = mvp_profile_to_json(spec.mvp_profile);
    } else {
        j["profile"] = uva_profile_to_json(spec.uva_profile);
    }
    j["controller"] = to_string(spec.controller);
    j["controller_config"] = controller_config_to_json(spec.controller_config);
    j["sensor"] = sensor_to_json(spec.sensor);
    j["pump"] = pump_to_json(spec.pump);
    json meals = json::array();
    for (const auto& m : spec.meals) {
        meals.push_back(json{{"t_min", m.t_min}, {"cho_g", m.cho_g}});
    }
    j["meals"] = meals;
    j["initial_bg"] = spec.initial_bg;
    j["duration_min"] = spec.duration_min;
    json faults = json::array();
    for (const auto& f : spec.faults) {
        faults.push_back(fault_to_json(f));
    }
    j["faults"] = faults;
    j["seed"] = spec.seed;
    j["bolus_delivery"] = spec.bolus_delivery == BolusDelivery::front_load ? "front_load"
                                                                           : "spread";
    j["announce_meals_to_openaps"] = spec.announce_meals_to_openaps;
    return j;
}

// Parses an experiment document. `resolve_profile` loads an external profile
// file when the document references one by path.
inline ExperimentSpec spec_from_json(const json& j, const std::string& path = "$",
                                     const std::filesystem::path& base_dir = {}) {
    jsonio::reject_unknown(j, path,
                           {"schema_version", "name", "model", "profile", "profile_file",
                            "controller", "controller_config", "sensor", "pump", "meals",
                            "initial_bg", "duration_min", "faults", "seed", "bolus_delivery",
                            "announce_meals_to_openaps"});
    jsonio::check_schema_version(j, path);
    ExperimentSpec spec;
    spec.name = jsonio::text_or(j, path, "name", "experiment");
    spec.model = model_from_string(jsonio::text(j, path, "model"), path + ".model");

    if (j.contains("profile") && j.contains("profile_file")) {
        throw jsonio::schema_error(path, "give either profile or profile_file, not both");
    }
    if (j.contains("profile_file")) {
        const std::filesystem::path ref = jsonio::text(j, path, "profile_file");
        const std::filesystem::path full = ref.is_absolute() ? ref : base_dir / ref;
        std::ifstream in(full);
        if (!in) {
            throw ConfigError("cannot open referenced profile file: " + full.string());
        }
        json pj;
        try {
            in >> pj;
        } catch (const json::exception& e) {
            throw ConfigError("invalid JSON in " + full.string() + ": " + e.what());
        }
        const ProfileFile pf = profile_file_from_json(pj);
        if (pf.model != spec.model) {
            throw ConfigError("profile file model does not match experiment model");
        }
        spec.mvp_profile = pf.mvp;
        spec.uva_profile = pf.uva;
    } else {
        const json& pj = jsonio::member(j, path, "profile");
        if (spec.model == ModelKind::mvp) {
            spec.mvp_profile = mvp_profile_from_json(pj, path + ".profile");
        } else {
            spec.uva_profile = uva_profile_from_json(pj, path + ".profile");
        }
    }

    spec.controller =
        controller_from_string(jsonio::text(j, path, "controller"), path + ".controller");
    if (j.contains("controller_config")) {
        spec.controller_config =
            controller_config_from_json(j.at("controller_config"), path + ".controller_config");
    }
    if (j.contains("sensor")) {
        spec.sensor = sensor_from_json(j.at("sensor"), path + ".sensor");
    }
    if (j.contains("pump")) {
        spec.pump = pump_from_json(j.at("pump"), path + ".pump");
    } else {
        spec.pump.output_unit = spec.model == ModelKind::mvp ? PumpOutputUnit::u_per_min
                                                             : PumpOutputUnit::pmol_per_min;
    }
    if (j.contains("meals")) {
        const json& meals = j.at("meals");
        if (!meals.is_array()) {
            throw jsonio::schema_error(path + ".meals", "expected an array");
        }
        for (std::size_t i = 0; i < meals.size(); ++i) {
            const std::string mpath = path + ".meals[" + std::to_string(i) + "]";
            jsonio::reject_unknown(meals[i], mpath, {"t_min", "cho_g"});
            spec.meals.push_back({jsonio::number(meals[i], mpath, "t_min"),
                                  jsonio::number(meals[i], mpath, "cho_g")});
        }
    }
    spec.initial_bg = jsonio::number_or(j, path, "initial_bg", spec.initial_bg);
    spec.duration_min = jsonio::number_or(j, path, "duration_min", spec.duration_min);
    if (j.contains("faults")) {
        const json& faults = j.at("faults");
        if (!faults.is_array()) {
            throw jsonio::schema_error(path + ".faults", "expected an array");
        }
        for (std::size_t i = 0; i < faults.size(); ++i) {
            spec.faults.push_back(
                fault_from_json(faults[i], path + ".faults[" + std::to_string(i) + "]"));
        }
    }
    spec.seed = jsonio::uinteger_or(j, path, "seed", 0);
    const std::string delivery = jsonio::text_or(j, path, "bolus_delivery", "front_load");
    if (delivery == "front_load") {
        spec.bolus_delivery = BolusDelivery::front_load;
    } else if (delivery == "spread") {
        spec.bolus_delivery = BolusDelivery::spread;
    } else {
        throw jsonio::schema_error(path + ".bolus_delivery", "must be front_load or spread");
    }
    spec.announce_meals_to_openaps =
        jsonio::boolean_or(j, path, "announce_meals_to_openaps", false);
    spec.validate();
    return spec;
}

// --- campaigns ----------------------------------------------------------------

struct CampaignFile {
    std::string name = "campaign";
    ExperimentSpec base;
    CampaignGrid grid;
    std::uint64_t seed = 0;
};

inline CampaignFile campaign_from_json(const json& j, const std::string& path = "$",
                                       const std::filesystem::path& base_dir = {}) {
    jsonio::reject_unknown(j, path, {"schema_version", "name", "base", "grid", "seed"});
    jsonio::check_schema_version(j, path);
    CampaignFile c;
    c.name = jsonio::text_or(j, path, "name", "campaign");
    c.base = spec_from_json(jsonio::member(j, path, "base"), path + ".base", base_dir);
    c.seed = jsonio::uinteger_or(j, path, "seed", 0);

    const json& g = jsonio::member(j, path, "grid");
    const std::string gpath = path + ".grid";
    jsonio::reject_unknown(g, gpath,
                           {"fault_scenarios", "start_duration_pairs", "random_pairs",
                            "start_range", "duration_range", "initial_bgs"});
    const json& scenarios = jsonio::member(g, gpath, "fault_scenarios");
    if (!scenarios.is_array() || scenarios.empty()) {
        throw jsonio::schema_error(gpath + ".fault_scenarios", "expected a non-empty array");
    }
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const std::string spath = gpath + ".fault_scenarios[" + std::to_string(i) + "]";
        jsonio::reject_unknown(scenarios[i], spath, {"name", "faults"});
        FaultScenario sc;
        sc.name = jsonio::text(scenarios[i], spath, "name");
        const json& faults = jsonio::member(scenarios[i], spath, "faults");
        if (!faults.is_array() || faults.empty()) {
            throw jsonio::schema_error(spath + ".faults", "expected a non-empty array");
        }
        for (std::size_t k = 0; k < faults.size(); ++k) {
            sc.faults.push_back(
                fault_from_json(faults[k], spath + ".faults[" + std::to_string(k) + "]"));
        }
        c.grid.fault_scenarios.push_back(std::move(sc));
    }
    if (g.contains("start_duration_pairs")) {
        for (const auto& p : g.at("start_duration_pairs")) {
            if (!p.is_array() || p.size() != 2) {
                throw jsonio::schema_error(gpath + ".start_duration_pairs",
                                           "expected [start, duration] pairs");
            }
            c.grid.start_duration_pairs.emplace_back(p[0].get<double>(), p[1].get<double>());
        }
    }
    c.grid.random_pairs =
        static_cast<std::size_t>(jsonio::uinteger_or(g, gpath, "random_pairs", 0));
    if (g.contains("start_range")) {
        const auto& r = g.at("start_range");
        c.grid.start_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    if (g.contains("duration_range")) {
        const auto& r = g.at("duration_range");
        c.grid.duration_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    const json& bgs = jsonio::member(g, gpath, "initial_bgs");
    if (!bgs.is_array() || bgs.empty()) {
        throw jsonio::schema_error(gpath + ".initial_bgs", "expected a non-empty array");
    }
    for (const auto& b : bgs) {
        c.grid.initial_bgs.push_back(b.get<double>());
    }
    c.grid.validate();
    return c;
}

inline json campaign_grid_to_json(const CampaignGrid& grid) {
    json scenarios = json::array();
    for (const auto& sc : grid.fault_scenarios) {
        json faults = json::array();
        for (const auto& f : sc.faults) {
            faults.push_back(fault_to_json(f));
        }
        scenarios.push_back(json{{"name", sc.name}, {"faults", faults}});
    }
    json g;
    g["fault_scenarios"] = scenarios;
    if (!grid.start_duration_pairs.empty()) {
        json pairs = json::array();
        for (const auto& [s, d] : grid.start_duration_pairs) {
            pairs.push_back(json::array({s, d}));
        }
        g["start_duration_pairs"] = pairs;
    }
    if (grid.random_pairs > 0) {
        g["random_pairs"] = grid.random_pairs;
        g["start_range"] = json::array({grid.start_range.first, grid.start_range.second});
        g["duration_range"] =
            json::array({grid.duration_range.first, grid.duration_range.second});
    }
    g["initial_bgs"] = grid.initial_bgs;
    return g;
}

// --- hashing -------------------------------------------------------------------

// FNV-1a over the canonical JSON dump; nlohmann objects serialize with sorted
// keys, so the hash is stable across runs and platforms.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string spec_hash(const ExperimentSpec& spec) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(spec_to_json(spec).dump())));
    return buf;
}

// --- trace CSV -------------------------------------------------------------------

// Floats print with 6 significant digits via the C locale; the formatting is
// part of the byte-identical determinism contract.
inline std::string format_g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline void write_trace_csv(std::ostream& out, const Trace& trace,
                            const ExperimentSpec& spec) {
    out << "# apsim-trace schema_version=" << kSchemaVersion << " spec_hash="
        << spec_hash(spec) << " spec=" << spec_to_json(spec).dump() << "\n";
    out << kTraceHeader << "\n";
    for (const auto& r : trace) {
        out << format_g6(r.t_min) << ',' << format_g6(r.bg_true) << ',' << format_g6(r.cgm)
            << ',' << format_g6(r.basal_cmd_u_hr) << ',' << format_g6(r.bolus_cmd_u) << ','
            << format_g6(r.delivered_u_min) << ',' << format_g6(r.iob_u) << ','
            << format_g6(r.cho_g) << ',' << (r.fault_active ? 1 : 0) << ','
            << to_string(r.rationale) << "\n";
    }
}

inline void write_trace_csv_file(const std::filesystem::path& path, const Trace& trace,
                                 const ExperimentSpec& spec) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    write_trace_csv(out, trace, spec);
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

inline Rationale rationale_from_string(const std::string& s) {
    for (int i = 0; i <= static_cast<int>(Rationale::on_target); ++i) {
        const auto r = static_cast<Rationale>(i);
        if (s == to_string(r)) {
            return r;
        }
    }
    throw ConfigError("unknown rationale tag: " + s);
}

struct TraceFile {
    Trace trace;
    std::string embedded_spec_json; // empty when the file has no provenance line
    std::string embedded_spec_hash;
};

inline TraceFile read_trace_csv(std::istream& in, const std::string& origin = "<stream>") {
    TraceFile out;
    std::string line;
    bool header_seen = false;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            const auto hash_pos = line.find("spec_hash=");
            if (hash_pos != std::string::npos) {
                out.embedded_spec_hash = line.substr(hash_pos + 10, 16);
            }
            const auto spec_pos = line.find(" spec=");
            if (spec_pos != std::string::npos) {
                out.embedded_spec_json = line.substr(spec_pos + 6);
            }
            continue;
        }
        if (!header_seen) {
            if (line != kTraceHeader) {
                throw ConfigError(origin + ": unexpected CSV header");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() != 10) {
            throw ConfigError(origin + ": line " + std::to_string(line_no) +
                              ": expected 10 fields");
        }
        try {
            TraceRecord r;
            r.t_min = std::stod(fields[0]);
            r.bg_true = std::stod(fields[1]);
            r.cgm = std::stod(fields[2]);
            r.basal_cmd_u_hr = std::stod(fields[3]);
            r.bolus_cmd_u = std::stod(fields[4]);
            r.delivered_u_min = std::stod(fields[5]);
            r.iob_u = std::stod(fields[6]);
            r.cho_g = std::stod(fields[7]);
            r.fault_active = fields[8] == "1";
            r.rationale = rationale_from_string(fields[9]);
            out.trace.push_back(r);
        } catch (const std::invalid_argument&) {
            throw ConfigError(origin + ": line " + std::to_string(line_no) +
                              ": malformed number");
        }
    }
    if (!header_seen) {
        throw ConfigError(origin + ": no CSV header found");
    }
    return out;
}

inline TraceFile read_trace_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open trace file: " + path.string());
    }
    return read_trace_csv(in, path.string());
}

// Trace as JSON, for --format json.
inline json trace_to_json(const Trace& trace, const ExperimentSpec& spec) {
    json rows = json::array();
    for (const auto& r : trace) {
        rows.push_back(json{{"t_min", r.t_min},
                            {"bg_true", r.bg_true},
                            {"cgm", r.cgm},
                            {"basal_cmd_Uhr", r.basal_cmd_u_hr},
                            {"bolus_cmd_U", r.bolus_cmd_u},
                            {"delivered_Umin", r.delivered_u_min},
                            {"iob_U", r.iob_u},
                            {"cho_g", r.cho_g},
                            {"fault_active", r.fault_active},
                            {"rationale", to_string(r.rationale)}});
    }
    return json{{"schema_version", kSchemaVersion},
                {"spec_hash", spec_hash(spec)},
                {"spec", spec_to_json(spec)},
                {"records", rows}};
}

// --- reports ---------------------------------------------------------------------

inline json outcomes_to_json(const Outcomes& o) {
    return json{{"pct_in_range_70_180", o.pct_in_range},
                {"pct_above_180", o.pct_above_180},
                {"pct_below_70", o.pct_below_70},
                {"pct_below_54", o.pct_below_54},
                {"pct_above_250", o.pct_above_250},
                {"samples", o.samples}};
}

inline json hazards_to_json(const HazardLabel& h) {
    return json{{"h1_low", h.h1},
                {"h2_high", h.h2},
                {"severe_low_54", h.severe_low},
                {"severe_high_250", h.severe_high}};
}

inline json outcome_report_json(const ExperimentSpec& spec, const Trace& trace) {
    const Outcomes o = compute_outcomes(trace);
    const HazardLabel h = compute_hazards(trace);
    return json{{"schema_version", kSchemaVersion},
                {"spec_hash", spec_hash(spec)},
                {"spec", spec_to_json(spec)},
                {"outcomes", outcomes_to_json(o)},
                {"hazards", hazards_to_json(h)}};
}

inline json campaign_report_to_json(const CampaignReport& rep) {
    auto bucket = [](const CampaignReport::Bucket& b) {
        return json{{"runs", b.runs},
                    {"hazardous", b.hazardous},
                    {"h1", b.h1},
                    {"h2", b.h2},
                    {"hazard_rate", b.rate()}};
    };
    json by_class, by_model, by_controller;
    for (const auto& [k, v] : rep.by_fault_class) by_class[k] = bucket(v);
    for (const auto& [k, v] : rep.by_model) by_model[k] = bucket(v);
    for (const auto& [k, v] : rep.by_controller) by_controller[k] = bucket(v);
    return json{{"overall", bucket(rep.overall)},
                {"by_fault_class", by_class},
                {"by_model", by_model},
                {"by_controller", by_controller}};
}

// Text table mirroring the outcome rows of the trial-comparison layout.
inline std::string outcome_table_text(const OutcomeReport& rep) {
    std::ostringstream out;
    auto row = [&](const char* label, const MeanSd& m) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-46s %6.2f +/- %5.2f\n", label, m.mean, m.sd);
        out << buf;
    };
    row("Pct. of time with BG in target range 70-180", rep.in_range);
    row("Pct. of time with BG > 180", rep.above_180);
    row("Pct. of time with BG < 70", rep.below_70);
    row("Pct. of time with BG < 54", rep.below_54);
    return out.str();
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << j.dump(2) << "\n";
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

} // namespace apsim
