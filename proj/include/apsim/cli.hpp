#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "apsim/analytics.hpp"
#include "apsim/campaign.hpp"
#include "apsim/errors.hpp"
#include "apsim/io.hpp"
#include "apsim/loop.hpp"
#include "apsim/presets.hpp"
#include "apsim/sysid.hpp"

namespace apsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitIo = 4;

struct CommonOpts {
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string format = "csv"; // trace output: csv or json
    unsigned parallelism = 1;
};

inline std::filesystem::path resolve_out_dir(const CommonOpts& opts) {
    if (!opts.out_dir.empty()) {
        return opts.out_dir;
    }
    if (const char* env = std::getenv("APSIM_OUT_DIR")) {
        return env;
    }
    return ".";
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

// Runs one experiment file: trace + outcome report. All validation happens
// before anything is written.
inline int cmd_simulate(const std::filesystem::path& experiment_file, const CommonOpts& opts,
                        std::ostream& log = std::cout) {
    const json doc = read_json_file(experiment_file);
    ExperimentSpec spec = spec_from_json(doc, "$", experiment_file.parent_path());
    if (opts.seed.has_value()) {
        spec.seed = *opts.seed;
    }
    if (opts.format != "csv" && opts.format != "json") {
        throw ConfigError("--format must be csv or json");
    }

    const Trace trace = run_closed_loop(spec);

    const std::filesystem::path out_dir = resolve_out_dir(opts);
    ensure_dir(out_dir);
    const std::filesystem::path trace_path =
        out_dir / (spec.name + (opts.format == "csv" ? "_trace.csv" : "_trace.json"));
    if (opts.format == "csv") {
        write_trace_csv_file(trace_path, trace, spec);
    } else {
        write_json_file(trace_path, trace_to_json(trace, spec));
    }
    const std::filesystem::path outcome_path = out_dir / (spec.name + "_outcome.json");
    write_json_file(outcome_path, outcome_report_json(spec, trace));

    const Outcomes o = compute_outcomes(trace);
    log << "wrote " << trace_path.string() << " (" << trace.size() << " records)\n";
    log << "wrote " << outcome_path.string() << "\n";
    log << "time in range [70,180]: " << format_g6(o.pct_in_range) << "%\n";
    return kExitOk;
}

inline ExperimentSpec spec_from_embedded(const TraceFile& tf, const std::string& origin) {
    if (tf.embedded_spec_json.empty()) {
        throw ConfigError(origin + " has no embedded spec; pass an experiment file");
    }
    json j;
    try {
        j = json::parse(tf.embedded_spec_json);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": embedded spec is not valid JSON: " + e.what());
    }
    return spec_from_json(j);
}

enum class ReplayMode { insulin, bg };

// Open-loop replays. Insulin mode reconstructs glucose from the recorded
// commands (optionally under a substitute profile) and reports the MSE
// against the recorded glucose; bg mode feeds the recorded glucose to a
// controller and reports the insulin MSE against the recorded commands.
inline int cmd_replay(ReplayMode mode, const std::filesystem::path& trace_csv,
                      const std::optional<std::filesystem::path>& profile_or_experiment,
                      const CommonOpts& opts, std::ostream& log = std::cout) {
    const TraceFile tf = read_trace_csv_file(trace_csv);
    ExperimentSpec spec = spec_from_embedded(tf, trace_csv.string());
    const std::filesystem::path out_dir = resolve_out_dir(opts);

    if (mode == ReplayMode::insulin) {
        if (profile_or_experiment.has_value()) {
            const ProfileFile pf =
                profile_file_from_json(read_json_file(*profile_or_experiment));
            if (pf.model != spec.model) {
                throw ConfigError("replacement profile model does not match the trace");
            }
            spec.mvp_profile = pf.mvp;
            spec.uva_profile = pf.uva;
        }
        const std::vector<double> bg = replay_insulin(ReplaySetup::from_spec(spec), tf.trace);
        const double mse = compute_mse(bg, bg_true_column(tf.trace));

        ensure_dir(out_dir);
        const std::filesystem::path out_path = out_dir / (spec.name + "_replay_insulin.json");
        json rows = json::array();
        for (std::size_t i = 0; i < bg.size(); ++i) {
            rows.push_back(json::array({tf.trace[i].t_min, bg[i]}));
        }
        write_json_file(out_path, json{{"schema_version", kSchemaVersion},
                                       {"spec_hash", spec_hash(spec)},
                                       {"spec", spec_to_json(spec)},
                                       {"mode", "insulin"},
                                       {"bg_mse", mse},
                                       {"bg", rows}});
        log << "wrote " << out_path.string() << "\n";
        log << "bg mse: " << format_g6(mse) << " (mg/dL)^2\n";
        return kExitOk;
    }

    if (profile_or_experiment.has_value()) {
        // Borrow controller choice and settings from another experiment file.
        const json doc = read_json_file(*profile_or_experiment);
        const ExperimentSpec other =
            spec_from_json(doc, "$", profile_or_experiment->parent_path());
        spec.controller = other.controller;
        spec.controller_config = other.controller_config;
    }
    std::vector<double> bg;
    std::vector<MealEvent> meals;
    for (const auto& r : tf.trace) {
        bg.push_back(r.cgm);
        if (r.cho_g > 0.0) {
            meals.push_back({r.t_min, r.cho_g});
        }
    }
    const double cadence = tf.trace.size() > 1 ? tf.trace[1].t_min - tf.trace[0].t_min : 5.0;
    const std::vector<InsulinCommand> commands =
        replay_bg(spec.controller, spec.controller_config, bg, meals, cadence);

    double ss = 0.0;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const double replayed =
            u_per_hr_to_u_per_min(commands[i].basal_u_hr) + commands[i].bolus_u / cadence;
        const double recorded = u_per_hr_to_u_per_min(tf.trace[i].basal_cmd_u_hr) +
                                tf.trace[i].bolus_cmd_u / cadence;
        ss += (replayed - recorded) * (replayed - recorded);
    }
    const double mse = ss / commands.size();

    ensure_dir(out_dir);
    const std::filesystem::path out_path = out_dir / (spec.name + "_replay_bg.json");
    json rows = json::array();
    for (const auto& c : commands) {
        rows.push_back(json{{"t_min", c.t_min},
                            {"basal_Uhr", c.basal_u_hr},
                            {"bolus_U", c.bolus_u},
                            {"rationale", to_string(c.rationale)}});
    }
    write_json_file(out_path, json{{"schema_version", kSchemaVersion},
                                   {"spec_hash", spec_hash(spec)},
                                   {"mode", "bg"},
                                   {"controller", to_string(spec.controller)},
                                   {"insulin_mse_Umin2", mse},
                                   {"commands", rows}});
    log << "wrote " << out_path.string() << "\n";
    log << "insulin mse: " << format_g6(mse) << " (U/min)^2\n";
    return kExitOk;
}

inline FitSpec fitspec_from_json(const json& j, const std::string& path = "$") {
    jsonio::reject_unknown(j, path,
                           {"schema_version", "model", "fixed_params", "train_window_days",
                            "eval_window_days"});
    jsonio::check_schema_version(j, path);
    const std::string model = jsonio::text_or(j, path, "model", "mvp");
    if (model != "mvp") {
        throw jsonio::schema_error(path + ".model", "only mvp fitting is supported");
    }
    FitSpec spec;
    if (j.contains("fixed_params")) {
        const json& f = j.at("fixed_params");
        const std::string fpath = path + ".fixed_params";
        jsonio::reject_unknown(f, fpath, {"c_i", "tau_1", "tau_2", "p_2", "tau_m", "v_g"});
        spec.c_i = jsonio::number_or(f, fpath, "c_i", spec.c_i);
        spec.tau_1 = jsonio::number_or(f, fpath, "tau_1", spec.tau_1);
        spec.tau_2 = jsonio::number_or(f, fpath, "tau_2", spec.tau_2);
        spec.p_2 = jsonio::number_or(f, fpath, "p_2", spec.p_2);
        spec.tau_m = jsonio::number_or(f, fpath, "tau_m", spec.tau_m);
        spec.v_g = jsonio::number_or(f, fpath, "v_g", spec.v_g);
    }
    spec.train_window_days = jsonio::number_or(j, path, "train_window_days", 10.0);
    spec.eval_window_days = jsonio::number_or(j, path, "eval_window_days", 0.0);
    spec.validate();
    return spec;
}

// Fits free MVP parameters to a recorded trace and writes the fitted profile.
inline int cmd_fit(const std::filesystem::path& trace_csv,
                   const std::optional<std::filesystem::path>& fitspec_json,
                   const std::filesystem::path& out_profile, std::ostream& log = std::cout) {
    const TraceFile tf = read_trace_csv_file(trace_csv);
    FitSpec fit_spec;
    if (fitspec_json.has_value()) {
        fit_spec = fitspec_from_json(read_json_file(*fitspec_json));
    }
    if (!tf.embedded_spec_json.empty()) {
        const ExperimentSpec origin = spec_from_embedded(tf, trace_csv.string());
        fit_spec.pump = origin.pump;
        fit_spec.init_basal_u_min = detail::profile_basal_u_min(origin);
        fit_spec.bolus_delivery = origin.bolus_delivery;
    }

    const FitResult result = fit_profile(fit_spec, tf.trace);

    ProfileFile pf;
    pf.model = ModelKind::mvp;
    pf.name = "fitted";
    pf.mvp = result.profile;
    json out = profile_file_to_json(pf);
    out["fit"] = json{{"train_mse", result.train_mse},
                      {"eval_mse", result.eval_mse},
                      {"train_samples", result.train_samples},
                      {"eval_samples", result.eval_samples},
                      {"tdd_U", result.tdd_u},
                      {"isf_1700", result.isf_1700}};
    write_json_file(out_profile, out);
    log << "wrote " << out_profile.string() << "\n";
    log << "train mse: " << format_g6(result.train_mse) << " (mg/dL)^2, eval mse: "
        << format_g6(result.eval_mse) << " (mg/dL)^2\n";
    return kExitOk;
}

// Expands and runs a campaign. Completed runs are recognized by the spec
// hash embedded in their trace file and are never recomputed on resume.
inline int cmd_campaign(const std::filesystem::path& campaign_file, const CommonOpts& opts,
                        bool disable_faults = false, std::ostream& log = std::cout) {
    const json doc = read_json_file(campaign_file);
    CampaignFile campaign = campaign_from_json(doc, "$", campaign_file.parent_path());
    std::uint64_t seed = opts.seed.value_or(campaign.seed);

    std::vector<ExperimentSpec> specs = expand_campaign(campaign.base, campaign.grid, seed);
    if (disable_faults) {
        for (auto& s : specs) {
            s.faults.clear();
            s.name += "/nofault";
        }
    }

    const std::filesystem::path out_dir = resolve_out_dir(opts);
    const std::filesystem::path runs_dir = out_dir / "runs";
    ensure_dir(runs_dir);

    std::vector<Trace> traces(specs.size());
    std::vector<std::size_t> todo;
    std::vector<std::filesystem::path> paths(specs.size());
    std::size_t reused = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "run_%05zu_%s.csv", i, spec_hash(specs[i]).c_str());
        paths[i] = runs_dir / stem;
        if (std::filesystem::exists(paths[i])) {
            const TraceFile existing = read_trace_csv_file(paths[i]);
            if (existing.embedded_spec_hash == spec_hash(specs[i])) {
                traces[i] = existing.trace;
                ++reused;
                continue;
            }
        }
        todo.push_back(i);
    }

    std::vector<ExperimentSpec> pending;
    pending.reserve(todo.size());
    for (std::size_t i : todo) {
        pending.push_back(specs[i]);
    }
    const std::vector<Trace> fresh = run_many(pending, opts.parallelism);
    for (std::size_t k = 0; k < todo.size(); ++k) {
        traces[todo[k]] = fresh[k];
        write_trace_csv_file(paths[todo[k]], fresh[k], specs[todo[k]]);
    }

    const CampaignReport report = campaign_report(specs, traces);
    json run_list = json::array();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        run_list.push_back(json{{"name", specs[i].name},
                                {"spec_hash", spec_hash(specs[i])},
                                {"hazards", hazards_to_json(compute_hazards(traces[i]))}});
    }
    json out = campaign_report_to_json(report);
    out["schema_version"] = kSchemaVersion;
    out["campaign"] = campaign.name;
    out["seed"] = seed;
    out["total_runs"] = specs.size();
    out["runs"] = run_list;
    write_json_file(out_dir / "campaign_report.json", out);

    std::ostringstream table;
    table << "campaign: " << campaign.name << " (" << specs.size() << " runs)\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-24s %6zu runs  hazard rate %6.2f%%\n", "overall",
                  report.overall.runs, 100.0 * report.overall.rate());
    table << line;
    for (const auto& [k, b] : report.by_fault_class) {
        std::snprintf(line, sizeof(line), "%-24s %6zu runs  hazard rate %6.2f%%\n", k.c_str(),
                      b.runs, 100.0 * b.rate());
        table << line;
    }
    std::ofstream txt(out_dir / "campaign_report.txt");
    if (!txt) {
        throw IoError("cannot write campaign_report.txt");
    }
    txt << table.str();
    log << table.str();
    log << "completed " << todo.size() << " runs, reused " << reused << "\n";
    return kExitOk;
}

// Writes n sampled profiles as individual profile files.
inline int cmd_cohort(std::size_t n, std::uint64_t seed, ModelKind model,
                      const CommonOpts& opts, std::ostream& log = std::cout) {
    const std::filesystem::path out_dir = resolve_out_dir(opts);
    ensure_dir(out_dir);
    std::vector<MvpProfile> mvp_cohort;
    std::vector<UvaProfile> uva_cohort;
    if (model == ModelKind::mvp) {
        mvp_cohort = mvp_default_cohort(n, seed);
    } else {
        uva_cohort = uva_default_cohort(n, seed);
    }
    char name[64];
    for (std::size_t i = 0; i < n; ++i) {
        ProfileFile pf;
        pf.model = model;
        std::snprintf(name, sizeof(name), "%s_patient_%03zu", to_string(model), i);
        pf.name = name;
        if (model == ModelKind::mvp) {
            pf.mvp = mvp_cohort[i];
        } else {
            pf.uva = uva_cohort[i];
        }
        write_json_file(out_dir / (std::string(name) + ".json"), profile_file_to_json(pf));
    }
    log << "wrote " << n << " " << to_string(model) << " profiles to " << out_dir.string()
        << "\n";
    return kExitOk;
}

// Writes the bundled default campaign document for a model.
inline int cmd_make_campaign(ModelKind model, const std::filesystem::path& out_file,
                             std::ostream& log = std::cout) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = std::string("default_") + to_string(model);
    j["base"] = spec_to_json(default_campaign_base(model));
    j["grid"] = campaign_grid_to_json(default_campaign_grid());
    j["seed"] = 1;
    write_json_file(out_file, j);
    log << "wrote " << out_file.string() << "\n";
    return kExitOk;
}

// Maps the error taxonomy onto the exit-code contract.
template <typename Fn>
inline int run_command(Fn&& fn, std::ostream& err = std::cerr) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UnidentifiableError& e) {
        err << "fit error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

} // namespace apsim::cli
