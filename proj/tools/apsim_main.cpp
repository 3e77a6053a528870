#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "apsim/apsim.hpp"

namespace {

apsim::cli::CommonOpts make_opts(const std::string& out, bool seed_set, std::uint64_t seed,
                                 const std::string& format, unsigned parallelism) {
    apsim::cli::CommonOpts opts;
    opts.out_dir = out;
    if (seed_set) {
        opts.seed = seed;
    }
    opts.format = format;
    opts.parallelism = parallelism;
    return opts;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"apsim - closed-loop artificial pancreas simulation testbed"};
    app.require_subcommand(1);

    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string format = "csv";
    unsigned parallelism = 1;
    app.add_option("--out", out_dir, "output directory (default: $APSIM_OUT_DIR or .)");
    app.add_option("--seed", seed, "override the seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--format", format, "trace output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--parallelism", parallelism, "worker threads for campaigns");

    auto* simulate = app.add_subcommand("simulate", "run one closed-loop experiment");
    std::string experiment_file;
    simulate->add_option("experiment", experiment_file, "experiment JSON file")->required();

    auto* replay = app.add_subcommand("replay", "open-loop replay of a recorded trace");
    std::string replay_mode;
    std::string replay_trace;
    std::string replay_ref;
    replay->add_option("mode", replay_mode, "insulin (reconstruct BG) or bg (reconstruct insulin)")
        ->required()
        ->check(CLI::IsMember({"insulin", "bg"}));
    replay->add_option("trace", replay_trace, "trace CSV file")->required();
    replay->add_option("--with", replay_ref,
                       "profile file (insulin mode) or experiment file (bg mode)");

    auto* fit = app.add_subcommand("fit", "estimate an MVP profile from a trace");
    std::string fit_trace;
    std::string fit_spec;
    std::string fit_out = "fitted_profile.json";
    fit->add_option("trace", fit_trace, "trace CSV file")->required();
    fit->add_option("--spec", fit_spec, "fit spec JSON file");
    fit->add_option("--profile-out", fit_out, "output profile path");

    auto* campaign = app.add_subcommand("campaign", "expand and run a fault campaign");
    std::string campaign_file;
    bool no_faults = false;
    campaign->add_option("campaign", campaign_file, "campaign JSON file")->required();
    campaign->add_flag("--no-faults", no_faults,
                       "run the matched clean campaign (faults stripped)");

    auto* cohort = app.add_subcommand("cohort", "sample and write virtual patient profiles");
    std::size_t cohort_n = 20;
    std::uint64_t cohort_seed = 7;
    std::string cohort_model = "mvp";
    cohort->add_option("-n,--count", cohort_n, "number of profiles");
    cohort->add_option("--cohort-seed", cohort_seed, "sampling seed");
    cohort->add_option("--model", cohort_model, "mvp or uva")
        ->check(CLI::IsMember({"mvp", "uva"}));

    auto* make_campaign =
        app.add_subcommand("make-campaign", "write the bundled default campaign file");
    std::string mc_model = "mvp";
    std::string mc_out = "campaign.json";
    make_campaign->add_option("--model", mc_model, "mvp or uva")
        ->check(CLI::IsMember({"mvp", "uva"}));
    make_campaign->add_option("--out-file", mc_out, "output path");

    CLI11_PARSE(app, argc, argv);

    const apsim::cli::CommonOpts opts = make_opts(out_dir, seed_set, seed, format, parallelism);

    return apsim::cli::run_command([&]() -> int {
        if (simulate->parsed()) {
            return apsim::cli::cmd_simulate(experiment_file, opts);
        }
        if (replay->parsed()) {
            const auto mode = replay_mode == "insulin" ? apsim::cli::ReplayMode::insulin
                                                       : apsim::cli::ReplayMode::bg;
            std::optional<std::filesystem::path> ref;
            if (!replay_ref.empty()) {
                ref = replay_ref;
            }
            return apsim::cli::cmd_replay(mode, replay_trace, ref, opts);
        }
        if (fit->parsed()) {
            std::optional<std::filesystem::path> spec;
            if (!fit_spec.empty()) {
                spec = fit_spec;
            }
            return apsim::cli::cmd_fit(fit_trace, spec, fit_out);
        }
        if (campaign->parsed()) {
            return apsim::cli::cmd_campaign(campaign_file, opts, no_faults);
        }
        if (cohort->parsed()) {
            const auto model = cohort_model == "mvp" ? apsim::ModelKind::mvp
                                                     : apsim::ModelKind::uva;
            const std::uint64_t s = opts.seed.value_or(cohort_seed);
            return apsim::cli::cmd_cohort(cohort_n, s, model, opts);
        }
        if (make_campaign->parsed()) {
            const auto model =
                mc_model == "mvp" ? apsim::ModelKind::mvp : apsim::ModelKind::uva;
            return apsim::cli::cmd_make_campaign(model, mc_out);
        }
        return apsim::cli::kExitConfig;
    });
}
