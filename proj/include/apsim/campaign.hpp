#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "apsim/errors.hpp"
#include "apsim/faults.hpp"
#include "apsim/loop.hpp"
#include "apsim/rng.hpp"

namespace apsim {

// Campaign axes: fault scenarios x (start, duration) windows x initial
// glucose values. Windows are either listed explicitly or drawn once from
// the seeded ranges at expansion time and recorded in every produced spec.
struct CampaignGrid {
    std::vector<FaultScenario> fault_scenarios;
    std::vector<std::pair<double, double>> start_duration_pairs;
    std::size_t random_pairs = 0;
    std::pair<double, double> start_range{60.0, 600.0};
    std::pair<double, double> duration_range{30.0, 180.0};
    std::vector<double> initial_bgs;

    void validate() const {
        if (fault_scenarios.empty()) {
            throw ConfigError("campaign has no fault scenarios");
        }
        if (start_duration_pairs.empty() && random_pairs == 0) {
            throw ConfigError("campaign has no start/duration axis");
        }
        if (initial_bgs.empty()) {
            throw ConfigError("campaign has no initial BG axis");
        }
    }
};

// Deterministic cartesian expansion. Every produced spec is fully resolved:
// window values are written into its fault list and its seed is derived from
// the campaign seed and run index, so any single run can be reproduced alone.
inline std::vector<ExperimentSpec> expand_campaign(const ExperimentSpec& base,
                                                   const CampaignGrid& grid,
                                                   std::uint64_t seed) {
    grid.validate();

    std::vector<std::pair<double, double>> pairs = grid.start_duration_pairs;
    if (grid.random_pairs > 0) {
        Rng rng(seed);
        for (std::size_t i = 0; i < grid.random_pairs; ++i) {
            const double start = rng.uniform(grid.start_range.first, grid.start_range.second);
            const double dur = rng.uniform(grid.duration_range.first, grid.duration_range.second);
            pairs.emplace_back(start, dur);
        }
    }

    std::vector<ExperimentSpec> out;
    out.reserve(grid.fault_scenarios.size() * pairs.size() * grid.initial_bgs.size());
    std::uint64_t index = 0;
    for (const auto& scenario : grid.fault_scenarios) {
        for (const auto& [start, duration] : pairs) {
            for (double bg : grid.initial_bgs) {
                ExperimentSpec spec = base;
                spec.faults = scenario.faults;
                for (auto& f : spec.faults) {
                    f.start_min = start;
                    f.duration_min = duration;
                }
                spec.initial_bg = bg;
                spec.seed = mix_seed(seed, index);
                spec.name = base.name + "/" + scenario.name + "/start" +
                            std::to_string(static_cast<long>(start)) + "_dur" +
                            std::to_string(static_cast<long>(duration)) + "/bg" +
                            std::to_string(static_cast<long>(bg));
                out.push_back(std::move(spec));
                ++index;
            }
        }
    }
    return out;
}

// The bundled default grid: truncate and hold on each signal path, CGM
// shifts at three magnitudes each way, and insulin-rate shifts at two
// magnitudes each way - 14 scenarios total.
inline CampaignGrid default_campaign_grid() {
    CampaignGrid grid;
    auto one = [](std::string name, FaultTarget target, FaultKind kind,
                  std::optional<double> magnitude) {
        FaultSpec f;
        f.target = target;
        f.kind = kind;
        f.magnitude = magnitude;
        f.duration_min = 1.0; // placeholder; the window axis overwrites it
        return FaultScenario{std::move(name), {f}};
    };
    grid.fault_scenarios = {
        one("cgm_truncate", FaultTarget::cgm, FaultKind::truncate, std::nullopt),
        one("cgm_hold", FaultTarget::cgm, FaultKind::hold, std::nullopt),
        one("insulin_truncate", FaultTarget::insulin, FaultKind::truncate, std::nullopt),
        one("insulin_hold", FaultTarget::insulin, FaultKind::hold, std::nullopt),
        one("cgm_add_40", FaultTarget::cgm, FaultKind::add, 40.0),
        one("cgm_add_80", FaultTarget::cgm, FaultKind::add, 80.0),
        one("cgm_add_120", FaultTarget::cgm, FaultKind::add, 120.0),
        one("cgm_sub_40", FaultTarget::cgm, FaultKind::sub, 40.0),
        one("cgm_sub_80", FaultTarget::cgm, FaultKind::sub, 80.0),
        one("cgm_sub_120", FaultTarget::cgm, FaultKind::sub, 120.0),
        one("insulin_add_0.01", FaultTarget::insulin, FaultKind::add, 0.01),
        one("insulin_add_0.05", FaultTarget::insulin, FaultKind::add, 0.05),
        one("insulin_sub_0.01", FaultTarget::insulin, FaultKind::sub, 0.01),
        one("insulin_sub_0.05", FaultTarget::insulin, FaultKind::sub, 0.05),
    };
    grid.random_pairs = 9;
    grid.initial_bgs = {80.0, 100.0, 120.0, 140.0, 160.0, 200.0, 240.0};
    return grid;
}

// Runs many experiments with a worker pool. Results land at their spec's
// index, so parallel and serial execution produce identical output.
inline std::vector<Trace> run_many(const std::vector<ExperimentSpec>& specs,
                                   unsigned parallelism) {
    if (parallelism == 0) {
        parallelism = 1;
    }
    std::vector<Trace> traces(specs.size());
    if (parallelism == 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            traces[i] = run_closed_loop(specs[i]);
        }
        return traces;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(parallelism);
    for (unsigned w = 0; w < parallelism; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < specs.size();
                     i = next.fetch_add(1)) {
                    traces[i] = run_closed_loop(specs[i]);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return traces;
}

} // namespace apsim
