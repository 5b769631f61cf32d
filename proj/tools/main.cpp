// Command-line front end for the tracking-aided HRIS downlink simulator.
//
//   hristrack run --config cfg.json [--seed N] [--frames M] [--out dir]
//   hristrack sweep-rho --config cfg.json --values 0.1,0.3,0.5 [--seed N] [--out dir]
//
// Exit codes: 0 success, 2 validation/parse error, 3 QoS infeasibility.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hristrack/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

int do_run(const std::string& config_path, const std::uint64_t* seed, const int* frames,
           const std::string& out_dir) {
    hristrack::sim::ScenarioConfig cfg = hristrack::sim::load_config(config_path);
    if (seed) {
        cfg.seed = *seed;
    }
    if (frames) {
        cfg.M = *frames;
    }
    cfg.validate();

    const hristrack::sim::RunResult result = hristrack::sim::run_tracking(cfg);
    hristrack::sim::emit_outputs(result, out_dir);

    const auto& s = result.summary;
    std::printf("frames completed: %d/%d\n", s.frames_completed, cfg.M);
    std::printf("final PEB: %.6g\n", s.final_peb);
    for (size_t u = 0; u < s.rmse_pos.size(); ++u) {
        std::printf("UE %zu: position RMSE %.6g m, mean rate %.6g bits/s/Hz\n", u + 1,
                    s.rmse_pos[u], s.mean_rate[u]);
    }
    std::printf("mean TX power: %.6g W\n", s.mean_power);
    std::printf("wall clock: %.2f s\n", s.wall_clock_s);
    std::printf("outputs: %s/frames.csv, %s/summary.json\n", out_dir.c_str(), out_dir.c_str());
    if (s.aborted) {
        std::fprintf(stderr, "run aborted at frame %d: %s\n", s.abort_frame,
                     s.abort_reason.c_str());
        return kExitInfeasible;
    }
    return kExitOk;
}

int do_sweep(const std::string& config_path, const std::uint64_t* seed,
             const std::vector<double>& values, const std::string& out_dir) {
    hristrack::sim::ScenarioConfig cfg = hristrack::sim::load_config(config_path);
    if (seed) {
        cfg.seed = *seed;
    }
    cfg.validate();

    const std::vector<hristrack::sim::SweepRow> rows = hristrack::sim::sweep_rho(cfg, values);
    hristrack::sim::emit_tradeoff(rows, out_dir);

    std::printf("%10s %14s %14s\n", "rho", "final_peb", "mean_rate");
    for (const auto& row : rows) {
        std::printf("%10.4g %14.6g %14.6g\n", row.rho, row.final_peb, row.mean_rate);
    }
    std::printf("outputs: %s/tradeoff.csv\n", out_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tracking-aided HRIS-assisted multi-user downlink simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    int frames = 0;
    std::vector<double> values;

    CLI::App* run = app.add_subcommand("run", "Run one tracking/design simulation");
    run->add_option("--config", config_path, "scenario config file (JSON)")->required();
    CLI::Option* run_seed = run->add_option("--seed", seed, "override the config seed");
    CLI::Option* run_frames = run->add_option("--frames", frames, "override the frame count");
    run->add_option("--out", out_dir, "output directory (default: out)");

    CLI::App* sweep = app.add_subcommand("sweep-rho", "Sweep the absorption split rho");
    sweep->add_option("--config", config_path, "scenario config file (JSON)")->required();
    sweep->add_option("--values", values, "comma-separated rho values in [0,1]")
        ->required()
        ->delimiter(',');
    CLI::Option* sweep_seed = sweep->add_option("--seed", seed, "override the config seed");
    sweep->add_option("--out", out_dir, "output directory (default: out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (run->parsed()) {
            return do_run(config_path, run_seed->count() ? &seed : nullptr,
                          run_frames->count() ? &frames : nullptr, out_dir);
        }
        return do_sweep(config_path, sweep_seed->count() ? &seed : nullptr, values, out_dir);
    } catch (const hristrack::InfeasibleQoS& e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }
}
