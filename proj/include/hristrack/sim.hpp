#pragma once

#include <armadillo>
#include <cstdint>
#include <string>
#include <vector>

#include "hristrack/beamform.hpp"
#include "hristrack/channel.hpp"
#include "hristrack/common.hpp"
#include "hristrack/ekf.hpp"
#include "hristrack/fim.hpp"
#include "hristrack/geometry.hpp"

namespace hristrack::sim {

/// Full scenario description. Powers are stored in the dBm/dB units the
/// config files use; the linear-scale accessors convert.
struct ScenarioConfig {
    double f_c = 20e9;       ///< carrier [Hz]
    double delta_f = 120e3;  ///< subcarrier spacing [Hz]
    int K = 32;              ///< subcarriers
    int T = 200;             ///< symbols per frame
    int M = 100;             ///< frames
    int N_T = 16;
    int N_RF = 5;
    int N_E = 8;
    double sigma2_dbm = -100.0;
    double p_max_dbm = 15.0;
    double gamma_db = 10.0;  ///< per-UE SINR threshold
    double rho = 0.5;        ///< sensing/reflection power split
    geometry::Position3 p_H{0.0, 50.0, 5.0};
    double T_s = 0.1;             ///< frame period [s]
    double sigma_dot = 0.1;       ///< filter process noise intensity
    double sigma_dot_truth = 0.1; ///< truth process noise intensity
    int U = 3;
    double ue_x_min = 0.0, ue_x_max = 10.0;
    double ue_y_min = 0.0, ue_y_max = 50.0;
    double ue_z_min = 0.0, ue_z_max = 10.0;
    double ue_speed_min = 1.0, ue_speed_max = 10.0;  ///< per-axis [m/s]
    std::uint64_t seed = 1;

    double sigma2_w() const { return 1e-3 * std::pow(10.0, sigma2_dbm / 10.0); }
    double p_max_w() const { return 1e-3 * std::pow(10.0, p_max_dbm / 10.0); }
    double gamma_lin() const { return std::pow(10.0, gamma_db / 10.0); }

    /// Field-level invariant checks; throws ValidationError naming the
    /// offending field.
    void validate() const;

    bool operator==(const ScenarioConfig&) const = default;
};

/// Parse a JSON config file. Missing keys keep their defaults; an empty or
/// whitespace-only file yields the default config. Unknown keys and type
/// mismatches raise ParseError; invariant violations raise ValidationError.
ScenarioConfig load_config(const std::string& path);

/// Write a config as JSON with full round-trip precision:
/// load_config(save_config(c)) == c exactly.
void save_config(const ScenarioConfig& config, const std::string& path);

/// One UE's slice of a frame record.
struct UeFrameRecord {
    geometry::Position3 true_pos, est_pos;
    geometry::Velocity3 true_vel, est_vel;
    double crb_theta = 0.0, crb_psi = 0.0, crb_phi = 0.0, crb_tau = 0.0;
    double sum_sinr = 0.0;  ///< realized, linear, summed over subcarriers
    double rate = 0.0;      ///< bits/s/Hz
};

struct FrameLog {
    int frame = 0;  ///< 1-based
    std::vector<UeFrameRecord> ue;
    double peb = 0.0;
    double power_w = 0.0;
    long outer_iters = 0;
    double rank1_min = 1.0;
};

struct RunSummary {
    ScenarioConfig config;
    int frames_completed = 0;
    bool aborted = false;
    int abort_frame = 0;  ///< 0 when the run completed
    std::string abort_reason;
    std::vector<double> rmse_pos;   ///< per UE, over completed frames [m]
    std::vector<double> mean_rate;  ///< per UE, over completed frames
    double final_peb = 0.0;
    double mean_power = 0.0;
    /// Bounds are oracle bounds evaluated at the true parameters.
    std::string bounds_evaluated_at = "true-state";
    /// Informational only; never serialized (outputs are byte-reproducible).
    double wall_clock_s = 0.0;
};

struct RunResult {
    std::vector<FrameLog> frames;
    RunSummary summary;
};

/// The per-frame tracking-aided design loop:
///   1. propagate true UE states (process noise from the "truth" stream);
///   2. synthesize true channels;
///   3. frame FIM at the true parameters under the previous frame's design
///      (frame 1: uniform full-power precoder, zero-phase combiner),
///      accumulate, and derive the measurement covariances from the CRBs;
///   4. synthesize channel-domain measurements and run the EKF (frame 1
///      initializes from the inverted measurement);
///   5. rebuild channels at the EKF estimates and run the alternating
///      design (randomization draws from the "opt" stream);
///   6. evaluate realized SINR/rate on the true channels;
///   7. log.
/// An InfeasibleQoS from the design step aborts the run cleanly: the
/// summary carries the frame index and reason, completed frames stay
/// logged.
RunResult run_tracking(const ScenarioConfig& config);

struct SweepRow {
    double rho = 0.0;
    double final_peb = 0.0;
    double mean_rate = 0.0;  ///< mean over UEs at the final completed frame
};

/// Runs run_tracking once per rho value with everything else (seed
/// included) identical.
std::vector<SweepRow> sweep_rho(const ScenarioConfig& config,
                                const std::vector<double>& rho_values);

/// Writes frames.csv and summary.json (12 significant digits; non-finite
/// CSV values as inf/nan words, JSON as null). Deterministic bytes for a
/// fixed (config, seed). Throws IoError on filesystem failures.
void emit_outputs(const RunResult& result, const std::string& out_dir);

/// Writes tradeoff.csv next to the run outputs.
void emit_tradeoff(const std::vector<SweepRow>& rows, const std::string& out_dir);

}  // namespace hristrack::sim
