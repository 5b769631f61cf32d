#include "hristrack/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace hristrack::sim {

namespace {

/// Per-component variance floors (theta, psi, phi [rad^2], tau [s^2]) so the
/// measurement covariance stays invertible; the delay floor must sit far
/// below angle scale or it would wipe out centimeter-grade ranging.
const arma::vec kVarFloor{1e-18, 1e-18, 1e-18, 1e-30};
/// Cold-start gates: invert the first measurement only when it pins the
/// state tightly enough for the nonlinear inversion to be trustworthy
/// (angles within ~0.1 rad, delay within ~30 m one-sigma).
constexpr double kInitAngleVar = 1e-2;
constexpr double kInitDelayVar = 1e-14;

std::string fmt12(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string json_number(double v) {
    if (!std::isfinite(v)) {
        return "null";
    }
    return fmt12(v);
}

std::string json_string(const std::string& s) {
    std::string out = "\"";
    for (const char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    out += "\"";
    return out;
}

void require(bool ok, const char* field, const std::string& rule) {
    if (!ok) {
        throw ValidationError(std::string("config field ") + field + ": " + rule);
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    require(std::isfinite(f_c) && f_c > 0.0, "f_c", "must be positive");
    require(std::isfinite(delta_f) && delta_f > 0.0, "delta_f", "must be positive");
    require(K >= 1, "K", "must be at least 1");
    require(T >= 1, "T", "must be at least 1");
    require(M >= 1, "M", "must be at least 1");
    require(N_T >= 1, "N_T", "must be at least 1");
    require(N_RF >= 1, "N_RF", "must be at least 1");
    require(N_E >= 1, "N_E", "must be at least 1");
    require(U >= 1, "U", "must be at least 1");
    require(U <= N_T, "U", "requires U <= N_T");
    require(N_T <= N_RF * N_E, "N_T", "requires N_T <= N_RF*N_E");
    require(U <= T, "T", "requires U <= T (orthogonal symbol rows)");
    require(std::isfinite(sigma2_dbm), "sigma2_dbm", "must be finite");
    require(std::isfinite(p_max_dbm), "p_max_dbm", "must be finite");
    require(std::isfinite(gamma_db), "gamma_db", "must be finite");
    require(std::isfinite(rho) && rho >= 0.0 && rho <= 1.0, "rho", "must lie in [0, 1]");
    require(std::isfinite(T_s) && T_s > 0.0, "T_s", "must be positive");
    require(std::isfinite(sigma_dot) && sigma_dot >= 0.0, "sigma_dot", "must be non-negative");
    require(std::isfinite(sigma_dot_truth) && sigma_dot_truth >= 0.0, "sigma_dot_truth",
            "must be non-negative");
    require(std::isfinite(p_H.x) && std::isfinite(p_H.y) && std::isfinite(p_H.z), "p_H",
            "must be finite");
    require(p_H.x * p_H.x + p_H.y * p_H.y + p_H.z * p_H.z > 0.0, "p_H",
            "must not coincide with the BS origin");
    require(std::isfinite(ue_x_min) && std::isfinite(ue_x_max) && ue_x_max >= ue_x_min,
            "ue_x_range", "must be a non-empty interval");
    require(std::isfinite(ue_y_min) && std::isfinite(ue_y_max) && ue_y_max >= ue_y_min,
            "ue_y_range", "must be a non-empty interval");
    require(std::isfinite(ue_z_min) && std::isfinite(ue_z_max) && ue_z_max >= ue_z_min,
            "ue_z_range", "must be a non-empty interval");
    require(std::isfinite(ue_speed_min) && std::isfinite(ue_speed_max) &&
                ue_speed_max >= ue_speed_min && ue_speed_min >= 0.0,
            "ue_speed_range", "must be a non-empty non-negative interval");
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    ScenarioConfig cfg;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        cfg.validate();
        return cfg;
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("config parse failure: ") + e.what());
    }
    if (!j.is_object()) {
        throw ParseError("config root must be a JSON object");
    }

    auto as_double = [](const nlohmann::json& v, const char* field) {
        if (!v.is_number()) {
            throw ParseError(std::string("config field ") + field + ": expected a number");
        }
        return v.get<double>();
    };
    auto as_int = [](const nlohmann::json& v, const char* field) {
        if (!v.is_number_integer()) {
            throw ParseError(std::string("config field ") + field + ": expected an integer");
        }
        return v.get<int>();
    };
    auto as_range = [&](const nlohmann::json& v, const char* field, double& lo, double& hi) {
        if (!v.is_array() || v.size() != 2) {
            throw ParseError(std::string("config field ") + field +
                             ": expected an array of two numbers");
        }
        lo = as_double(v[0], field);
        hi = as_double(v[1], field);
    };

    bool saw_sigma_dot_truth = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "f_c") cfg.f_c = as_double(value, "f_c");
        else if (key == "delta_f") cfg.delta_f = as_double(value, "delta_f");
        else if (key == "K") cfg.K = as_int(value, "K");
        else if (key == "T") cfg.T = as_int(value, "T");
        else if (key == "M") cfg.M = as_int(value, "M");
        else if (key == "N_T") cfg.N_T = as_int(value, "N_T");
        else if (key == "N_RF") cfg.N_RF = as_int(value, "N_RF");
        else if (key == "N_E") cfg.N_E = as_int(value, "N_E");
        else if (key == "sigma2_dbm") cfg.sigma2_dbm = as_double(value, "sigma2_dbm");
        else if (key == "p_max_dbm") cfg.p_max_dbm = as_double(value, "p_max_dbm");
        else if (key == "gamma_db") cfg.gamma_db = as_double(value, "gamma_db");
        else if (key == "rho") cfg.rho = as_double(value, "rho");
        else if (key == "p_H") {
            if (!value.is_array() || value.size() != 3) {
                throw ParseError("config field p_H: expected an array of three numbers");
            }
            cfg.p_H = {as_double(value[0], "p_H"), as_double(value[1], "p_H"),
                       as_double(value[2], "p_H")};
        } else if (key == "T_s") cfg.T_s = as_double(value, "T_s");
        else if (key == "sigma_dot") cfg.sigma_dot = as_double(value, "sigma_dot");
        else if (key == "sigma_dot_truth") {
            cfg.sigma_dot_truth = as_double(value, "sigma_dot_truth");
            saw_sigma_dot_truth = true;
        } else if (key == "U") cfg.U = as_int(value, "U");
        else if (key == "ue_x_range") as_range(value, "ue_x_range", cfg.ue_x_min, cfg.ue_x_max);
        else if (key == "ue_y_range") as_range(value, "ue_y_range", cfg.ue_y_min, cfg.ue_y_max);
        else if (key == "ue_z_range") as_range(value, "ue_z_range", cfg.ue_z_min, cfg.ue_z_max);
        else if (key == "ue_speed_range")
            as_range(value, "ue_speed_range", cfg.ue_speed_min, cfg.ue_speed_max);
        else if (key == "seed") {
            if (!value.is_number_integer() ||
                (value.is_number_integer() && !value.is_number_unsigned() &&
                 value.get<long long>() < 0)) {
                throw ParseError("config field seed: expected a non-negative integer");
            }
            cfg.seed = value.get<std::uint64_t>();
        } else {
            throw ParseError("unknown config field: " + key);
        }
    }
    if (!saw_sigma_dot_truth) {
        cfg.sigma_dot_truth = cfg.sigma_dot;
    }
    cfg.validate();
    return cfg;
}

void save_config(const ScenarioConfig& c, const std::string& path) {
    nlohmann::ordered_json j;
    j["f_c"] = c.f_c;
    j["delta_f"] = c.delta_f;
    j["K"] = c.K;
    j["T"] = c.T;
    j["M"] = c.M;
    j["N_T"] = c.N_T;
    j["N_RF"] = c.N_RF;
    j["N_E"] = c.N_E;
    j["sigma2_dbm"] = c.sigma2_dbm;
    j["p_max_dbm"] = c.p_max_dbm;
    j["gamma_db"] = c.gamma_db;
    j["rho"] = c.rho;
    j["p_H"] = {c.p_H.x, c.p_H.y, c.p_H.z};
    j["T_s"] = c.T_s;
    j["sigma_dot"] = c.sigma_dot;
    j["sigma_dot_truth"] = c.sigma_dot_truth;
    j["U"] = c.U;
    j["ue_x_range"] = {c.ue_x_min, c.ue_x_max};
    j["ue_y_range"] = {c.ue_y_min, c.ue_y_max};
    j["ue_z_range"] = {c.ue_z_min, c.ue_z_max};
    j["ue_speed_range"] = {c.ue_speed_min, c.ue_speed_max};
    j["seed"] = c.seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open config file for writing: " + path);
    }
    out << j.dump(2) << "\n";
    if (!out) {
        throw IoError("failed writing config file: " + path);
    }
}

namespace {

/// Deployment-box prior for a UE with no usable cold-start measurement.
/// Each UE gets a distinct point along the box diagonal: coincident
/// fallback positions would make the multi-user QoS program degenerate
/// (identical channel directions), aborting runs for no physical reason.
ekf::UeKinematicState box_center_init(const ScenarioConfig& cfg, int u) {
    const double frac = (u + 1.0) / (cfg.U + 1.0);
    ekf::UeKinematicState s;
    s.state = {cfg.ue_x_min + frac * (cfg.ue_x_max - cfg.ue_x_min), 0.0,
               cfg.ue_y_min + frac * (cfg.ue_y_max - cfg.ue_y_min), 0.0,
               cfg.ue_z_min + frac * (cfg.ue_z_max - cfg.ue_z_min), 0.0};
    s.mse = arma::diagmat(arma::vec{10.0, 25.0, 10.0, 25.0, 10.0, 25.0});
    return s;
}

/// The configured deployment box is prior knowledge: a cold-start inversion
/// that lands far outside it is a noise artifact, not a position.
bool plausible_init(const ekf::UeKinematicState& s, const ScenarioConfig& cfg) {
    const double dx = cfg.ue_x_max - cfg.ue_x_min;
    const double dy = cfg.ue_y_max - cfg.ue_y_min;
    const double dz = cfg.ue_z_max - cfg.ue_z_min;
    const double slack = std::max(5.0, std::sqrt(dx * dx + dy * dy + dz * dz));
    const auto p = s.position();
    return p.x >= cfg.ue_x_min - slack && p.x <= cfg.ue_x_max + slack &&
           p.y >= cfg.ue_y_min - slack && p.y <= cfg.ue_y_max + slack &&
           p.z >= cfg.ue_z_min - slack && p.z <= cfg.ue_z_max + slack;
}

ekf::UeKinematicState predict_only(const ekf::MotionModel& model,
                                   const ekf::UeKinematicState& prev) {
    ekf::UeKinematicState s;
    s.state = ekf::transition(model, prev.state);
    const arma::mat F = model.F_xi();
    s.mse = F * prev.mse * F.t() + model.P_u();
    return s;
}

/// Post-fit residual gate: a healthy update absorbs a measurement to within
/// a few standard deviations, so a posterior that still disagrees with the
/// accepted measurement by kPostFitGate sigmas means the linearized update
/// overshot (the prior was too far out for one Newton step). Those updates
/// must not stand: with the filter gain near one they seed an oscillating
/// divergence that precise follow-up measurements only amplify.
constexpr double kPostFitGate = 50.0;

bool track_consistent(const ekf::UeKinematicState& s, const ekf::Measurement& meas,
                      const ScenarioConfig& cfg, const geometry::Position3& p_H) {
    if (!plausible_init(s, cfg)) return false;
    arma::vec fit;
    try {
        fit = ekf::measure(s.state, p_H);
    } catch (const DegenerateGeometry&) {
        return false;
    }
    constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
    for (int i = 0; i < 4; ++i) {
        double r = meas.z(i) - fit(i);
        if (i == 0 || i == 2) r = std::remainder(r, kTwoPi);
        if (r * r > kPostFitGate * kPostFitGate * meas.cov_diag(i)) return false;
    }
    return true;
}

}  // namespace

RunResult run_tracking(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const channel::SubcarrierGrid grid{cfg.f_c, cfg.delta_f, cfg.K};
    const channel::ArraySizes sizes{cfg.N_T, cfg.N_RF, cfg.N_E};
    const int U = cfg.U;
    const double sigma2 = cfg.sigma2_w();
    const geometry::Position3 p_H = cfg.p_H;
    const channel::BsHrisParams bh = channel::make_bs_hris_params(p_H, cfg.f_c);
    beamform::QosSpec qos;
    qos.gamma = arma::vec(U, arma::fill::value(cfg.gamma_lin()));
    qos.p_max = cfg.p_max_w();

    RandomStream rng_truth(cfg.seed, "truth");
    RandomStream rng_opt(cfg.seed, "opt");

    // True kinematic states [x, vx, y, vy, z, vz]; positions uniform in the
    // configured box, per-axis speeds uniform in the speed range.
    std::vector<arma::vec> truth(U);
    for (int u = 0; u < U; ++u) {
        const double x = cfg.ue_x_min + rng_truth.uniform() * (cfg.ue_x_max - cfg.ue_x_min);
        const double y = cfg.ue_y_min + rng_truth.uniform() * (cfg.ue_y_max - cfg.ue_y_min);
        const double z = cfg.ue_z_min + rng_truth.uniform() * (cfg.ue_z_max - cfg.ue_z_min);
        const double vx =
            cfg.ue_speed_min + rng_truth.uniform() * (cfg.ue_speed_max - cfg.ue_speed_min);
        const double vy =
            cfg.ue_speed_min + rng_truth.uniform() * (cfg.ue_speed_max - cfg.ue_speed_min);
        const double vz =
            cfg.ue_speed_min + rng_truth.uniform() * (cfg.ue_speed_max - cfg.ue_speed_min);
        truth[u] = {x, vx, y, vy, z, vz};
    }
    std::vector<double> omega(U);
    for (int u = 0; u < U; ++u) {
        omega[u] = 2.0 * kPi * rng_truth.uniform();
    }

    const ekf::MotionModel model_truth{cfg.T_s, cfg.sigma_dot_truth};
    const ekf::MotionModel model_filter{cfg.T_s, cfg.sigma_dot};

    // Frame-1 bootstrap design: uniform full-power precoder, zero phases.
    beamform::Precoder F_design;
    {
        const double a = std::sqrt(qos.p_max / static_cast<double>(cfg.K * U * cfg.N_T));
        F_design.F.assign(cfg.K,
                          arma::cx_mat(arma::mat(cfg.N_T, U, arma::fill::value(a)),
                                       arma::mat(cfg.N_T, U, arma::fill::zeros)));
    }
    beamform::Combiner W_design = beamform::Combiner::from_phases(
        arma::mat(cfg.N_E, cfg.N_RF, arma::fill::zeros), sizes);
    arma::vec ups_prev(sizes.n_h(), arma::fill::zeros);
    arma::mat comb_phases_prev(cfg.N_E, cfg.N_RF, arma::fill::zeros);

    fim::FimRecursionState info = fim::FimRecursionState::zero(U);
    std::vector<ekf::UeKinematicState> est(U);

    RunResult result;
    RunSummary& summary = result.summary;
    summary.config = cfg;

    for (int m = 1; m <= cfg.M; ++m) {
        // (1) propagate truth (the initial states are the frame-1 states)
        if (m >= 2) {
            for (int u = 0; u < U; ++u) {
                truth[u] = ekf::transition(model_truth, truth[u]) +
                           ekf::sample_process_noise(model_truth, rng_truth);
            }
        }

        // (2) true channels
        std::vector<channel::UeChannelParams> ues_true(U);
        for (int u = 0; u < U; ++u) {
            ues_true[u] = channel::make_ue_params({truth[u](0), truth[u](2), truth[u](4)},
                                                  {truth[u](1), truth[u](3), truth[u](5)}, p_H,
                                                  cfg.f_c, omega[u]);
        }
        const channel::ChannelSet ch_true = channel::assemble_channels(ues_true, bh, grid, sizes);

        // (3) information recursion under the previous frame's design
        const arma::mat J_frame = fim::frame_fim(ues_true, grid, sizes, W_design.W, F_design.F,
                                                 cfg.rho, sigma2, cfg.T);
        info = fim::accumulate(info, J_frame);
        fim::Peb bound;
        try {
            bound = fim::peb(info);
        } catch (const SingularInformation&) {
            bound.value = std::numeric_limits<double>::infinity();
            bound.per_param_crbs.set_size(4, U);
            bound.per_param_crbs.fill(std::numeric_limits<double>::infinity());
        }

        // (4) measurements and EKF
        for (int u = 0; u < U; ++u) {
            arma::vec cov = bound.per_param_crbs.col(u);
            const bool informative = cov.is_finite();
            if (informative) {
                cov = arma::max(cov, kVarFloor);
                ekf::Measurement meas =
                    ekf::synthesize_measurement(truth[u], cov, p_H, rng_truth);
                // The estimator knows tau_H can never undercut the direct
                // BS-HRIS delay; clamp the noisy draw to the physical range.
                meas.z(3) = std::max(meas.z(3), geometry::norm(p_H) / kSpeedOfLight);
                if (m == 1) {
                    const bool tight = cov(0) < kInitAngleVar && cov(1) < kInitAngleVar &&
                                       cov(2) < kInitAngleVar && cov(3) < kInitDelayVar;
                    bool placed = false;
                    if (tight) {
                        try {
                            est[u] = ekf::initial_state_from_measurement(meas, p_H);
                            placed = plausible_init(est[u], cfg);
                        } catch (const InconsistentMeasurement&) {
                            placed = false;
                        }
                    }
                    if (!placed) {
                        est[u] = box_center_init(cfg, u);
                    }
                } else {
                    // Filter step under supervision: a stepped state that fails
                    // the plausibility or post-fit gates marks a lost track, and
                    // the current measurement (if it admits a plausible position)
                    // relocks it the same way the cold start does.
                    bool have_step = false;
                    ekf::UeKinematicState stepped;
                    try {
                        stepped = ekf::ekf_step(model_filter, est[u], meas, p_H);
                        have_step = true;
                    } catch (const SingularInnovation&) {
                        have_step = false;
                    }
                    if (have_step && track_consistent(stepped, meas, cfg, p_H)) {
                        est[u] = stepped;
                    } else {
                        bool relocked = false;
                        try {
                            ekf::UeKinematicState re =
                                ekf::initial_state_from_measurement(meas, p_H);
                            relocked = plausible_init(re, cfg);
                            if (relocked) est[u] = re;
                        } catch (const InconsistentMeasurement&) {
                            relocked = false;
                        }
                        if (!relocked) {
                            est[u] = have_step && plausible_init(stepped, cfg)
                                         ? stepped
                                         : predict_only(model_filter, est[u]);
                        }
                    }
                }
            } else {
                // No usable information this frame: dead-reckon.
                est[u] = m == 1 ? box_center_init(cfg, u) : predict_only(model_filter, est[u]);
            }
        }

        // (5) design at the estimated states
        std::vector<channel::UeChannelParams> ues_est(U);
        for (int u = 0; u < U; ++u) {
            ues_est[u] = channel::make_ue_params(est[u].position(), est[u].velocity(), p_H,
                                                 cfg.f_c, /*omega=*/0.0);
        }
        const channel::ChannelSet ch_est = channel::assemble_channels(ues_est, bh, grid, sizes);

        beamform::AltOptSettings as;
        as.obs_T = cfg.T;
        as.prior_information = info.J_tilde;
        as.init_upsilon = ups_prev;
        as.init_combiner_phases = comb_phases_prev;
        // Relaxations feed a rank-one extraction with its own QoS recheck,
        // so design-loop solves don't need the solver's default precision.
        as.sdp.tol = 1e-4;
        as.sdp.max_iters = 8000;
        beamform::AltOptResult alt;
        try {
            alt = beamform::alternating_optimize(ues_est, ch_est, cfg.rho, qos, sigma2, rng_opt,
                                                 as);
        } catch (const InfeasibleQoS& e) {
            summary.aborted = true;
            summary.abort_frame = m;
            summary.abort_reason = e.what();
            break;
        }
        F_design = alt.precoder;
        W_design = alt.combiner;
        ups_prev = alt.reflection.upsilon;
        comb_phases_prev = alt.combiner.phases;

        // (6) realized performance on the true channels
        const auto h_dir_true =
            channel::effective_dl_channel(ch_true, alt.reflection.phi(), cfg.rho);
        const channel::SinrRate sr = channel::sinr_and_rate(h_dir_true, F_design.F, sigma2);

        // (7) log
        FrameLog log;
        log.frame = m;
        log.peb = bound.value;
        log.power_w = F_design.power();
        log.outer_iters = alt.report.iterations;
        log.rank1_min = alt.report.min_rank_ratio.empty() ? 1.0
                                                          : alt.report.min_rank_ratio.back();
        log.ue.resize(U);
        for (int u = 0; u < U; ++u) {
            UeFrameRecord& r = log.ue[u];
            r.true_pos = {truth[u](0), truth[u](2), truth[u](4)};
            r.true_vel = {truth[u](1), truth[u](3), truth[u](5)};
            r.est_pos = est[u].position();
            r.est_vel = est[u].velocity();
            r.crb_theta = bound.per_param_crbs(0, u);
            r.crb_psi = bound.per_param_crbs(1, u);
            r.crb_phi = bound.per_param_crbs(2, u);
            r.crb_tau = bound.per_param_crbs(3, u);
            r.sum_sinr = sr.sum_sinr(u);
            r.rate = sr.rate(u);
        }
        result.frames.push_back(std::move(log));
    }

    summary.frames_completed = static_cast<int>(result.frames.size());
    summary.rmse_pos.assign(U, 0.0);
    summary.mean_rate.assign(U, 0.0);
    summary.mean_power = 0.0;
    if (!result.frames.empty()) {
        for (const auto& fl : result.frames) {
            for (int u = 0; u < U; ++u) {
                const auto& r = fl.ue[u];
                const double dx = r.true_pos.x - r.est_pos.x;
                const double dy = r.true_pos.y - r.est_pos.y;
                const double dz = r.true_pos.z - r.est_pos.z;
                summary.rmse_pos[u] += dx * dx + dy * dy + dz * dz;
                summary.mean_rate[u] += r.rate;
            }
            summary.mean_power += fl.power_w;
        }
        const double n = static_cast<double>(result.frames.size());
        for (int u = 0; u < U; ++u) {
            summary.rmse_pos[u] = std::sqrt(summary.rmse_pos[u] / n);
            summary.mean_rate[u] /= n;
        }
        summary.mean_power /= n;
        summary.final_peb = result.frames.back().peb;
    } else {
        summary.final_peb = std::numeric_limits<double>::infinity();
    }
    summary.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

std::vector<SweepRow> sweep_rho(const ScenarioConfig& config,
                                const std::vector<double>& rho_values) {
    if (rho_values.empty()) {
        throw ValidationError("rho sweep needs at least one value");
    }
    for (const double v : rho_values) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("rho sweep values must lie in [0, 1]");
        }
    }
    // Sweep points are independent runs with per-run streams; run them
    // concurrently, collect in order.
    std::vector<std::future<RunResult>> futures;
    futures.reserve(rho_values.size());
    for (const double v : rho_values) {
        ScenarioConfig c = config;
        c.rho = v;
        futures.push_back(std::async(std::launch::async, [c] { return run_tracking(c); }));
    }
    std::vector<SweepRow> rows;
    rows.reserve(rho_values.size());
    for (size_t i = 0; i < rho_values.size(); ++i) {
        const RunResult rr = futures[i].get();
        SweepRow row;
        row.rho = rho_values[i];
        row.final_peb = rr.summary.final_peb;
        // The trade-off point is read off the settled end of the run: the
        // final frame's rate, averaged over users. Early frames mix the
        // cold-start transient into the number and would mask the split's
        // effect on the communication side.
        if (!rr.frames.empty()) {
            double mean = 0.0;
            for (const auto& r : rr.frames.back().ue) {
                mean += r.rate;
            }
            row.mean_rate = mean / static_cast<double>(rr.frames.back().ue.size());
        }
        rows.push_back(row);
    }
    return rows;
}

void emit_outputs(const RunResult& result, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }

    {
        std::ofstream csv(out_dir + "/frames.csv", std::ios::binary);
        if (!csv) {
            throw IoError("cannot open frames.csv for writing");
        }
        csv << "frame,ue,true_x,true_y,true_z,est_x,est_y,est_z,"
               "true_vx,true_vy,true_vz,est_vx,est_vy,est_vz,"
               "peb,crb_theta,crb_psi,crb_phi,crb_tau,"
               "sum_sinr_db,rate_bpshz,power_w,outer_iters,rank1_min\n";
        for (const auto& fl : result.frames) {
            for (size_t u = 0; u < fl.ue.size(); ++u) {
                const auto& r = fl.ue[u];
                csv << fl.frame << ',' << (u + 1) << ',' << fmt12(r.true_pos.x) << ','
                    << fmt12(r.true_pos.y) << ',' << fmt12(r.true_pos.z) << ','
                    << fmt12(r.est_pos.x) << ',' << fmt12(r.est_pos.y) << ','
                    << fmt12(r.est_pos.z) << ',' << fmt12(r.true_vel.x) << ','
                    << fmt12(r.true_vel.y) << ',' << fmt12(r.true_vel.z) << ','
                    << fmt12(r.est_vel.x) << ',' << fmt12(r.est_vel.y) << ','
                    << fmt12(r.est_vel.z) << ',' << fmt12(fl.peb) << ',' << fmt12(r.crb_theta)
                    << ',' << fmt12(r.crb_psi) << ',' << fmt12(r.crb_phi) << ','
                    << fmt12(r.crb_tau) << ',' << fmt12(10.0 * std::log10(r.sum_sinr)) << ','
                    << fmt12(r.rate) << ',' << fmt12(fl.power_w) << ',' << fl.outer_iters << ','
                    << fmt12(fl.rank1_min) << '\n';
            }
        }
        csv.flush();
        if (!csv) {
            throw IoError("failed writing frames.csv");
        }
    }

    {
        const RunSummary& s = result.summary;
        const ScenarioConfig& c = s.config;
        std::ofstream js(out_dir + "/summary.json", std::ios::binary);
        if (!js) {
            throw IoError("cannot open summary.json for writing");
        }
        js << "{\n";
        js << "  \"config\": {\n";
        js << "    \"f_c\": " << json_number(c.f_c) << ",\n";
        js << "    \"delta_f\": " << json_number(c.delta_f) << ",\n";
        js << "    \"K\": " << c.K << ",\n";
        js << "    \"T\": " << c.T << ",\n";
        js << "    \"M\": " << c.M << ",\n";
        js << "    \"N_T\": " << c.N_T << ",\n";
        js << "    \"N_RF\": " << c.N_RF << ",\n";
        js << "    \"N_E\": " << c.N_E << ",\n";
        js << "    \"sigma2_dbm\": " << json_number(c.sigma2_dbm) << ",\n";
        js << "    \"p_max_dbm\": " << json_number(c.p_max_dbm) << ",\n";
        js << "    \"gamma_db\": " << json_number(c.gamma_db) << ",\n";
        js << "    \"rho\": " << json_number(c.rho) << ",\n";
        js << "    \"p_H\": [" << json_number(c.p_H.x) << ", " << json_number(c.p_H.y) << ", "
           << json_number(c.p_H.z) << "],\n";
        js << "    \"T_s\": " << json_number(c.T_s) << ",\n";
        js << "    \"sigma_dot\": " << json_number(c.sigma_dot) << ",\n";
        js << "    \"sigma_dot_truth\": " << json_number(c.sigma_dot_truth) << ",\n";
        js << "    \"U\": " << c.U << ",\n";
        js << "    \"ue_x_range\": [" << json_number(c.ue_x_min) << ", "
           << json_number(c.ue_x_max) << "],\n";
        js << "    \"ue_y_range\": [" << json_number(c.ue_y_min) << ", "
           << json_number(c.ue_y_max) << "],\n";
        js << "    \"ue_z_range\": [" << json_number(c.ue_z_min) << ", "
           << json_number(c.ue_z_max) << "],\n";
        js << "    \"ue_speed_range\": [" << json_number(c.ue_speed_min) << ", "
           << json_number(c.ue_speed_max) << "],\n";
        js << "    \"seed\": " << c.seed << "\n";
        js << "  },\n";
        js << "  \"seed\": " << c.seed << ",\n";
        js << "  \"bounds_evaluated_at\": " << json_string(s.bounds_evaluated_at) << ",\n";
        js << "  \"frames_completed\": " << s.frames_completed << ",\n";
        js << "  \"aborted\": " << (s.aborted ? "true" : "false") << ",\n";
        js << "  \"abort_frame\": " << s.abort_frame << ",\n";
        js << "  \"abort_reason\": " << json_string(s.abort_reason) << ",\n";
        js << "  \"rmse_pos\": [";
        for (size_t u = 0; u < s.rmse_pos.size(); ++u) {
            js << (u ? ", " : "") << json_number(s.rmse_pos[u]);
        }
        js << "],\n";
        js << "  \"mean_rate\": [";
        for (size_t u = 0; u < s.mean_rate.size(); ++u) {
            js << (u ? ", " : "") << json_number(s.mean_rate[u]);
        }
        js << "],\n";
        js << "  \"final_peb\": " << json_number(s.final_peb) << ",\n";
        js << "  \"mean_power\": " << json_number(s.mean_power) << "\n";
        js << "}\n";
        js.flush();
        if (!js) {
            throw IoError("failed writing summary.json");
        }
    }
}

void emit_tradeoff(const std::vector<SweepRow>& rows, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
    }
    std::ofstream csv(out_dir + "/tradeoff.csv", std::ios::binary);
    if (!csv) {
        throw IoError("cannot open tradeoff.csv for writing");
    }
    csv << "rho,final_peb,mean_rate\n";
    for (const auto& row : rows) {
        csv << fmt12(row.rho) << ',' << fmt12(row.final_peb) << ',' << fmt12(row.mean_rate)
            << '\n';
    }
    csv.flush();
    if (!csv) {
        throw IoError("failed writing tradeoff.csv");
    }
}

}  // namespace hristrack::sim
