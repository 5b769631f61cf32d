#pragma once

#include <armadillo>
#include <vector>

#include "hristrack/channel.hpp"
#include "hristrack/common.hpp"
#include "hristrack/fim.hpp"
#include "hristrack/sdp.hpp"

namespace hristrack::beamform {

/// BS digital precoder, one N_T x U matrix per subcarrier (column u serves
/// UE u). The total power sum_k sum_u ||f_{k,u}||^2 must stay within the
/// configured budget.
struct Precoder {
    std::vector<arma::cx_mat> F;

    double power() const;
};

/// Partially-connected HRIS analog combiner: chain l (column l) connects
/// only to elements l*N_E .. (l+1)*N_E - 1, every connected weight has unit
/// modulus. `phases` stores the per-chain phase profiles column-wise
/// (N_E x N_RF).
struct Combiner {
    arma::cx_mat W;    ///< N_H x N_RF block sparse
    arma::mat phases;  ///< N_E x N_RF

    static Combiner from_phases(const arma::mat& phases, const channel::ArraySizes& sizes);

    /// The active weights of chain l as a dense N_E vector.
    arma::cx_vec chain(int l, const channel::ArraySizes& sizes) const;
};

/// HRIS reflection configuration: phase angles restricted to
/// [-pi/2, pi/2], reflection coefficients e^{j upsilon} (unit modulus by
/// construction).
struct Reflection {
    arma::vec upsilon;

    arma::cx_vec phi() const;
};

/// Per-UE SINR thresholds (linear) and the BS transmit power budget [W].
struct QosSpec {
    arma::vec gamma;
    double p_max = 0.0;

    void validate(arma::uword n_ue) const;
};

/// Sensing-information weights of the precoder program: for subcarrier k
/// and parameter index i,
///   B_{k,i} = dH_k^H W W^H dH_k = |s|^2 ||W^H hris||^2 * bs bs^H,
/// an N_T x N_T Hermitian PSD rank-one matrix. Indexed [k][i].
std::vector<std::vector<arma::cx_mat>> build_b_matrices(
    const std::vector<channel::UeChannelParams>& ues, const channel::SubcarrierGrid& grid,
    const channel::ArraySizes& sizes, const arma::cx_mat& W_H);

/// Sensing-information weights of the combiner program:
///   D_{k,i} = dH_k F_k F_k^H dH_k^H = |s|^2 ||F_k^H bs||^2 * hris hris^H,
/// an N_H x N_H Hermitian PSD rank-one matrix. Indexed [k][i].
std::vector<std::vector<arma::cx_mat>> build_d_matrices(
    const std::vector<channel::UeChannelParams>& ues, const channel::SubcarrierGrid& grid,
    const channel::ArraySizes& sizes, const Precoder& precoder);

/// Communication weights C_{k,u} = h_dir^H h_dir (N_T x N_T, rank one,
/// trace ||h_dir||^2) for the composite downlink rows at reflection phi and
/// power split rho. Indexed [k][u].
std::vector<std::vector<arma::cx_mat>> build_c_matrices(const channel::ChannelSet& channels,
                                                        const arma::cx_vec& phi, double rho);

/// Per-UE sum over subcarriers of SINR_{k,u} for a candidate precoder,
/// evaluated against the channels that produced the C matrices.
arma::vec qos_sum_sinr(const std::vector<std::vector<arma::cx_mat>>& C, const Precoder& precoder,
                       double sigma2);

struct PrecoderOptions {
    sdp::SdpSettings sdp;
    /// Optional previous-solve relaxation blocks ((k,u) k-major, caller
    /// power scale) used as the solver's initial point.
    std::vector<arma::cx_mat> warm_start;
    long randomization_candidates = 100;
    /// Accept margin on the per-UE sum-SINR recheck: gamma_u * margin.
    double qos_margin = std::pow(10.0, -0.1 / 10.0);
};

struct PrecoderSolution {
    Precoder precoder;
    sdp::SdpStatus status = sdp::SdpStatus::MaxIters;
    double sdp_objective = 0.0;  ///< relaxation objective at the solution
    double sdp_power = 0.0;      ///< total trace of the relaxation blocks [W]
    arma::vec rank_ratio;        ///< per (k,u) block, k-major
    arma::vec sum_sinr;          ///< per UE, at the design channels
    bool qos_met = false;
    bool randomized = false;
    std::vector<arma::cx_mat> relaxation;  ///< blocks for warm starting
};

/// Precoder design: maximizes the sensing surrogate
/// sum_{i,k,u} Re tr{B_{k,i} X_{k,u}} over PSD blocks X_{k,u} subject to
/// the per-UE aggregate QoS constraints
///   sum_k [tr(C_{k,u} X_{k,u}) - gamma_u sum_{i != u} tr(C_{k,u} X_{k,i})]
///     >= gamma_u sigma2
/// and the power budget sum tr(X) <= P_max, then extracts the principal
/// rank-one component per block, rescales to the relaxation power, and
/// attempts Gaussian randomization when the extracted point misses the
/// QoS recheck. Each candidate is also repaired by per-user power
/// reallocation (the QoS rows are linear in per-user power scales once the
/// directions are fixed). Throws InfeasibleQoS when the program admits no
/// PSD point (a cheap necessary-condition check runs first).
PrecoderSolution solve_precoder(const std::vector<std::vector<arma::cx_mat>>& B,
                                const std::vector<std::vector<arma::cx_mat>>& C,
                                const QosSpec& qos, double sigma2, RandomStream* rng = nullptr,
                                const PrecoderOptions& options = {});

struct CombinerOptions {
    sdp::SdpSettings sdp;
    std::vector<arma::cx_mat> warm_start;  ///< per chain
    long randomization_candidates = 100;
    double randomize_below_ratio = 0.8;
};

struct CombinerSolution {
    Combiner combiner;
    arma::vec rank_ratio;      ///< per chain
    arma::vec chain_objective; ///< per-chain relaxation objective
    bool randomized = false;
    std::vector<arma::cx_mat> relaxation;  ///< per chain, for warm starting
};

/// Combiner design: per RF chain l, maximizes
/// sum_{k,i} Re tr{[D_{k,i}]_l W_l} over PSD W_l with unit diagonal (the
/// N_E x N_E diagonal block of chain l), then reads the phases off the
/// principal eigenvector (zero entries map to phase 0). Chains whose
/// relaxation is far from rank one fall back to Gaussian phase rounding.
CombinerSolution solve_combiner(const std::vector<std::vector<arma::cx_mat>>& D,
                                const channel::ArraySizes& sizes, RandomStream* rng = nullptr,
                                const CombinerOptions& options = {});

struct ReflectionSolution {
    Reflection reflection;
    /// Objective sum_{k,u} |h_dir_{k,u}(upsilon) f_{k,u}|^2 after every
    /// element update; non-decreasing by construction.
    std::vector<double> objective_trace;
    long sweeps = 0;
};

/// Reflection design by cyclic coordinate ascent: the objective is linear
/// in each e^{j upsilon_n} given the others, so every element update is a
/// closed-form phase alignment clamped to [-pi/2, pi/2] (endpoint with the
/// larger objective wins when the unconstrained optimum falls outside).
/// Sweeps until the relative objective change drops below tol.
ReflectionSolution solve_reflection(const channel::ChannelSet& channels, const Precoder& precoder,
                                    double rho, const arma::vec* init_upsilon = nullptr,
                                    double tol = 1e-8, long max_sweeps = 100);

struct AltOptSettings {
    long max_outer = 20;
    double tol = 1e-4;      ///< relative change of the sensing surrogate
    int obs_T = 1;          ///< observation symbols per frame (surrogate scale)
    /// Accumulated information from previous frames, added to the
    /// surrogate trace.
    arma::mat prior_information;
    sdp::SdpSettings sdp;
    bool warm_start = true;
    /// Initial reflection phases / combiner phase profile; empty -> zeros.
    arma::vec init_upsilon;
    arma::mat init_combiner_phases;
};

struct AltOptReport {
    std::vector<double> surrogate;     ///< per iteration + final re-solve
    std::vector<arma::vec> sum_sinr;   ///< per iteration, per UE
    std::vector<double> power;         ///< per iteration [W]
    std::vector<double> min_rank_ratio;
    std::vector<double> mean_rank_ratio;
    long iterations = 0;
    bool converged = false;
    bool qos_met = false;  ///< recheck outcome of the final precoder
};

struct AltOptResult {
    Precoder precoder;
    Combiner combiner;
    Reflection reflection;
    AltOptReport report;
};

/// Joint design loop: precoder -> combiner -> reflection per iteration,
/// stopping when the sensing surrogate stabilizes, then one final precoder
/// re-solve against the final reflection/combiner so the returned precoder
/// meets QoS on the design channels. `ues`/`channels` describe the same
/// (predicted) state. Deterministic for a fixed rng state.
AltOptResult alternating_optimize(const std::vector<channel::UeChannelParams>& ues,
                                  const channel::ChannelSet& channels, double rho,
                                  const QosSpec& qos, double sigma2, RandomStream& rng,
                                  const AltOptSettings& settings = {});

}  // namespace hristrack::beamform
