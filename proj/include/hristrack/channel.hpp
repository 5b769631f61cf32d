#pragma once

#include <armadillo>
#include <vector>

#include "hristrack/common.hpp"
#include "hristrack/geometry.hpp"

namespace hristrack::channel {

/// OFDM grid: K subcarriers of spacing delta_f centered on f_c.
struct SubcarrierGrid {
    double f_c = 0.0;      ///< carrier frequency [Hz]
    double delta_f = 0.0;  ///< subcarrier spacing [Hz]
    int K = 0;             ///< number of subcarriers

    /// Frequency of subcarrier k (1-based): f_c + (k - (K+1)/2) * delta_f.
    /// Throws IndexOutOfRange unless 1 <= k <= K.
    double frequency(int k) const;

    double wavelength() const { return kSpeedOfLight / f_c; }
};

/// Antenna panel dimensions. The HRIS is a planar aperture of N_RF columns
/// (one RX RF chain each) by N_E elements per column, N_H = N_RF * N_E.
struct ArraySizes {
    int N_T = 0;   ///< BS transmit antennas (half-wavelength ULA)
    int N_RF = 0;  ///< HRIS RX RF chains (= aperture columns)
    int N_E = 0;   ///< HRIS elements per column
    int n_h() const { return N_RF * N_E; }
};

/// Half-wavelength ULA response, entries e^{j pi n sin(angle)} / sqrt(N),
/// n = 0..N-1. Unit Euclidean norm for every angle.
arma::cx_vec ula_response(double angle, int n);

/// BS steering vector a_BS(theta) in C^{N_T}.
arma::cx_vec steer_bs(double theta, int n_t);

/// HRIS steering vector a_H(psi, phi) = a_rows(phi) (x) a_cols(psi), the
/// Kronecker product of the column-index (azimuth, length N_RF) and the
/// in-column (elevation, length N_E) ULA factors. Element (l-1)*N_E + n
/// belongs to chain l; unit norm overall.
arma::cx_vec steer_hris(double psi, double phi, int n_rf, int n_e);

/// Everything about one UE that the channel synthesis needs. gain_hu /
/// tau_hu / f_d_hu describe the direct HRIS->UE leg used by the reflected
/// downlink path (same geometry record as the bistatic path).
struct UeChannelParams {
    geometry::AngleSet angles;
    geometry::LinkDelays delays;
    geometry::PathGains gains;
    geometry::DopplerShift doppler;
    double gain_hu = 0.0;  ///< lambda / (4 pi ||p_H - p_u||^2)
    double tau_hu = 0.0;   ///< ||p_H - p_u|| / c
    double f_d_hu = 0.0;   ///< (f_c/c) u_H . v
};

/// BS--HRIS static link parameters.
struct BsHrisParams {
    geometry::AngleSet angles;  ///< theta_BR (= psi_BR) and phi_BR
    double tau_br = 0.0;
    std::complex<double> a_br{0.0, 0.0};
};

/// Build the per-UE channel parameter record from positions/velocities.
UeChannelParams make_ue_params(const geometry::Position3& p_u, const geometry::Velocity3& v_u,
                               const geometry::Position3& p_H, double f_c, double omega,
                               double clock_bias = 0.0);

BsHrisParams make_bs_hris_params(const geometry::Position3& p_H, double f_c);

/// All wideband channels of one frame. Per subcarrier k (0-based index):
///   h_dl[k]: N_T x U, column u is the direct BS->UE downlink channel;
///   H_bh[k]: N_H x N_T, BS->HRIS channel;
///   H_h[k]:  N_H x N_T, bistatic sensing channel (sum over UEs);
///   h_hu[k]: U x N_H, row u is the HRIS->UE channel.
struct ChannelSet {
    SubcarrierGrid grid;
    ArraySizes sizes;
    int U = 0;
    std::vector<arma::cx_mat> h_dl;
    std::vector<arma::cx_mat> H_bh;
    std::vector<arma::cx_mat> H_h;
    std::vector<arma::cx_mat> h_hu;
};

/// Synthesize every channel matrix of a frame from geometry-level records.
/// Requires U >= 1 and U <= N_T <= N_H (model feasibility assumption);
/// violations throw DimensionMismatch.
ChannelSet assemble_channels(const std::vector<UeChannelParams>& ues, const BsHrisParams& bh,
                             const SubcarrierGrid& grid, const ArraySizes& sizes);

/// Composite downlink row h_dir = h_dl^T + (1-rho) h_hu diag(phi) H_bh for
/// one (k, u). phi must be unit-modulus entrywise (1e-9 tolerance) and rho
/// in [0, 1].
arma::cx_rowvec effective_dl_row(const arma::cx_vec& h_dl, const arma::cx_rowvec& h_hu,
                                 const arma::cx_vec& phi, const arma::cx_mat& H_bh, double rho);

/// Composite downlink rows for every (k, u): element k is U x N_T with row u
/// the effective channel of UE u.
std::vector<arma::cx_mat> effective_dl_channel(const ChannelSet& ch, const arma::cx_vec& phi,
                                               double rho);

/// U x T block of unit-modulus pilot/data symbols with exact row
/// orthogonality: S_k S_k^H = T I_U. Rows are rows of the T-point DFT
/// matrix offset by (k-1)*U (k 1-based) so different subcarriers carry
/// different symbols. Requires U <= T.
arma::cx_mat symbol_block(int U, int T, int k);

/// Absorbed-path observation Y_k = rho W_H^H H_h_k F_k S_k + N with N
/// i.i.d. CN(0, sigma2) entries drawn from rng.
arma::cx_mat hris_rx_signal(const arma::cx_mat& W_H, const arma::cx_mat& H_h_k,
                            const arma::cx_mat& F_k, const arma::cx_mat& S_k, double rho,
                            double sigma2, RandomStream& rng);

/// Per-subcarrier SINRs and per-UE rates of a precoder F against composite
/// rows h_dir (both indexed [k], shapes U x N_T and N_T x U).
struct SinrRate {
    arma::mat sinr;      ///< K x U, linear scale
    arma::vec sum_sinr;  ///< U, sum over subcarriers (linear)
    arma::vec rate;      ///< U, sum_k log2(1 + SINR_{k,u}) [bits/s/Hz]
};

SinrRate sinr_and_rate(const std::vector<arma::cx_mat>& h_dir,
                       const std::vector<arma::cx_mat>& F, double sigma2);

}  // namespace hristrack::channel
