#pragma once

#include <armadillo>
#include <vector>

#include "hristrack/channel.hpp"
#include "hristrack/common.hpp"
#include "hristrack/geometry.hpp"

namespace hristrack::fim {

/// The estimated parameter vector stacks, parameter-major, the BS azimuths,
/// HRIS elevations, HRIS azimuths and bistatic delays of all UEs:
/// [theta_1..theta_U, psi_1..psi_U, phi_1..phi_U, tau_1..tau_U], length 4U.
enum class ParamKind { Theta = 0, Psi = 1, Phi = 2, TauH = 3 };

inline ParamKind param_kind(int i, int U) { return static_cast<ParamKind>(i / U); }
inline int param_ue(int i, int U) { return i % U; }

/// Entrywise derivative of ula_response with respect to the angle:
/// d/da e^{j pi n sin a}/sqrt(N) = j pi n cos(a) * entry.
arma::cx_vec d_ula_response(double angle, int n);

/// Rank-one factorization of d H_h_k / d eta_i = scale * hris * bs^H.
struct ChannelDeriv {
    std::complex<double> scale{0.0, 0.0};
    arma::cx_vec hris;  ///< N_H left factor
    arma::cx_vec bs;    ///< N_T right factor (appears conjugated)

    arma::cx_mat matrix() const { return scale * (hris * bs.t()); }
};

/// Analytic derivative of the bistatic channel at subcarrier k (1-based)
/// with respect to parameter index i in [0, 4U). Gains and Doppler shifts
/// are treated as known constants.
ChannelDeriv channel_derivative(const std::vector<channel::UeChannelParams>& ues,
                                const channel::SubcarrierGrid& grid,
                                const channel::ArraySizes& sizes, int k, int i);

/// Derivative of the noiseless combined observation mean factor
/// mu_k = W_H^H H_h_k F_k with respect to parameter i: an N_RF x U matrix.
arma::cx_mat d_mu_d_param(const std::vector<channel::UeChannelParams>& ues,
                          const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                          const arma::cx_mat& W_H, const arma::cx_mat& F_k, int k, int i);

/// Single-frame Fisher information of the 4U channel-domain parameters:
/// J(i,j) = (2 T rho^2 / sigma2) sum_k Re tr{ (d mu_k/d eta_i)^H d mu_k/d eta_j }.
arma::mat frame_fim(const std::vector<channel::UeChannelParams>& ues,
                    const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                    const arma::cx_mat& W_H, const std::vector<arma::cx_mat>& F, double rho,
                    double sigma2, int T);

/// Accumulated information across frames, J~_m = frame + J~_{m-1}.
struct FimRecursionState {
    arma::mat J_tilde;
    int frame_index = 0;

    static FimRecursionState zero(int U) {
        FimRecursionState s;
        s.J_tilde.zeros(4 * U, 4 * U);
        s.frame_index = 0;
        return s;
    }
};

FimRecursionState accumulate(const FimRecursionState& prior, const arma::mat& frame);

/// 4x3 Jacobian of the measurement map [theta, psi, phi, tau_H] with respect
/// to the UE position (x, y, z). Shared by the EKF linearization.
arma::mat measurement_position_jacobian(const geometry::Position3& p_u,
                                        const geometry::Position3& p_H);

/// Jacobian of the 4U channel-domain parameters with respect to the 6U
/// location-domain parameters [x_1..x_U, y.., z.., vx.., vy.., vz..];
/// velocity columns are identically zero.
arma::mat location_jacobian(const std::vector<geometry::Position3>& positions,
                            const geometry::Position3& p_H);

/// Position error bound and per-parameter CRBs from the accumulated FIM.
struct Peb {
    double value = 0.0;        ///< sqrt(tr(J~^{-1}))
    arma::mat per_param_crbs;  ///< 4 x U; row order theta, psi, phi, tau
};

/// Inverts the accumulated FIM (relative ridge for near-singular inputs);
/// throws SingularInformation when no trustworthy inverse exists.
Peb peb(const FimRecursionState& state);

/// tr of the would-be accumulated FIM: tr(prior) + tr(frame FIM). Cheaper
/// than frame_fim since only the diagonal is formed. This is the sensing
/// objective of the alternating design.
double fim_trace_surrogate(const std::vector<channel::UeChannelParams>& ues,
                           const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                           const arma::cx_mat& W_H, const std::vector<arma::cx_mat>& F, double rho,
                           double sigma2, int T, const FimRecursionState& prior);

}  // namespace hristrack::fim
