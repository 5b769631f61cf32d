#pragma once

#include <armadillo>

#include "hristrack/common.hpp"
#include "hristrack/geometry.hpp"

namespace hristrack::ekf {

/// Per-UE filter state. The state vector interleaves position and velocity
/// as [x, vx, y, vy, z, vz] so the constant-velocity transition is the
/// Kronecker form I_3 (x) [[1, T_s], [0, 1]]. Conversion to the
/// position-major order used in logs goes through position_major().
struct UeKinematicState {
    arma::vec state;  ///< length 6
    arma::mat mse;    ///< 6 x 6 error covariance

    geometry::Position3 position() const { return {state(0), state(2), state(4)}; }
    geometry::Velocity3 velocity() const { return {state(1), state(3), state(5)}; }

    /// [x, y, z, vx, vy, vz]
    arma::vec position_major() const;
};

/// Constant-velocity motion model with white-acceleration process noise of
/// intensity sigma_dot.
struct MotionModel {
    double T_s = 0.0;       ///< frame duration [s]
    double sigma_dot = 0.0; ///< process noise intensity

    arma::mat F_xi() const;  ///< 6x6 transition matrix
    arma::mat P_u() const;   ///< 6x6 process noise covariance
};

/// Noiseless constant-velocity propagation F_xi * state.
arma::vec transition(const MotionModel& model, const arma::vec& state);

/// One draw of process noise ~ N(0, P_u) (zero vector when sigma_dot == 0).
arma::vec sample_process_noise(const MotionModel& model, RandomStream& rng);

/// Measurement map g(state) = [theta, psi, phi, tau_H]; depends on the
/// position entries only.
arma::vec measure(const arma::vec& state, const geometry::Position3& p_H);

/// 4x6 Jacobian of g at the given state; velocity columns are zero.
arma::mat measurement_jacobian(const arma::vec& state, const geometry::Position3& p_H);

/// Channel-domain measurement with per-component variances (diagonal
/// covariance). All variances must be strictly positive.
struct Measurement {
    arma::vec z;         ///< length 4: theta, psi, phi, tau_H
    arma::vec cov_diag;  ///< length 4
};

/// z = g(state_true) + w, w ~ N(0, diag(cov_diag)), drawn component-wise in
/// fixed order from rng.
Measurement synthesize_measurement(const arma::vec& state_true, const arma::vec& cov_diag,
                                   const geometry::Position3& p_H, RandomStream& rng);

/// Textbook Kalman step with an explicit linear measurement map: predict
/// with (F_xi, P_u), then update against z = H state + noise, noise
/// covariance R. The EKF step below runs exactly this routine with the
/// linearized geometry map. Exposed for oracle comparisons.
UeKinematicState kalman_step_linear(const MotionModel& model, const UeKinematicState& prev,
                                    const arma::mat& H, const arma::mat& R, const arma::vec& z);

/// One EKF cycle: state/MSE prediction, gain, state and MSE update, with
/// the measurement Jacobian and map evaluated at the predicted state.
/// Angle innovations are wrapped to (-pi, pi]. Throws SingularInnovation
/// when the innovation covariance cannot be inverted.
UeKinematicState ekf_step(const MotionModel& model, const UeKinematicState& prev,
                          const Measurement& meas, const geometry::Position3& p_H);

/// Recover the UE position that best explains z: the HRIS bearing ray
/// (phi, psi) is intersected with the BS bearing half-plane (theta) for an
/// initial guess, then Gauss-Newton least squares over all four components
/// (delay residual scaled by c to meters) refines it. Throws
/// InconsistentMeasurement when tau_H violates the triangle inequality or
/// the residual exceeds residual_tol (natural units, delay in meters).
geometry::Position3 invert_measurement(const arma::vec& z, const geometry::Position3& p_H,
                                       double residual_tol = 1e-6);

/// Filter initialization from the first measurement: position from
/// invert_measurement (residual tolerance widened to the measurement noise
/// scale), zero velocity, and a fixed diagonal prior MSE of 10 m^2 per
/// position axis and 25 (m/s)^2 per velocity axis.
UeKinematicState initial_state_from_measurement(const Measurement& meas,
                                                const geometry::Position3& p_H);

}  // namespace hristrack::ekf
