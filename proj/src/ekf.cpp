#include "hristrack/ekf.hpp"

#include <cmath>

#include "hristrack/fim.hpp"

namespace hristrack::ekf {

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

geometry::Position3 position_of(const arma::vec& state) {
    return {state(0), state(2), state(4)};
}

void check_state(const arma::vec& state) {
    if (state.n_elem != 6) throw DimensionMismatch("kinematic state must have 6 entries");
}

/// Shared measurement-update half of the Kalman cycle. `innovation` is
/// z - g(pred_state) computed by the caller (wrapped where needed).
UeKinematicState update_core(const arma::vec& pred_state, const arma::mat& pred_mse,
                             const arma::mat& H, const arma::mat& R,
                             const arma::vec& innovation) {
    const arma::mat S = H * pred_mse * H.t() + R;
    arma::mat S_inv;
    if (!arma::inv(S_inv, S)) throw SingularInnovation("innovation covariance not invertible");
    const arma::mat K = pred_mse * H.t() * S_inv;
    UeKinematicState next;
    next.state = pred_state + K * innovation;
    const arma::mat M = (arma::eye(6, 6) - K * H) * pred_mse;
    next.mse = 0.5 * (M + M.t());
    return next;
}

}  // namespace

arma::vec UeKinematicState::position_major() const {
    check_state(state);
    return {state(0), state(2), state(4), state(1), state(3), state(5)};
}

arma::mat MotionModel::F_xi() const {
    const arma::mat blk = {{1.0, T_s}, {0.0, 1.0}};
    return arma::kron(arma::eye(3, 3), blk);
}

arma::mat MotionModel::P_u() const {
    const double t = T_s;
    const arma::mat blk = {{t * t * t / 3.0, t * t / 2.0}, {t * t / 2.0, t}};
    return sigma_dot * arma::kron(arma::eye(3, 3), blk);
}

arma::vec transition(const MotionModel& model, const arma::vec& state) {
    check_state(state);
    return model.F_xi() * state;
}

arma::vec sample_process_noise(const MotionModel& model, RandomStream& rng) {
    if (model.sigma_dot == 0.0) return arma::vec(6, arma::fill::zeros);
    const arma::mat P = model.P_u();
    arma::mat L;
    if (!arma::chol(L, P, "lower"))
        throw DimensionMismatch("process noise covariance not positive definite");
    arma::vec xi(6);
    for (int i = 0; i < 6; ++i) xi(i) = rng.gaussian();
    return L * xi;
}

arma::vec measure(const arma::vec& state, const geometry::Position3& p_H) {
    check_state(state);
    const geometry::Position3 p = position_of(state);
    const geometry::AngleSet a = geometry::angles_from_position(p, p_H);
    const geometry::LinkDelays d = geometry::link_delays(p, p_H);
    return {a.theta, a.psi, a.phi, d.tau_h};
}

arma::mat measurement_jacobian(const arma::vec& state, const geometry::Position3& p_H) {
    check_state(state);
    const arma::mat Jp = fim::measurement_position_jacobian(position_of(state), p_H);
    arma::mat H(4, 6, arma::fill::zeros);
    H.col(0) = Jp.col(0);
    H.col(2) = Jp.col(1);
    H.col(4) = Jp.col(2);
    return H;
}

Measurement synthesize_measurement(const arma::vec& state_true, const arma::vec& cov_diag,
                                   const geometry::Position3& p_H, RandomStream& rng) {
    if (cov_diag.n_elem != 4) throw DimensionMismatch("measurement covariance must have 4 entries");
    for (arma::uword i = 0; i < 4; ++i)
        if (!(cov_diag(i) >= 0.0)) throw DimensionMismatch("measurement variances must be >= 0");
    Measurement m;
    m.z = measure(state_true, p_H);
    m.cov_diag = cov_diag;
    for (arma::uword i = 0; i < 4; ++i) m.z(i) += std::sqrt(cov_diag(i)) * rng.gaussian();
    return m;
}

UeKinematicState kalman_step_linear(const MotionModel& model, const UeKinematicState& prev,
                                    const arma::mat& H, const arma::mat& R, const arma::vec& z) {
    check_state(prev.state);
    const arma::vec pred = transition(model, prev.state);
    const arma::mat pred_mse = model.F_xi() * prev.mse * model.F_xi().t() + model.P_u();
    return update_core(pred, pred_mse, H, R, z - H * pred);
}

UeKinematicState ekf_step(const MotionModel& model, const UeKinematicState& prev,
                          const Measurement& meas, const geometry::Position3& p_H) {
    check_state(prev.state);
    if (meas.z.n_elem != 4 || meas.cov_diag.n_elem != 4)
        throw DimensionMismatch("measurement must have 4 entries");
    for (arma::uword i = 0; i < 4; ++i)
        if (!(meas.cov_diag(i) > 0.0))
            throw DimensionMismatch("measurement variances must be strictly positive");

    const arma::vec pred = transition(model, prev.state);
    const arma::mat pred_mse = model.F_xi() * prev.mse * model.F_xi().t() + model.P_u();
    const arma::mat H = measurement_jacobian(pred, p_H);
    arma::vec innov = meas.z - measure(pred, p_H);
    for (int i = 0; i < 3; ++i) innov(i) = wrap_angle(innov(i));
    return update_core(pred, pred_mse, H, arma::diagmat(meas.cov_diag), innov);
}

geometry::Position3 invert_measurement(const arma::vec& z, const geometry::Position3& p_H,
                                       double residual_tol) {
    if (z.n_elem != 4) throw DimensionMismatch("measurement must have 4 entries");
    const double theta = z(0), psi = z(1), phi = z(2), tau = z(3);
    const double d_bh = geometry::norm(p_H);
    if (tau * kSpeedOfLight < d_bh - 1e-9)
        throw InconsistentMeasurement("bistatic delay below the BS-HRIS baseline");

    // Initial guess: intersect the HRIS bearing ray with the BS bearing
    // half-plane {p : atan2(y, x) = theta}.
    const arma::vec d = {std::cos(psi) * std::cos(phi), std::cos(psi) * std::sin(phi),
                         std::sin(psi)};
    const arma::vec ph = {p_H.x, p_H.y, p_H.z};
    const arma::vec n = {-std::sin(theta), std::cos(theta), 0.0};
    arma::vec p0;
    const double dn = arma::dot(d, n);
    const double s_plane = std::abs(dn) > 1e-9 ? -arma::dot(ph, n) / dn : -1.0;
    if (s_plane > 1e-6) {
        p0 = ph + s_plane * d;
    } else {
        // Bearing ray nearly parallel to the half-plane: fall back to the
        // range implied by the bistatic delay along the HRIS bearing.
        const double range = std::max(1.0, tau * kSpeedOfLight - d_bh);
        p0 = ph + range * d;
    }

    // Gauss-Newton on [angles; c*(tau residual)] with mild damping.
    arma::vec p = p0;
    double lambda = 1e-9;
    auto scaled_residual = [&](const arma::vec& pv, arma::vec& e) -> bool {
        const geometry::Position3 pp{pv(0), pv(1), pv(2)};
        try {
            const geometry::AngleSet a = geometry::angles_from_position(pp, p_H);
            const geometry::LinkDelays dl = geometry::link_delays(pp, p_H);
            e = {wrap_angle(a.theta - theta), a.psi - psi, wrap_angle(a.phi - phi),
                 kSpeedOfLight * (dl.tau_h - tau)};
            return true;
        } catch (const DegenerateGeometry&) {
            return false;
        }
    };
    arma::vec e;
    if (!scaled_residual(p, e))
        throw InconsistentMeasurement("initial position guess degenerate");
    double cost = arma::dot(e, e);
    for (int it = 0; it < 100; ++it) {
        const geometry::Position3 pp{p(0), p(1), p(2)};
        arma::mat J;
        try {
            J = fim::measurement_position_jacobian(pp, p_H);
        } catch (const DegenerateGeometry&) {
            break;  // iterate walked into a singular point; report the fit residual
        }
        J.row(3) *= kSpeedOfLight;
        const arma::mat JtJ = J.t() * J;
        const arma::vec g = J.t() * e;
        arma::vec step;
        if (!arma::solve(step, JtJ + lambda * arma::diagmat(JtJ.diag() + 1e-12), -g,
                         arma::solve_opts::no_approx)) {
            lambda *= 10.0;
            if (lambda > 1e8) break;
            continue;
        }
        arma::vec p_new = p + step;
        arma::vec e_new;
        if (scaled_residual(p_new, e_new) && arma::dot(e_new, e_new) <= cost) {
            p = p_new;
            e = e_new;
            const double new_cost = arma::dot(e_new, e_new);
            const bool converged = std::abs(cost - new_cost) <= 1e-30 + 1e-14 * cost &&
                                   arma::norm(step) < 1e-10;
            cost = new_cost;
            lambda = std::max(lambda * 0.5, 1e-12);
            if (converged) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e8) break;
        }
    }
    if (std::sqrt(cost) > residual_tol)
        throw InconsistentMeasurement("measurement could not be fitted to a position (residual " +
                                      std::to_string(std::sqrt(cost)) + ")");
    return {p(0), p(1), p(2)};
}

UeKinematicState initial_state_from_measurement(const Measurement& meas,
                                                const geometry::Position3& p_H) {
    // Accept fit residuals up to a generous multiple of the noise scale
    // (angles in rad, delay converted to meters), floored at the consistent
    // -input contract of 1e-6.
    double noise_scale2 = meas.cov_diag(0) + meas.cov_diag(1) + meas.cov_diag(2) +
                          meas.cov_diag(3) * kSpeedOfLight * kSpeedOfLight;
    const double tol = std::max(1e-6, 20.0 * std::sqrt(noise_scale2));
    const geometry::Position3 p = invert_measurement(meas.z, p_H, tol);
    UeKinematicState s;
    s.state = {p.x, 0.0, p.y, 0.0, p.z, 0.0};
    s.mse = arma::diagmat(arma::vec{10.0, 25.0, 10.0, 25.0, 10.0, 25.0});
    return s;
}

}  // namespace hristrack::ekf
