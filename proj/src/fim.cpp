#include "hristrack/fim.hpp"

#include <cmath>

namespace hristrack::fim {

namespace {

constexpr std::complex<double> kJ{0.0, 1.0};

void check_param_index(int i, int U) {
    if (i < 0 || i >= 4 * U)
        throw IndexOutOfRange("parameter index " + std::to_string(i) + " outside 0.." +
                              std::to_string(4 * U - 1));
}

double check_prefactor(double rho, double sigma2, int T) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw DimensionMismatch("rho must lie in [0, 1]");
    if (!(sigma2 > 0.0)) throw DimensionMismatch("noise variance must be > 0");
    if (T < 1) throw DimensionMismatch("symbol count T must be >= 1");
    return 2.0 * T * rho * rho / sigma2;
}

/// All 4U observation-mean derivatives at one subcarrier, as N_RF x U blocks.
std::vector<arma::cx_mat> all_mu_derivs(const std::vector<channel::UeChannelParams>& ues,
                                        const channel::SubcarrierGrid& grid,
                                        const channel::ArraySizes& sizes, const arma::cx_mat& W_H,
                                        const arma::cx_mat& F_k, int k) {
    const int U = static_cast<int>(ues.size());
    std::vector<arma::cx_mat> M(4 * U);
    for (int i = 0; i < 4 * U; ++i) {
        const ChannelDeriv d = channel_derivative(ues, grid, sizes, k, i);
        // W^H (scale hris bs^H) F as an outer product of two small vectors.
        const arma::cx_vec left = W_H.t() * d.hris;
        const arma::cx_rowvec right = d.bs.t() * F_k;
        M[i] = d.scale * (left * right);
    }
    return M;
}

}  // namespace

arma::cx_vec d_ula_response(double angle, int n) {
    arma::cx_vec a = channel::ula_response(angle, n);
    const std::complex<double> f = kJ * kPi * std::cos(angle);
    for (int i = 0; i < n; ++i) a(i) *= f * static_cast<double>(i);
    return a;
}

ChannelDeriv channel_derivative(const std::vector<channel::UeChannelParams>& ues,
                                const channel::SubcarrierGrid& grid,
                                const channel::ArraySizes& sizes, int k, int i) {
    const int U = static_cast<int>(ues.size());
    if (U < 1) throw DimensionMismatch("at least one UE required");
    check_param_index(i, U);
    const int u = param_ue(i, U);
    const ParamKind kind = param_kind(i, U);
    const channel::UeChannelParams& p = ues[u];
    const double f_k = grid.frequency(k);
    const double f_eff = f_k - p.doppler.f_d_bistatic;
    const std::complex<double> g =
        p.gains.a_h * std::exp(-kJ * (2.0 * kPi * f_eff * p.delays.tau_h));

    ChannelDeriv d;
    switch (kind) {
        case ParamKind::Theta:
            d.scale = g;
            d.hris = channel::steer_hris(p.angles.psi, p.angles.phi, sizes.N_RF, sizes.N_E);
            d.bs = d_ula_response(p.angles.theta, sizes.N_T);
            break;
        case ParamKind::Psi:
            d.scale = g;
            d.hris = arma::kron(channel::ula_response(p.angles.phi, sizes.N_RF),
                                d_ula_response(p.angles.psi, sizes.N_E));
            d.bs = channel::ula_response(p.angles.theta, sizes.N_T);
            break;
        case ParamKind::Phi:
            d.scale = g;
            d.hris = arma::kron(d_ula_response(p.angles.phi, sizes.N_RF),
                                channel::ula_response(p.angles.psi, sizes.N_E));
            d.bs = channel::ula_response(p.angles.theta, sizes.N_T);
            break;
        case ParamKind::TauH:
            d.scale = g * (-kJ * (2.0 * kPi * f_eff));
            d.hris = channel::steer_hris(p.angles.psi, p.angles.phi, sizes.N_RF, sizes.N_E);
            d.bs = channel::ula_response(p.angles.theta, sizes.N_T);
            break;
    }
    return d;
}

arma::cx_mat d_mu_d_param(const std::vector<channel::UeChannelParams>& ues,
                          const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                          const arma::cx_mat& W_H, const arma::cx_mat& F_k, int k, int i) {
    if (static_cast<int>(W_H.n_rows) != sizes.n_h() ||
        static_cast<int>(F_k.n_rows) != sizes.N_T)
        throw DimensionMismatch("d_mu_d_param: combiner/precoder shapes disagree with sizes");
    const ChannelDeriv d = channel_derivative(ues, grid, sizes, k, i);
    const arma::cx_vec left = W_H.t() * d.hris;
    const arma::cx_rowvec right = d.bs.t() * F_k;
    return d.scale * (left * right);
}

arma::mat frame_fim(const std::vector<channel::UeChannelParams>& ues,
                    const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                    const arma::cx_mat& W_H, const std::vector<arma::cx_mat>& F, double rho,
                    double sigma2, int T) {
    const double pref = check_prefactor(rho, sigma2, T);
    const int U = static_cast<int>(ues.size());
    if (static_cast<int>(F.size()) != grid.K)
        throw DimensionMismatch("frame_fim: precoder list must have K entries");
    arma::mat J(4 * U, 4 * U, arma::fill::zeros);
    for (int k = 1; k <= grid.K; ++k) {
        const std::vector<arma::cx_mat> M = all_mu_derivs(ues, grid, sizes, W_H, F[k - 1], k);
        for (int i = 0; i < 4 * U; ++i) {
            for (int j = i; j < 4 * U; ++j) {
                const double v =
                    std::real(arma::cdot(arma::vectorise(M[i]), arma::vectorise(M[j])));
                J(i, j) += v;
                if (j != i) J(j, i) += v;
            }
        }
    }
    return pref * J;
}

FimRecursionState accumulate(const FimRecursionState& prior, const arma::mat& frame) {
    if (prior.J_tilde.n_rows != frame.n_rows || prior.J_tilde.n_cols != frame.n_cols)
        throw DimensionMismatch("accumulate: prior and frame FIM dimensions disagree");
    FimRecursionState next;
    next.J_tilde = prior.J_tilde + frame;
    next.frame_index = prior.frame_index + 1;
    return next;
}

arma::mat measurement_position_jacobian(const geometry::Position3& p,
                                        const geometry::Position3& p_H) {
    const double rho_bs2 = p.x * p.x + p.y * p.y;
    const double dx = p.x - p_H.x, dy = p.y - p_H.y, w = p.z - p_H.z;
    const double r2 = dx * dx + dy * dy;
    const double r = std::sqrt(r2);
    if (rho_bs2 < 1e-18 || r2 < 1e-18)
        throw DegenerateGeometry("measurement Jacobian singular (UE above BS or HRIS)");
    const double R2 = r2 + w * w;
    const double d_bu = geometry::norm(p);
    const double d_uh = geometry::distance(p, p_H);
    if (d_bu < 1e-9 || d_uh < 1e-9) throw DegenerateGeometry("degenerate UE position");

    arma::mat Jm(4, 3);
    // theta = atan2(y, x)
    Jm(0, 0) = -p.y / rho_bs2;
    Jm(0, 1) = p.x / rho_bs2;
    Jm(0, 2) = 0.0;
    // psi = atan2(z - z_H, r)
    Jm(1, 0) = -w * dx / (r * R2);
    Jm(1, 1) = -w * dy / (r * R2);
    Jm(1, 2) = r / R2;
    // phi = atan2(y - y_H, x - x_H)
    Jm(2, 0) = -dy / r2;
    Jm(2, 1) = dx / r2;
    Jm(2, 2) = 0.0;
    // tau_H = (||p|| + ||p - p_H||)/c
    Jm(3, 0) = (p.x / d_bu + dx / d_uh) / kSpeedOfLight;
    Jm(3, 1) = (p.y / d_bu + dy / d_uh) / kSpeedOfLight;
    Jm(3, 2) = (p.z / d_bu + w / d_uh) / kSpeedOfLight;
    return Jm;
}

arma::mat location_jacobian(const std::vector<geometry::Position3>& positions,
                            const geometry::Position3& p_H) {
    const int U = static_cast<int>(positions.size());
    if (U < 1) throw DimensionMismatch("at least one UE required");
    arma::mat T(4 * U, 6 * U, arma::fill::zeros);
    for (int u = 0; u < U; ++u) {
        const arma::mat Jm = measurement_position_jacobian(positions[u], p_H);
        for (int kind = 0; kind < 4; ++kind)
            for (int coord = 0; coord < 3; ++coord)
                T(kind * U + u, coord * U + u) = Jm(kind, coord);
        // velocity columns (3U..6U-1) stay zero
    }
    return T;
}

Peb peb(const FimRecursionState& state) {
    const arma::uword n = state.J_tilde.n_rows;
    if (n == 0 || n % 4 != 0 || state.J_tilde.n_cols != n)
        throw DimensionMismatch("peb: accumulated FIM must be square with 4U rows");
    const int U = static_cast<int>(n / 4);
    arma::mat J = 0.5 * (state.J_tilde + state.J_tilde.t());

    arma::vec ev;
    arma::mat V;
    if (!arma::eig_sym(ev, V, J)) throw SingularInformation("eigendecomposition failed");
    double vmax = ev.max();
    if (!(vmax > 0.0)) throw SingularInformation("accumulated FIM carries no information");
    if (ev.min() <= 1e-12 * vmax) {
        // Relative ridge for near-singular information.
        const double ridge = 1e-12 * arma::trace(J) / static_cast<double>(n);
        J.diag() += ridge;
        if (!arma::eig_sym(ev, V, J)) throw SingularInformation("eigendecomposition failed");
        if (!(ev.min() > 0.0))
            throw SingularInformation("accumulated FIM singular beyond ridge repair");
    }

    const arma::mat Vs = V * arma::diagmat(1.0 / arma::sqrt(ev));
    Peb out;
    out.value = std::sqrt(arma::accu(1.0 / ev));
    out.per_param_crbs.set_size(4, U);
    for (int kind = 0; kind < 4; ++kind)
        for (int u = 0; u < U; ++u) {
            const arma::uword idx = static_cast<arma::uword>(kind) * U + u;
            out.per_param_crbs(kind, u) = arma::dot(Vs.row(idx), Vs.row(idx));
        }
    return out;
}

double fim_trace_surrogate(const std::vector<channel::UeChannelParams>& ues,
                           const channel::SubcarrierGrid& grid, const channel::ArraySizes& sizes,
                           const arma::cx_mat& W_H, const std::vector<arma::cx_mat>& F, double rho,
                           double sigma2, int T, const FimRecursionState& prior) {
    const double pref = check_prefactor(rho, sigma2, T);
    const int U = static_cast<int>(ues.size());
    if (static_cast<int>(F.size()) != grid.K)
        throw DimensionMismatch("fim_trace_surrogate: precoder list must have K entries");
    double tr = 0.0;
    for (int k = 1; k <= grid.K; ++k) {
        for (int i = 0; i < 4 * U; ++i) {
            const ChannelDeriv d = channel_derivative(ues, grid, sizes, k, i);
            const arma::cx_vec left = W_H.t() * d.hris;
            const arma::cx_rowvec right = d.bs.t() * F[k - 1];
            tr += std::norm(d.scale) * arma::dot(arma::abs(left), arma::abs(left)) *
                  arma::dot(arma::abs(right), arma::abs(right));
        }
    }
    return pref * tr + arma::trace(prior.J_tilde);
}

}  // namespace hristrack::fim
