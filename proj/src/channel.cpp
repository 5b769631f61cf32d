#include "hristrack/channel.hpp"

#include <cmath>

namespace hristrack::channel {

namespace {

constexpr std::complex<double> kJ{0.0, 1.0};

void check_grid(const SubcarrierGrid& grid) {
    if (grid.K < 1) throw DimensionMismatch("subcarrier count K must be >= 1");
    if (!(grid.f_c > 0.0)) throw DimensionMismatch("carrier frequency must be positive");
    if (!(grid.delta_f > 0.0)) throw DimensionMismatch("subcarrier spacing must be positive");
}

void check_sizes(const ArraySizes& s) {
    if (s.N_T < 1 || s.N_RF < 1 || s.N_E < 1)
        throw DimensionMismatch("array sizes must all be >= 1");
}

void check_unit_modulus(const arma::cx_vec& phi) {
    for (arma::uword n = 0; n < phi.n_elem; ++n) {
        if (std::abs(std::abs(phi(n)) - 1.0) > 1e-9)
            throw UnitModulusViolation("reflection coefficient off the unit circle at element " +
                                       std::to_string(n));
    }
}

void check_rho(double rho) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw DimensionMismatch("power splitting ratio must lie in [0, 1]");
}

}  // namespace

double SubcarrierGrid::frequency(int k) const {
    check_grid(*this);
    if (k < 1 || k > K)
        throw IndexOutOfRange("subcarrier index " + std::to_string(k) + " outside 1.." +
                              std::to_string(K));
    return f_c + (static_cast<double>(k) - 0.5 * (K + 1)) * delta_f;
}

arma::cx_vec ula_response(double angle, int n) {
    if (n < 1) throw DimensionMismatch("array length must be >= 1");
    arma::cx_vec a(n);
    const double step = kPi * std::sin(angle);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) a(i) = std::polar(scale, step * i);
    return a;
}

arma::cx_vec steer_bs(double theta, int n_t) { return ula_response(theta, n_t); }

arma::cx_vec steer_hris(double psi, double phi, int n_rf, int n_e) {
    return arma::kron(ula_response(phi, n_rf), ula_response(psi, n_e));
}

UeChannelParams make_ue_params(const geometry::Position3& p_u, const geometry::Velocity3& v_u,
                               const geometry::Position3& p_H, double f_c, double omega,
                               double clock_bias) {
    const double lambda = kSpeedOfLight / f_c;
    UeChannelParams p;
    p.angles = geometry::angles_from_position(p_u, p_H);
    p.delays = geometry::link_delays(p_u, p_H, clock_bias);
    p.gains = geometry::path_gains(p_u, p_H, lambda, omega);
    p.doppler = geometry::doppler(p_u, v_u, p_H, f_c);
    const double d_uh = geometry::distance(p_u, p_H);
    p.gain_hu = lambda / (4.0 * kPi * d_uh * d_uh);
    p.tau_hu = d_uh / kSpeedOfLight;
    // Doppler of the HRIS->UE leg alone: projection on u_H only.
    p.f_d_hu = p.doppler.f_d_bistatic - p.doppler.f_d_dl;
    return p;
}

BsHrisParams make_bs_hris_params(const geometry::Position3& p_H, double f_c) {
    const double lambda = kSpeedOfLight / f_c;
    BsHrisParams b;
    b.angles = geometry::bs_hris_angles(p_H);
    const double d2 = p_H.x * p_H.x + p_H.y * p_H.y + p_H.z * p_H.z;
    b.tau_br = std::sqrt(d2) / kSpeedOfLight;
    b.a_br = lambda / (4.0 * kPi * d2);
    return b;
}

ChannelSet assemble_channels(const std::vector<UeChannelParams>& ues, const BsHrisParams& bh,
                             const SubcarrierGrid& grid, const ArraySizes& sizes) {
    check_grid(grid);
    check_sizes(sizes);
    const int U = static_cast<int>(ues.size());
    const int N_H = sizes.n_h();
    if (U < 1) throw DimensionMismatch("at least one UE required");
    if (!(U <= sizes.N_T && sizes.N_T <= N_H))
        throw DimensionMismatch("model requires U <= N_T <= N_H");

    ChannelSet ch;
    ch.grid = grid;
    ch.sizes = sizes;
    ch.U = U;
    ch.h_dl.resize(grid.K);
    ch.H_bh.resize(grid.K);
    ch.H_h.resize(grid.K);
    ch.h_hu.resize(grid.K);

    // Angle-dependent vectors are frequency-flat; hoist them out of the k loop.
    const arma::cx_vec a_h_br = steer_hris(bh.angles.psi, bh.angles.phi, sizes.N_RF, sizes.N_E);
    const arma::cx_vec a_bs_br = steer_bs(bh.angles.theta, sizes.N_T);
    std::vector<arma::cx_vec> a_bs_u(U), a_h_u(U);
    for (int u = 0; u < U; ++u) {
        a_bs_u[u] = steer_bs(ues[u].angles.theta, sizes.N_T);
        a_h_u[u] = steer_hris(ues[u].angles.psi, ues[u].angles.phi, sizes.N_RF, sizes.N_E);
    }

    for (int k = 1; k <= grid.K; ++k) {
        const double f_k = grid.frequency(k);
        arma::cx_mat h_dl(sizes.N_T, U);
        arma::cx_mat h_hu(U, N_H);
        arma::cx_mat H_h(N_H, sizes.N_T, arma::fill::zeros);
        for (int u = 0; u < U; ++u) {
            const UeChannelParams& p = ues[u];
            const std::complex<double> ph_dl =
                std::exp(-kJ * (2.0 * kPi * (f_k - p.doppler.f_d_dl) * p.delays.tau_dl));
            h_dl.col(u) = p.gains.a_dl * ph_dl * a_bs_u[u];
            const std::complex<double> ph_h =
                std::exp(-kJ * (2.0 * kPi * (f_k - p.doppler.f_d_bistatic) * p.delays.tau_h));
            H_h += p.gains.a_h * ph_h * (a_h_u[u] * a_bs_u[u].t());
            const std::complex<double> ph_hu =
                std::exp(-kJ * (2.0 * kPi * (f_k - p.f_d_hu) * p.tau_hu));
            h_hu.row(u) = p.gain_hu * ph_hu * a_h_u[u].t();
        }
        const std::complex<double> ph_br = std::exp(-kJ * (2.0 * kPi * f_k * bh.tau_br));
        ch.h_dl[k - 1] = std::move(h_dl);
        ch.H_bh[k - 1] = bh.a_br * ph_br * (a_h_br * a_bs_br.t());
        ch.H_h[k - 1] = std::move(H_h);
        ch.h_hu[k - 1] = std::move(h_hu);
    }
    return ch;
}

arma::cx_rowvec effective_dl_row(const arma::cx_vec& h_dl, const arma::cx_rowvec& h_hu,
                                 const arma::cx_vec& phi, const arma::cx_mat& H_bh, double rho) {
    check_rho(rho);
    check_unit_modulus(phi);
    if (h_hu.n_elem != phi.n_elem || H_bh.n_rows != phi.n_elem || H_bh.n_cols != h_dl.n_elem)
        throw DimensionMismatch("effective_dl_row: inconsistent channel dimensions");
    return h_dl.st() + (1.0 - rho) * ((h_hu % phi.st()) * H_bh);
}

std::vector<arma::cx_mat> effective_dl_channel(const ChannelSet& ch, const arma::cx_vec& phi,
                                               double rho) {
    check_rho(rho);
    check_unit_modulus(phi);
    if (static_cast<int>(phi.n_elem) != ch.sizes.n_h())
        throw DimensionMismatch("reflection vector length must equal N_H");
    std::vector<arma::cx_mat> h_dir(ch.h_dl.size());
    for (std::size_t k = 0; k < ch.h_dl.size(); ++k) {
        arma::cx_mat rows(ch.U, ch.sizes.N_T);
        // h_hu[k] * diag(phi) * H_bh[k], all UEs at once.
        const arma::cx_mat refl = (ch.h_hu[k].each_row() % phi.st()) * ch.H_bh[k];
        rows = ch.h_dl[k].st() + (1.0 - rho) * refl;
        h_dir[k] = std::move(rows);
    }
    return h_dir;
}

arma::cx_mat symbol_block(int U, int T, int k) {
    if (U < 1 || T < 1) throw DimensionMismatch("symbol block needs U >= 1 and T >= 1");
    if (U > T) throw DimensionMismatch("symbol block requires U <= T for row orthogonality");
    if (k < 1) throw IndexOutOfRange("subcarrier index must be >= 1");
    arma::cx_mat S(U, T);
    const double w = 2.0 * kPi / static_cast<double>(T);
    for (int u = 0; u < U; ++u) {
        const int row = (static_cast<long long>(k - 1) * U + u) % T;
        for (int t = 0; t < T; ++t) S(u, t) = std::polar(1.0, -w * row * t);
    }
    return S;
}

arma::cx_mat hris_rx_signal(const arma::cx_mat& W_H, const arma::cx_mat& H_h_k,
                            const arma::cx_mat& F_k, const arma::cx_mat& S_k, double rho,
                            double sigma2, RandomStream& rng) {
    check_rho(rho);
    if (W_H.n_rows != H_h_k.n_rows || H_h_k.n_cols != F_k.n_rows || F_k.n_cols != S_k.n_rows)
        throw DimensionMismatch("hris_rx_signal: inconsistent factor dimensions");
    if (!(sigma2 >= 0.0)) throw DimensionMismatch("noise variance must be >= 0");
    arma::cx_mat Y = rho * (W_H.t() * H_h_k * F_k * S_k);
    // Noise drawn in a fixed element order (column-major) for determinism.
    for (arma::uword j = 0; j < Y.n_cols; ++j)
        for (arma::uword i = 0; i < Y.n_rows; ++i) Y(i, j) += rng.cgaussian(sigma2);
    return Y;
}

SinrRate sinr_and_rate(const std::vector<arma::cx_mat>& h_dir,
                       const std::vector<arma::cx_mat>& F, double sigma2) {
    if (h_dir.empty() || h_dir.size() != F.size())
        throw DimensionMismatch("sinr_and_rate: subcarrier counts disagree");
    if (!(sigma2 > 0.0)) throw DimensionMismatch("noise variance must be > 0");
    const arma::uword K = h_dir.size();
    const arma::uword U = h_dir[0].n_rows;
    SinrRate out;
    out.sinr.zeros(K, U);
    out.sum_sinr.zeros(U);
    out.rate.zeros(U);
    for (arma::uword k = 0; k < K; ++k) {
        if (h_dir[k].n_rows != U || F[k].n_cols != U || F[k].n_rows != h_dir[k].n_cols)
            throw DimensionMismatch("sinr_and_rate: inconsistent matrix shapes");
        const arma::cx_mat G = h_dir[k] * F[k];  // G(u, i) = h_dir_u . f_i
        for (arma::uword u = 0; u < U; ++u) {
            const double sig = std::norm(G(u, u));
            double interference = 0.0;
            for (arma::uword i = 0; i < U; ++i)
                if (i != u) interference += std::norm(G(u, i));
            const double s = sig / (interference + sigma2);
            out.sinr(k, u) = s;
            out.sum_sinr(u) += s;
            out.rate(u) += std::log2(1.0 + s);
        }
    }
    return out;
}

}  // namespace hristrack::channel
