#include "hristrack/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <utility>

namespace hristrack::beamform {

namespace {

constexpr double kHalfPi = kPi / 2.0;

double quad_form(const arma::cx_mat& A, const arma::cx_vec& f) {
    return std::real(arma::as_scalar(f.t() * A * f));
}

/// PSD square root via Hermitian eigendecomposition (negative eigenvalues
/// clipped), used to draw Gaussian rounding candidates ~ CN(0, X).
arma::cx_mat psd_sqrt(const arma::cx_mat& X) {
    arma::vec ev;
    arma::cx_mat q;
    if (!arma::eig_sym(ev, q, arma::cx_mat(0.5 * (X + X.t())))) {
        throw Error("eigendecomposition failed while factoring a PSD matrix");
    }
    ev.transform([](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; });
    return q * arma::diagmat(ev) * q.t();
}

arma::vec phases_of(const arma::cx_vec& v) {
    arma::vec ph(v.n_elem, arma::fill::zeros);
    for (arma::uword n = 0; n < v.n_elem; ++n) {
        if (std::abs(v(n)) > 1e-12) {
            ph(n) = std::arg(v(n));
        }
    }
    return ph;
}

void check_weight_set(const std::vector<std::vector<arma::cx_mat>>& M, arma::uword K,
                      arma::uword dim, const char* what) {
    if (M.size() != K) {
        std::ostringstream os;
        os << what << ": expected " << K << " subcarrier entries, got " << M.size();
        throw DimensionMismatch(os.str());
    }
    for (arma::uword k = 0; k < K; ++k) {
        for (const auto& m : M[k]) {
            if (m.n_rows != dim || m.n_cols != dim) {
                std::ostringstream os;
                os << what << ": matrix at subcarrier " << k + 1 << " is " << m.n_rows << "x"
                   << m.n_cols << ", expected " << dim << "x" << dim;
                throw DimensionMismatch(os.str());
            }
        }
    }
}

}  // namespace

double Precoder::power() const {
    double p = 0.0;
    for (const auto& f : F) {
        p += arma::accu(arma::square(arma::abs(f)));
    }
    return p;
}

Combiner Combiner::from_phases(const arma::mat& phases, const channel::ArraySizes& sizes) {
    if (sizes.N_RF < 1 || sizes.N_E < 1) {
        throw DimensionMismatch("combiner needs at least one chain and one element per chain");
    }
    if (phases.n_rows != static_cast<arma::uword>(sizes.N_E) ||
        phases.n_cols != static_cast<arma::uword>(sizes.N_RF)) {
        std::ostringstream os;
        os << "phase profile is " << phases.n_rows << "x" << phases.n_cols << ", expected "
           << sizes.N_E << "x" << sizes.N_RF;
        throw DimensionMismatch(os.str());
    }
    Combiner c;
    c.phases = phases;
    c.W.zeros(sizes.n_h(), sizes.N_RF);
    for (int l = 0; l < sizes.N_RF; ++l) {
        for (int n = 0; n < sizes.N_E; ++n) {
            c.W(static_cast<arma::uword>(l * sizes.N_E + n), static_cast<arma::uword>(l)) =
                std::polar(1.0, phases(n, l));
        }
    }
    return c;
}

arma::cx_vec Combiner::chain(int l, const channel::ArraySizes& sizes) const {
    if (l < 0 || l >= sizes.N_RF) {
        throw IndexOutOfRange("chain index out of range");
    }
    const arma::uword r0 = static_cast<arma::uword>(l * sizes.N_E);
    return W.submat(r0, static_cast<arma::uword>(l), r0 + sizes.N_E - 1,
                    static_cast<arma::uword>(l));
}

arma::cx_vec Reflection::phi() const {
    if (!upsilon.is_finite()) {
        throw ValidationError("reflection phases must be finite");
    }
    if (upsilon.n_elem > 0 && arma::abs(upsilon).max() > kHalfPi + 1e-12) {
        throw ValidationError("reflection phases must lie in [-pi/2, pi/2]");
    }
    arma::cx_vec ph(upsilon.n_elem);
    for (arma::uword n = 0; n < upsilon.n_elem; ++n) {
        ph(n) = std::polar(1.0, upsilon(n));
    }
    return ph;
}

void QosSpec::validate(arma::uword n_ue) const {
    if (gamma.n_elem != n_ue) {
        std::ostringstream os;
        os << "qos thresholds cover " << gamma.n_elem << " UEs, expected " << n_ue;
        throw DimensionMismatch(os.str());
    }
    if (!gamma.is_finite() || gamma.min() <= 0.0) {
        throw ValidationError("qos SINR thresholds must be positive and finite");
    }
    if (!std::isfinite(p_max) || p_max <= 0.0) {
        throw ValidationError("qos power budget must be positive and finite");
    }
}

std::vector<std::vector<arma::cx_mat>> build_b_matrices(
    const std::vector<channel::UeChannelParams>& ues, const channel::SubcarrierGrid& grid,
    const channel::ArraySizes& sizes, const arma::cx_mat& W_H) {
    if (W_H.n_rows != static_cast<arma::uword>(sizes.n_h()) ||
        W_H.n_cols != static_cast<arma::uword>(sizes.N_RF)) {
        throw DimensionMismatch("combiner matrix does not match the array sizes");
    }
    const int P = 4 * static_cast<int>(ues.size());
    std::vector<std::vector<arma::cx_mat>> B(grid.K);
    for (int k = 1; k <= grid.K; ++k) {
        auto& row = B[k - 1];
        row.reserve(P);
        for (int i = 0; i < P; ++i) {
            const fim::ChannelDeriv d = fim::channel_derivative(ues, grid, sizes, k, i);
            const double w = std::norm(d.scale) *
                             std::pow(arma::norm(arma::cx_vec(W_H.t() * d.hris)), 2);
            row.push_back(w * (d.bs * d.bs.t()));
        }
    }
    return B;
}

std::vector<std::vector<arma::cx_mat>> build_d_matrices(
    const std::vector<channel::UeChannelParams>& ues, const channel::SubcarrierGrid& grid,
    const channel::ArraySizes& sizes, const Precoder& precoder) {
    if (precoder.F.size() != static_cast<size_t>(grid.K)) {
        throw DimensionMismatch("precoder does not cover every subcarrier");
    }
    const int P = 4 * static_cast<int>(ues.size());
    std::vector<std::vector<arma::cx_mat>> D(grid.K);
    for (int k = 1; k <= grid.K; ++k) {
        const arma::cx_mat& F_k = precoder.F[k - 1];
        if (F_k.n_rows != static_cast<arma::uword>(sizes.N_T)) {
            throw DimensionMismatch("precoder rows do not match the BS array");
        }
        auto& row = D[k - 1];
        row.reserve(P);
        for (int i = 0; i < P; ++i) {
            const fim::ChannelDeriv d = fim::channel_derivative(ues, grid, sizes, k, i);
            const double w = std::norm(d.scale) *
                             std::pow(arma::norm(arma::cx_vec(F_k.t() * d.bs)), 2);
            row.push_back(w * (d.hris * d.hris.t()));
        }
    }
    return D;
}

std::vector<std::vector<arma::cx_mat>> build_c_matrices(const channel::ChannelSet& channels,
                                                        const arma::cx_vec& phi, double rho) {
    const std::vector<arma::cx_mat> h_dir = channel::effective_dl_channel(channels, phi, rho);
    std::vector<std::vector<arma::cx_mat>> C(h_dir.size());
    for (size_t k = 0; k < h_dir.size(); ++k) {
        C[k].reserve(channels.U);
        for (int u = 0; u < channels.U; ++u) {
            const arma::cx_rowvec h = h_dir[k].row(u);
            C[k].push_back(h.t() * h);
        }
    }
    return C;
}

arma::vec qos_sum_sinr(const std::vector<std::vector<arma::cx_mat>>& C, const Precoder& precoder,
                       double sigma2) {
    const arma::uword K = C.size();
    if (K == 0 || precoder.F.size() != K) {
        throw DimensionMismatch("weight set and precoder cover different subcarriers");
    }
    const arma::uword U = C[0].size();
    arma::vec s(U, arma::fill::zeros);
    for (arma::uword k = 0; k < K; ++k) {
        if (precoder.F[k].n_cols != U) {
            throw DimensionMismatch("precoder columns do not match the UE count");
        }
        for (arma::uword u = 0; u < U; ++u) {
            const double num = quad_form(C[k][u], precoder.F[k].col(u));
            double interference = 0.0;
            for (arma::uword i = 0; i < U; ++i) {
                if (i != u) {
                    interference += quad_form(C[k][u], precoder.F[k].col(i));
                }
            }
            s(u) += num / (interference + sigma2);
        }
    }
    return s;
}

PrecoderSolution solve_precoder(const std::vector<std::vector<arma::cx_mat>>& B,
                                const std::vector<std::vector<arma::cx_mat>>& C,
                                const QosSpec& qos, double sigma2, RandomStream* rng,
                                const PrecoderOptions& options) {
    const arma::uword K = C.size();
    if (K == 0 || C[0].empty()) {
        throw DimensionMismatch("communication weight set is empty");
    }
    const arma::uword U = C[0].size();
    const arma::uword N_T = C[0][0].n_rows;
    for (arma::uword k = 0; k < K; ++k) {
        if (C[k].size() != U) {
            throw DimensionMismatch("communication weight set is ragged across subcarriers");
        }
    }
    check_weight_set(C, K, N_T, "communication weights");
    check_weight_set(B, K, N_T, "sensing weights");
    qos.validate(U);
    if (!std::isfinite(sigma2) || sigma2 <= 0.0) {
        throw ValidationError("noise variance must be positive and finite");
    }

    // Necessary feasibility condition: even with the full budget matched to
    // its best subcarrier and zero interference, UE u cannot exceed
    // P_max max_k ||h_{k,u}||^2 / sigma2 aggregate SINR.
    for (arma::uword u = 0; u < U; ++u) {
        double best_gain = 0.0;
        for (arma::uword k = 0; k < K; ++k) {
            best_gain = std::max(best_gain, std::real(arma::trace(C[k][u])));
        }
        if (qos.p_max * best_gain < qos.gamma(u) * sigma2 * (1.0 - 1e-12)) {
            std::ostringstream os;
            os << "QoS threshold for UE " << u << " exceeds the best achievable aggregate SINR";
            throw InfeasibleQoS(os.str());
        }
    }

    // Variable prescale keeps the relaxation blocks O(1).
    const double pbar = qos.p_max / static_cast<double>(K * U);

    sdp::SdpProblem prob;
    prob.blocks.assign(K * U, {N_T, true});
    prob.objective.resize(K * U);
    std::vector<arma::cx_mat> b_sum(K);
    for (arma::uword k = 0; k < K; ++k) {
        arma::cx_mat b_bar(N_T, N_T, arma::fill::zeros);
        for (const auto& b : B[k]) {
            b_bar += b;
        }
        b_sum[k] = b_bar;
        for (arma::uword u = 0; u < U; ++u) {
            prob.objective[k * U + u] = b_bar;
        }
    }
    for (arma::uword u = 0; u < U; ++u) {
        sdp::SdpProblem::Constraint row;
        row.sense = sdp::SdpProblem::Sense::GE;
        row.bound = qos.gamma(u) * sigma2 / pbar;
        row.coeff.reserve(K * U);
        double row_nrm2 = 0.0;
        for (arma::uword k = 0; k < K; ++k) {
            for (arma::uword i = 0; i < U; ++i) {
                row.coeff.emplace_back(k * U + i,
                                       i == u ? arma::cx_mat(C[k][u])
                                              : arma::cx_mat(-qos.gamma(u) * C[k][u]));
                row_nrm2 += arma::accu(arma::square(arma::abs(row.coeff.back().second)));
            }
        }
        // Equilibrate against the watt-scale channel gains: without this the
        // solver's internal row scaling (which also covers the inequality
        // slack) would leave the whole QoS row below its residual tolerance.
        const double s_row = std::max(1e-300, std::sqrt(row_nrm2));
        for (auto& [blk, A] : row.coeff) {
            (void)blk;
            A /= s_row;
        }
        row.bound /= s_row;
        prob.constraints.push_back(std::move(row));
    }
    {
        sdp::SdpProblem::Constraint power;
        power.sense = sdp::SdpProblem::Sense::LE;
        power.bound = static_cast<double>(K * U);
        power.coeff.reserve(K * U);
        const arma::cx_mat eye(arma::eye<arma::cx_mat>(N_T, N_T));
        for (arma::uword b = 0; b < K * U; ++b) {
            power.coeff.emplace_back(b, eye);
        }
        prob.constraints.push_back(std::move(power));
    }

    sdp::SdpSettings settings = options.sdp;
    settings.initial_X.clear();
    if (options.warm_start.size() == K * U) {
        settings.initial_X.reserve(K * U);
        bool ok = true;
        for (const auto& x : options.warm_start) {
            if (x.n_rows != N_T || x.n_cols != N_T) {
                ok = false;
                break;
            }
            settings.initial_X.push_back(x / pbar);
        }
        if (!ok) {
            settings.initial_X.clear();
        }
    }

    const sdp::SdpSolution sol = sdp::solve(prob, settings);
    if (sol.status == sdp::SdpStatus::Infeasible) {
        throw InfeasibleQoS("precoder program admits no PSD point under the QoS/power budget");
    }

    PrecoderSolution out;
    out.status = sol.status;
    out.sdp_objective = sol.objective_value * pbar;
    out.relaxation.reserve(K * U);
    for (const auto& x : sol.X) {
        out.relaxation.push_back(pbar * x);
    }
    out.sdp_power = 0.0;
    for (const auto& x : out.relaxation) {
        out.sdp_power += std::real(arma::trace(x));
    }

    out.rank_ratio.set_size(K * U);
    Precoder cand;
    cand.F.assign(K, arma::cx_mat(N_T, U, arma::fill::zeros));
    for (arma::uword k = 0; k < K; ++k) {
        for (arma::uword u = 0; u < U; ++u) {
            const sdp::RankOne ro = sdp::extract_rank_one(out.relaxation[k * U + u]);
            cand.F[k].col(u) = ro.v;
            out.rank_ratio(k * U + u) = ro.ratio;
        }
    }

    // The extracted point never exceeds the relaxation's power; rescaling
    // to it is monotone in every aggregate SINR.
    const double target = std::min(out.sdp_power, qos.p_max);
    auto rescale = [target](Precoder& p) {
        const double pw = p.power();
        if (pw > 0.0 && target > 0.0) {
            const double s = std::sqrt(target / pw);
            for (auto& f : p.F) {
                f *= s;
            }
        }
    };
    rescale(cand);

    auto margin = [&](const arma::vec& s) {
        double worst = std::numeric_limits<double>::infinity();
        for (arma::uword u = 0; u < U; ++u) {
            worst = std::min(worst, s(u) / (qos.gamma(u) * options.qos_margin));
        }
        return worst;
    };
    auto sens_value = [&](const Precoder& p) {
        double v = 0.0;
        for (arma::uword k = 0; k < K; ++k) {
            for (arma::uword u = 0; u < U; ++u) {
                v += quad_form(b_sum[k], p.F[k].col(u));
            }
        }
        return v;
    };

    // With a candidate's beam directions fixed, the aggregate QoS rows are
    // linear in per-user power scales, so the minimal scales solve a small
    // linear system (the classic downlink power-control step).  A positive
    // solution that fits the power target is scaled up to the target, which
    // preserves every row and never exceeds the relaxation's power.
    auto power_fit = [&](Precoder& p) -> bool {
        arma::mat M(U, U, arma::fill::zeros);
        arma::vec base(U, arma::fill::zeros);
        for (arma::uword k = 0; k < K; ++k) {
            for (arma::uword u = 0; u < U; ++u) {
                for (arma::uword i = 0; i < U; ++i) {
                    const double q = quad_form(C[k][u], p.F[k].col(i));
                    if (i == u) {
                        M(u, u) += q;
                    } else {
                        M(u, i) -= qos.gamma(u) * q;
                    }
                }
                const double nrm = arma::norm(p.F[k].col(u));
                base(u) += nrm * nrm;
            }
        }
        arma::vec alpha;
        if (!arma::solve(alpha, M, arma::vec(qos.gamma * sigma2), arma::solve_opts::no_approx)) {
            return false;
        }
        if (!alpha.is_finite() || alpha.min() <= 0.0) {
            return false;
        }
        const double total = arma::dot(alpha, base);
        if (!(total > 0.0) || total > target * (1.0 + 1e-9)) {
            return false;
        }
        const double beta = target / total;
        for (arma::uword k = 0; k < K; ++k) {
            for (arma::uword u = 0; u < U; ++u) {
                p.F[k].col(u) *= std::sqrt(beta * alpha(u));
            }
        }
        return true;
    };

    // Candidate selection: a QoS-feasible candidate always beats an
    // infeasible one; among feasible candidates the sensing objective
    // decides, among infeasible ones the QoS margin.
    Precoder best;
    arma::vec best_sinr;
    double best_margin = -std::numeric_limits<double>::infinity();
    double best_sens = -std::numeric_limits<double>::infinity();
    bool have_any = false;
    auto feasible = [](double m) { return m >= 1.0 - 1e-12; };
    auto consider = [&](Precoder&& p) {
        const arma::vec s = qos_sum_sinr(C, p, sigma2);
        const double m = margin(s);
        const double sv = sens_value(p);
        bool better = !have_any;
        if (have_any) {
            if (feasible(m) && !feasible(best_margin)) {
                better = true;
            } else if (feasible(m) && feasible(best_margin)) {
                better = sv > best_sens;
            } else if (!feasible(m) && !feasible(best_margin)) {
                better = m > best_margin;
            }
        }
        if (better) {
            have_any = true;
            best_margin = m;
            best_sens = sv;
            best = std::move(p);
            best_sinr = s;
        }
    };
    consider(std::move(cand));

    if (!feasible(best_margin)) {
        Precoder fitted = best;
        if (power_fit(fitted)) {
            consider(std::move(fitted));
        }
    }

    // Matched-filter fallback: beams along the principal direction of each
    // user's own channel weight, powered by the same linear fit. Keeps the
    // solve honest when the relaxation carries no usable direction (e.g. a
    // vanishing sensing objective leaves the QoS rows degenerate).
    if (!feasible(best_margin)) {
        Precoder mrt;
        mrt.F.assign(K, arma::cx_mat(N_T, U, arma::fill::zeros));
        for (arma::uword k = 0; k < K; ++k) {
            for (arma::uword u = 0; u < U; ++u) {
                const arma::cx_vec v = sdp::extract_rank_one(C[k][u]).v;
                const double nv = arma::norm(v);
                if (nv > 0.0) {
                    mrt.F[k].col(u) = v / nv;
                }
            }
        }
        if (power_fit(mrt)) {
            consider(std::move(mrt));
        }
    }

    if (!feasible(best_margin) && rng != nullptr && options.randomization_candidates > 0) {
        out.randomized = true;
        std::vector<arma::cx_mat> roots;
        roots.reserve(K * U);
        for (const auto& x : out.relaxation) {
            roots.push_back(psd_sqrt(x));
        }
        for (long t = 0; t < options.randomization_candidates; ++t) {
            Precoder trial;
            trial.F.assign(K, arma::cx_mat(N_T, U, arma::fill::zeros));
            for (arma::uword k = 0; k < K; ++k) {
                for (arma::uword u = 0; u < U; ++u) {
                    arma::cx_vec g(N_T);
                    for (arma::uword n = 0; n < N_T; ++n) {
                        g(n) = rng->cgaussian(1.0);
                    }
                    trial.F[k].col(u) = roots[k * U + u] * g;
                }
            }
            rescale(trial);
            Precoder fitted = trial;
            consider(std::move(trial));
            if (power_fit(fitted)) {
                consider(std::move(fitted));
            }
        }
    }

    out.precoder = std::move(best);
    out.sum_sinr = std::move(best_sinr);
    out.qos_met = feasible(best_margin);
    return out;
}

CombinerSolution solve_combiner(const std::vector<std::vector<arma::cx_mat>>& D,
                                const channel::ArraySizes& sizes, RandomStream* rng,
                                const CombinerOptions& options) {
    if (sizes.N_RF < 1 || sizes.N_E < 1) {
        throw DimensionMismatch("combiner needs at least one chain and one element per chain");
    }
    const arma::uword N_H = static_cast<arma::uword>(sizes.n_h());
    const arma::uword N_E = static_cast<arma::uword>(sizes.N_E);
    if (D.empty()) {
        throw DimensionMismatch("sensing weight set is empty");
    }
    check_weight_set(D, D.size(), N_H, "sensing weights");

    CombinerSolution out;
    out.rank_ratio.set_size(sizes.N_RF);
    out.chain_objective.set_size(sizes.N_RF);
    out.relaxation.resize(sizes.N_RF);
    arma::mat phases(N_E, sizes.N_RF, arma::fill::zeros);

    for (int l = 0; l < sizes.N_RF; ++l) {
        const arma::uword r0 = static_cast<arma::uword>(l) * N_E;
        arma::cx_mat d_bar(N_E, N_E, arma::fill::zeros);
        for (const auto& row : D) {
            for (const auto& d : row) {
                d_bar += d.submat(r0, r0, r0 + N_E - 1, r0 + N_E - 1);
            }
        }
        d_bar = 0.5 * (d_bar + d_bar.t());

        sdp::SdpProblem prob;
        prob.blocks.push_back({N_E, true});
        prob.objective.push_back(d_bar);
        for (arma::uword n = 0; n < N_E; ++n) {
            sdp::SdpProblem::Constraint row;
            row.sense = sdp::SdpProblem::Sense::EQ;
            row.bound = 1.0;
            arma::cx_mat e(N_E, N_E, arma::fill::zeros);
            e(n, n) = 1.0;
            row.coeff.emplace_back(0, std::move(e));
            prob.constraints.push_back(std::move(row));
        }

        sdp::SdpSettings settings = options.sdp;
        settings.initial_X.clear();
        if (options.warm_start.size() == static_cast<size_t>(sizes.N_RF) &&
            options.warm_start[l].n_rows == N_E && options.warm_start[l].n_cols == N_E) {
            settings.initial_X.push_back(options.warm_start[l]);
        }

        const sdp::SdpSolution sol = sdp::solve(prob, settings);
        out.relaxation[l] = sol.X[0];
        out.chain_objective(l) = sol.objective_value;

        const sdp::RankOne ro = sdp::extract_rank_one(sol.X[0]);
        out.rank_ratio(l) = ro.ratio;
        arma::vec best_ph = phases_of(ro.v);
        auto objective_of = [&](const arma::vec& ph) {
            arma::cx_vec w(N_E);
            for (arma::uword n = 0; n < N_E; ++n) {
                w(n) = std::polar(1.0, ph(n));
            }
            return quad_form(d_bar, w);
        };
        double best_obj = objective_of(best_ph);

        if (ro.ratio < options.randomize_below_ratio && rng != nullptr &&
            options.randomization_candidates > 0) {
            out.randomized = true;
            const arma::cx_mat root = psd_sqrt(sol.X[0]);
            for (long t = 0; t < options.randomization_candidates; ++t) {
                arma::cx_vec g(N_E);
                for (arma::uword n = 0; n < N_E; ++n) {
                    g(n) = rng->cgaussian(1.0);
                }
                const arma::vec ph = phases_of(arma::cx_vec(root * g));
                const double obj = objective_of(ph);
                if (obj > best_obj) {
                    best_obj = obj;
                    best_ph = ph;
                }
            }
        }
        phases.col(l) = best_ph;
    }

    out.combiner = Combiner::from_phases(phases, sizes);
    return out;
}

ReflectionSolution solve_reflection(const channel::ChannelSet& channels, const Precoder& precoder,
                                    double rho, const arma::vec* init_upsilon, double tol,
                                    long max_sweeps) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw ValidationError("power split rho must lie in [0, 1]");
    }
    const arma::uword K = channels.h_dl.size();
    if (precoder.F.size() != K || K == 0) {
        throw DimensionMismatch("precoder and channel set cover different subcarriers");
    }
    const arma::uword U = static_cast<arma::uword>(channels.U);
    const arma::uword N_H = static_cast<arma::uword>(channels.sizes.n_h());

    arma::vec ups(N_H, arma::fill::zeros);
    if (init_upsilon != nullptr) {
        if (init_upsilon->n_elem != N_H) {
            throw DimensionMismatch("initial reflection phases do not match the aperture");
        }
        if (!init_upsilon->is_finite() ||
            (N_H > 0 && arma::abs(*init_upsilon).max() > kHalfPi + 1e-9)) {
            throw ValidationError("initial reflection phases must lie in [-pi/2, pi/2]");
        }
        ups = arma::clamp(*init_upsilon, -kHalfPi, kHalfPi);
    }

    // Objective decomposition per (k,u): h_dir f = d + sum_n phi_n beta_n.
    arma::cx_mat d(K, U);
    std::vector<arma::cx_mat> beta(N_H, arma::cx_mat(K, U));
    for (arma::uword k = 0; k < K; ++k) {
        for (arma::uword u = 0; u < U; ++u) {
            const arma::cx_vec f = precoder.F[k].col(u);
            d(k, u) = arma::as_scalar(arma::strans(channels.h_dl[k].col(u)) * f);
            const arma::cx_vec bh_f = channels.H_bh[k] * f;
            for (arma::uword n = 0; n < N_H; ++n) {
                beta[n](k, u) = (1.0 - rho) * channels.h_hu[k](u, n) * bh_f(n);
            }
        }
    }

    auto phase = [&ups](arma::uword n) { return std::polar(1.0, ups(n)); };
    auto rebuild = [&]() {
        arma::cx_mat c(d);
        for (arma::uword n = 0; n < N_H; ++n) {
            c += phase(n) * beta[n];
        }
        return c;
    };

    ReflectionSolution out;
    arma::cx_mat c = rebuild();
    double obj = arma::accu(arma::square(arma::abs(c)));
    out.objective_trace.push_back(obj);

    for (long sweep = 0; sweep < max_sweeps; ++sweep) {
        const double sweep_start = obj;
        for (arma::uword n = 0; n < N_H; ++n) {
            const arma::cx_mat c_rest = c - phase(n) * beta[n];
            const std::complex<double> g = arma::accu(beta[n] % arma::conj(c_rest));
            if (std::abs(g) > 0.0) {
                double nu = -std::arg(g);
                if (nu < -kHalfPi || nu > kHalfPi) {
                    // Endpoint comparison of Re{e^{j nu} g}.
                    const double lo = std::real(std::polar(1.0, -kHalfPi) * g);
                    const double hi = std::real(std::polar(1.0, kHalfPi) * g);
                    nu = lo >= hi ? -kHalfPi : kHalfPi;
                }
                ups(n) = nu;
                c = c_rest + phase(n) * beta[n];
                obj = arma::accu(arma::square(arma::abs(c)));
            }
            out.objective_trace.push_back(obj);
        }
        ++out.sweeps;
        c = rebuild();
        obj = arma::accu(arma::square(arma::abs(c)));
        if (std::abs(obj - sweep_start) <= tol * std::max(sweep_start, 1e-300)) {
            break;
        }
    }

    out.reflection.upsilon = std::move(ups);
    return out;
}

AltOptResult alternating_optimize(const std::vector<channel::UeChannelParams>& ues,
                                  const channel::ChannelSet& channels, double rho,
                                  const QosSpec& qos, double sigma2, RandomStream& rng,
                                  const AltOptSettings& settings) {
    const arma::uword U = static_cast<arma::uword>(channels.U);
    if (ues.size() != U) {
        throw DimensionMismatch("UE parameter list does not match the channel set");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw ValidationError("power split rho must lie in [0, 1]");
    }
    qos.validate(U);
    if (settings.max_outer < 1) {
        throw ValidationError("the alternating loop needs at least one iteration");
    }
    const channel::ArraySizes& sizes = channels.sizes;
    const arma::uword N_H = static_cast<arma::uword>(sizes.n_h());

    arma::vec ups(N_H, arma::fill::zeros);
    if (settings.init_upsilon.n_elem > 0) {
        if (settings.init_upsilon.n_elem != N_H) {
            throw DimensionMismatch("initial reflection phases do not match the aperture");
        }
        ups = settings.init_upsilon;
    }
    Combiner combiner =
        settings.init_combiner_phases.n_elem > 0
            ? Combiner::from_phases(settings.init_combiner_phases, sizes)
            : Combiner::from_phases(
                  arma::mat(sizes.N_E, sizes.N_RF, arma::fill::zeros), sizes);

    fim::FimRecursionState prior = fim::FimRecursionState::zero(static_cast<int>(U));
    if (settings.prior_information.n_elem > 0) {
        if (settings.prior_information.n_rows != 4 * U ||
            settings.prior_information.n_cols != 4 * U) {
            throw DimensionMismatch("prior information matrix must be 4U x 4U");
        }
        prior.J_tilde = settings.prior_information;
    }

    auto make_phi = [&ups]() {
        arma::cx_vec phi(ups.n_elem);
        for (arma::uword n = 0; n < ups.n_elem; ++n) {
            phi(n) = std::polar(1.0, ups(n));
        }
        return phi;
    };

    AltOptResult result;
    AltOptReport& report = result.report;
    std::vector<arma::cx_mat> warm_precoder;
    std::vector<arma::cx_mat> warm_combiner;
    PrecoderSolution ps;

    auto solve_op1 = [&]() {
        const auto C = build_c_matrices(channels, make_phi(), rho);
        const auto B = build_b_matrices(ues, channels.grid, sizes, combiner.W);
        PrecoderOptions po;
        po.sdp = settings.sdp;
        if (settings.warm_start) {
            po.warm_start = warm_precoder;
        }
        PrecoderSolution s = solve_precoder(B, C, qos, sigma2, &rng, po);
        warm_precoder = s.relaxation;
        return s;
    };
    auto log_iteration = [&](const PrecoderSolution& s) {
        const double surr =
            fim::fim_trace_surrogate(ues, channels.grid, sizes, combiner.W, s.precoder.F, rho,
                                     sigma2, settings.obs_T, prior);
        report.surrogate.push_back(surr);
        const auto h_dir = channel::effective_dl_channel(channels, make_phi(), rho);
        report.sum_sinr.push_back(
            channel::sinr_and_rate(h_dir, s.precoder.F, sigma2).sum_sinr);
        report.power.push_back(s.precoder.power());
        report.min_rank_ratio.push_back(s.rank_ratio.min());
        report.mean_rank_ratio.push_back(arma::mean(s.rank_ratio));
        return surr;
    };

    double surr_prev = 0.0;
    for (long t = 1; t <= settings.max_outer; ++t) {
        ps = solve_op1();

        const auto D = build_d_matrices(ues, channels.grid, sizes, ps.precoder);
        CombinerOptions co;
        co.sdp = settings.sdp;
        if (settings.warm_start) {
            co.warm_start = warm_combiner;
        }
        const CombinerSolution cs = solve_combiner(D, sizes, &rng, co);
        warm_combiner = cs.relaxation;
        combiner = cs.combiner;

        const ReflectionSolution rs =
            solve_reflection(channels, ps.precoder, rho, &ups);
        ups = rs.reflection.upsilon;

        const double surr = log_iteration(ps);
        report.iterations = t;
        if (t > 1 && std::abs(surr - surr_prev) <= settings.tol * std::max(std::abs(surr_prev), 1e-300)) {
            report.converged = true;
            break;
        }
        surr_prev = surr;
    }

    // Final re-solve so the returned precoder meets QoS against the final
    // reflection and combiner.
    ps = solve_op1();
    log_iteration(ps);
    report.qos_met = ps.qos_met;

    result.precoder = std::move(ps.precoder);
    result.combiner = std::move(combiner);
    result.reflection.upsilon = std::move(ups);
    return result;
}

}  // namespace hristrack::beamform
