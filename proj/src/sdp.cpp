#include "hristrack/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <utility>

namespace hristrack::sdp {

namespace {

constexpr double kHermTol = 1e-12;
constexpr double kScaleFloor = 1e-12;
constexpr double kMuMin = 1e-8;
constexpr double kMuMax = 1e8;
constexpr double kMuGrow = 1.5;
constexpr long kMuAdaptEvery = 50;
constexpr int kMuAdaptBudget = 200;
// Divergence watch: window length and thresholds for declaring the affine
// residual stalled while the multiplier norm keeps growing.
constexpr long kStallWindow = 1000;
constexpr double kStallImprovement = 0.99;
constexpr double kStallGrowth = 1.02;
constexpr int kStallStrikes = 3;

double re_inner(const arma::cx_mat& a, const arma::cx_mat& x) {
    return std::real(arma::cdot(arma::vectorise(a), arma::vectorise(x)));
}

void check_coeff(const arma::cx_mat& m, arma::uword dim, bool real_only, const char* what,
                 arma::uword idx) {
    if (m.n_rows != dim || m.n_cols != dim) {
        std::ostringstream os;
        os << what << " " << idx << ": expected " << dim << "x" << dim << ", got " << m.n_rows
           << "x" << m.n_cols;
        throw DimensionMismatch(os.str());
    }
    if (!m.is_finite()) {
        std::ostringstream os;
        os << what << " " << idx << " has non-finite entries";
        throw ValidationError(os.str());
    }
    const double scale = std::max(1.0, m.is_empty() ? 0.0 : arma::abs(m).max());
    if (arma::abs(arma::cx_mat(m - m.t())).max() > kHermTol * scale) {
        std::ostringstream os;
        os << what << " " << idx << " is not Hermitian";
        throw ValidationError(os.str());
    }
    if (real_only && arma::abs(arma::imag(m)).max() > kHermTol * scale) {
        std::ostringstream os;
        os << what << " " << idx << " must be real for a real-symmetric block";
        throw ValidationError(os.str());
    }
}

/// Nearest PSD matrix in Frobenius norm: Hermitian eigendecomposition with
/// negative eigenvalues clipped to zero.
void project_psd(arma::cx_mat& v, bool real_only) {
    if (v.n_rows == 1) {
        v(0, 0) = std::max(0.0, v(0, 0).real());
        return;
    }
    v = 0.5 * (v + v.t());
    if (real_only) {
        v.set_imag(arma::zeros(v.n_rows, v.n_cols));
    }
    arma::vec ev;
    arma::cx_mat q;
    if (!arma::eig_sym(ev, q, v)) {
        throw Error("eigendecomposition failed during cone projection");
    }
    const arma::uvec pos = arma::find(ev > 0.0);
    if (pos.is_empty()) {
        v.zeros();
        return;
    }
    const arma::cx_mat qp = q.cols(pos);
    v = qp * arma::diagmat(ev(pos)) * qp.t();
    if (real_only) {
        v.set_imag(arma::zeros(v.n_rows, v.n_cols));
    } else {
        v = 0.5 * (v + v.t());
    }
}

}  // namespace

void SdpProblem::validate() const {
    if (blocks.empty()) {
        throw DimensionMismatch("problem declares no blocks");
    }
    for (arma::uword b = 0; b < blocks.size(); ++b) {
        if (blocks[b].dim == 0) {
            throw DimensionMismatch("block dimension must be positive");
        }
    }
    if (objective.size() != blocks.size()) {
        std::ostringstream os;
        os << "objective has " << objective.size() << " matrices for " << blocks.size()
           << " blocks";
        throw DimensionMismatch(os.str());
    }
    for (arma::uword b = 0; b < blocks.size(); ++b) {
        check_coeff(objective[b], blocks[b].dim, !blocks[b].hermitian, "objective block", b);
    }
    for (arma::uword c = 0; c < constraints.size(); ++c) {
        const auto& row = constraints[c];
        if (!std::isfinite(row.bound)) {
            std::ostringstream os;
            os << "constraint " << c << " bound is not finite";
            throw ValidationError(os.str());
        }
        for (const auto& [blk, A] : row.coeff) {
            if (blk >= blocks.size()) {
                std::ostringstream os;
                os << "constraint " << c << " references block " << blk << " of "
                   << blocks.size();
                throw DimensionMismatch(os.str());
            }
            check_coeff(A, blocks[blk].dim, !blocks[blk].hermitian, "constraint coefficient", c);
        }
    }
}

void SdpProblem::dump(std::ostream& os) const {
    const auto flags = os.flags();
    const auto prec = os.precision();
    os.precision(17);
    os << "sdp maximize\n";
    os << "blocks " << blocks.size() << "\n";
    for (const auto& blk : blocks) {
        os << blk.dim << " " << (blk.hermitian ? "H" : "R") << "\n";
    }
    auto put = [&os](const arma::cx_mat& m) {
        for (arma::uword i = 0; i < m.n_rows; ++i) {
            for (arma::uword j = 0; j < m.n_cols; ++j) {
                os << (j ? " " : "") << m(i, j).real() << " " << m(i, j).imag();
            }
            os << "\n";
        }
    };
    os << "objective\n";
    for (arma::uword b = 0; b < objective.size(); ++b) {
        os << "block " << b << "\n";
        put(objective[b]);
    }
    os << "constraints " << constraints.size() << "\n";
    for (arma::uword c = 0; c < constraints.size(); ++c) {
        const auto& row = constraints[c];
        const char* sense = row.sense == Sense::LE ? "LE" : (row.sense == Sense::EQ ? "EQ" : "GE");
        os << "constraint " << c << " " << sense << " " << row.bound << " terms "
           << row.coeff.size() << "\n";
        for (const auto& [blk, A] : row.coeff) {
            os << "term " << blk << "\n";
            put(A);
        }
    }
    os.flags(flags);
    os.precision(prec);
}

SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings) {
    problem.validate();

    const arma::uword nb = problem.blocks.size();
    const arma::uword m = problem.constraints.size();

    // Internal block layout: caller blocks first, then one 1x1 slack per
    // inequality row so every constraint becomes an equality.
    std::vector<arma::uword> dims;
    std::vector<bool> real_only;
    dims.reserve(nb + m);
    real_only.reserve(nb + m);
    for (const auto& blk : problem.blocks) {
        dims.push_back(blk.dim);
        real_only.push_back(!blk.hermitian);
    }
    std::vector<arma::sword> slack_of(m, -1);
    for (arma::uword c = 0; c < m; ++c) {
        if (problem.constraints[c].sense != SdpProblem::Sense::EQ) {
            slack_of[c] = static_cast<arma::sword>(dims.size());
            dims.push_back(1);
            real_only.push_back(true);
        }
    }
    const arma::uword nB = dims.size();

    // Scaled minimization objective: C = -objective / ||objective||_F.
    double obj_norm2 = 0.0;
    for (const auto& cb : problem.objective) {
        obj_norm2 += arma::accu(arma::square(arma::abs(cb)));
    }
    const double s_obj = std::max(kScaleFloor, std::sqrt(obj_norm2));
    std::vector<arma::cx_mat> C(nB);
    for (arma::uword b = 0; b < nB; ++b) {
        if (b < nb) {
            C[b] = -problem.objective[b] / s_obj;
        } else {
            C[b] = arma::cx_mat(1, 1, arma::fill::zeros);
        }
    }
    double c_norm2 = 0.0;
    for (const auto& cb : C) {
        c_norm2 += arma::accu(arma::square(arma::abs(cb)));
    }
    const double norm_c = std::sqrt(c_norm2);

    // Row-normalized constraints, slack terms included.
    struct Pair {
        arma::uword blk;
        arma::cx_mat A;
    };
    std::vector<std::vector<Pair>> rows(m);
    arma::vec b(m, arma::fill::zeros);
    for (arma::uword c = 0; c < m; ++c) {
        const auto& row = problem.constraints[c];
        double nrm2 = slack_of[c] >= 0 ? 1.0 : 0.0;
        for (const auto& [blk, A] : row.coeff) {
            nrm2 += arma::accu(arma::square(arma::abs(A)));
        }
        const double sc = std::max(kScaleFloor, std::sqrt(nrm2));
        rows[c].reserve(row.coeff.size() + 1);
        for (const auto& [blk, A] : row.coeff) {
            rows[c].push_back({blk, A / sc});
        }
        if (slack_of[c] >= 0) {
            const double sigma = row.sense == SdpProblem::Sense::LE ? 1.0 : -1.0;
            arma::cx_mat sa(1, 1);
            sa(0, 0) = sigma / sc;
            rows[c].push_back({static_cast<arma::uword>(slack_of[c]), std::move(sa)});
        }
        b(c) = row.bound / sc;
    }
    const double norm_b = arma::norm(b);

    // Gram matrix of the constraint rows and its factorization.
    arma::mat gram(m, m, arma::fill::zeros);
    {
        std::vector<std::vector<std::pair<arma::uword, const arma::cx_mat*>>> by_block(nB);
        for (arma::uword c = 0; c < m; ++c) {
            for (const auto& p : rows[c]) {
                by_block[p.blk].push_back({c, &p.A});
            }
        }
        for (arma::uword blk = 0; blk < nB; ++blk) {
            const auto& list = by_block[blk];
            for (size_t i = 0; i < list.size(); ++i) {
                for (size_t j = i; j < list.size(); ++j) {
                    const double v = re_inner(*list[i].second, *list[j].second);
                    gram(list[i].first, list[j].first) += v;
                    if (list[i].first != list[j].first) {
                        gram(list[j].first, list[i].first) += v;
                    }
                }
            }
        }
    }
    arma::mat chol_l;
    bool have_chol = m > 0 && arma::chol(chol_l, gram, "lower");
    arma::vec gram_ev;
    arma::mat gram_q;
    if (m > 0 && !have_chol) {
        arma::eig_sym(gram_ev, gram_q, arma::symmatu(gram));
    }
    auto gram_solve = [&](const arma::vec& rhs) -> arma::vec {
        if (have_chol) {
            return arma::solve(arma::trimatu(chol_l.t()),
                               arma::solve(arma::trimatl(chol_l), rhs));
        }
        const double ev_floor = 1e-12 * std::max(1.0, gram_ev.max());
        arma::vec z = gram_q.t() * rhs;
        for (arma::uword i = 0; i < z.n_elem; ++i) {
            z(i) = gram_ev(i) > ev_floor ? z(i) / gram_ev(i) : 0.0;
        }
        return gram_q * z;
    };

    // Iterate state.
    std::vector<arma::cx_mat> X(nB), S(nB), V(nB);
    for (arma::uword blk = 0; blk < nB; ++blk) {
        X[blk].zeros(dims[blk], dims[blk]);
        S[blk].zeros(dims[blk], dims[blk]);
    }
    if (!settings.initial_X.empty()) {
        if (settings.initial_X.size() != nb) {
            throw DimensionMismatch("initial point must supply one matrix per block");
        }
        for (arma::uword blk = 0; blk < nb; ++blk) {
            const auto& x0 = settings.initial_X[blk];
            if (x0.n_rows != dims[blk] || x0.n_cols != dims[blk]) {
                throw DimensionMismatch("initial point block dimensions do not match");
            }
            X[blk] = 0.5 * (x0 + x0.t());
            if (real_only[blk]) {
                X[blk].set_imag(arma::zeros(dims[blk], dims[blk]));
            }
        }
        // Seed the slacks at the values that make their rows feasible.
        for (arma::uword c = 0; c < m; ++c) {
            if (slack_of[c] < 0) {
                continue;
            }
            double val = 0.0;
            double slack_coeff = 0.0;
            for (const auto& p : rows[c]) {
                if (p.blk == static_cast<arma::uword>(slack_of[c])) {
                    slack_coeff = p.A(0, 0).real();
                } else {
                    val += re_inner(p.A, X[p.blk]);
                }
            }
            X[slack_of[c]](0, 0) = std::max(0.0, (b(c) - val) / slack_coeff);
        }
    }
    arma::vec y(m, arma::fill::zeros);

    // Constant part of the affine-step right-hand side.
    arma::vec a_of_c(m, arma::fill::zeros);
    for (arma::uword c = 0; c < m; ++c) {
        for (const auto& p : rows[c]) {
            a_of_c(c) += re_inner(p.A, C[p.blk]);
        }
    }

    auto apply_rows = [&](const std::vector<arma::cx_mat>& Z) {
        arma::vec out(m, arma::fill::zeros);
        for (arma::uword c = 0; c < m; ++c) {
            for (const auto& p : rows[c]) {
                out(c) += re_inner(p.A, Z[p.blk]);
            }
        }
        return out;
    };
    auto caller_objective = [&]() {
        double v = 0.0;
        for (arma::uword blk = 0; blk < nb; ++blk) {
            v += re_inner(problem.objective[blk], X[blk]);
        }
        return v;
    };

    SdpSolution sol;
    sol.status = SdpStatus::MaxIters;
    double mu = std::clamp(settings.mu0, kMuMin, kMuMax);
    int mu_adapts_left = kMuAdaptBudget;
    double best_obj = -std::numeric_limits<double>::infinity();
    double r_p = std::numeric_limits<double>::infinity();
    double r_d = std::numeric_limits<double>::infinity();
    double stall_rp = std::numeric_limits<double>::infinity();
    double stall_ynorm = 0.0;
    int stall_strikes = 0;
    const long check = std::max<long>(1, settings.check_interval);
    long it = 0;

    while (it < settings.max_iters) {
        ++it;

        // Affine step: least-squares multiplier update.
        if (m > 0) {
            const arma::vec ax = apply_rows(X);
            const arma::vec as = apply_rows(S);
            const arma::vec rhs = (b - ax) / mu - (as - a_of_c);
            y = gram_solve(rhs);
        }

        // Cone step and multiplier update:
        //   V = C - A*(y) - X/mu,  S = proj(V),  X <- mu (S - V).
        for (arma::uword blk = 0; blk < nB; ++blk) {
            V[blk] = C[blk];
        }
        for (arma::uword c = 0; c < m; ++c) {
            for (const auto& p : rows[c]) {
                V[p.blk] -= y(c) * p.A;
            }
        }
        double dual_sq = 0.0;
        for (arma::uword blk = 0; blk < nB; ++blk) {
            V[blk] -= X[blk] / mu;
            S[blk] = V[blk];
            project_psd(S[blk], real_only[blk]);
            arma::cx_mat x_new = mu * (S[blk] - V[blk]);
            dual_sq += arma::accu(arma::square(arma::abs(x_new - X[blk])));
            X[blk] = std::move(x_new);
        }

        const bool last = it >= settings.max_iters;
        if (it % check != 0 && !last) {
            continue;
        }

        r_p = m > 0 ? arma::norm(apply_rows(X) - b) / (1.0 + norm_b) : 0.0;
        r_d = std::sqrt(dual_sq) / mu / (1.0 + norm_c);
        best_obj = std::max(best_obj, caller_objective());
        sol.objective_log.push_back(best_obj);

        if (!std::isfinite(r_p) || !std::isfinite(r_d)) {
            break;
        }
        if (r_p <= settings.tol && r_d <= settings.tol) {
            sol.status = SdpStatus::Optimal;
            break;
        }

        // Residual balancing. mu is the penalty on the dual equality
        // (equivalently the multiplier step size on X): growing it speeds the
        // dual residual at the expense of the primal one, and vice versa.
        // Only finitely many adaptations are allowed: with the penalty
        // eventually fixed the splitting recovers its convergence guarantee,
        // which endless rebalancing can break into a residual limit cycle.
        if (it % kMuAdaptEvery == 0 && mu_adapts_left > 0) {
            if (r_d > 10.0 * r_p) {
                mu = std::min(kMuMax, mu * kMuGrow);
                --mu_adapts_left;
            } else if (r_p > 10.0 * r_d) {
                mu = std::max(kMuMin, mu / kMuGrow);
                --mu_adapts_left;
            }
        }

        // Divergence watch: the affine residual has stopped improving while
        // the multiplier norm keeps growing -- the constraint set admits no
        // PSD point.
        if (it % kStallWindow == 0) {
            const double ynorm = arma::norm(y);
            if (r_p > 100.0 * settings.tol && r_p > kStallImprovement * stall_rp &&
                ynorm > kStallGrowth * std::max(1.0, stall_ynorm)) {
                ++stall_strikes;
            } else {
                stall_strikes = 0;
            }
            if (stall_strikes >= kStallStrikes) {
                sol.status = SdpStatus::Infeasible;
                break;
            }
            stall_rp = r_p;
            stall_ynorm = ynorm;
        }
    }

    sol.X.assign(X.begin(), X.begin() + nb);
    sol.objective_value = 0.0;
    for (arma::uword blk = 0; blk < nb; ++blk) {
        sol.objective_value += re_inner(problem.objective[blk], sol.X[blk]);
    }
    sol.primal_residual = r_p;
    sol.dual_residual = r_d;
    sol.iterations = it;
    return sol;
}

RankOne extract_rank_one(const arma::cx_mat& X) {
    if (X.n_rows != X.n_cols || X.n_rows == 0) {
        throw DimensionMismatch("rank-one extraction needs a square nonempty matrix");
    }
    RankOne out;
    out.v.zeros(X.n_rows);
    const arma::cx_mat h = 0.5 * (X + X.t());
    arma::vec ev;
    arma::cx_mat q;
    if (!arma::eig_sym(ev, q, h)) {
        throw Error("eigendecomposition failed during rank-one extraction");
    }
    const double lam_max = ev(ev.n_elem - 1);
    const double trace = arma::accu(ev);
    if (lam_max <= 0.0 || trace <= 0.0) {
        out.ratio = 1.0;
        return out;
    }
    // Deterministic tie-break towards the lowest index attaining the top
    // eigenvalue in the ascending eigensolver ordering.
    arma::uword top = ev.n_elem - 1;
    for (arma::uword i = 0; i < ev.n_elem; ++i) {
        if (ev(i) >= lam_max * (1.0 - 1e-12)) {
            top = i;
            break;
        }
    }
    out.v = std::sqrt(ev(top)) * q.col(top);
    out.ratio = std::min(1.0, ev(top) / trace);
    return out;
}

ResidualReport residuals(const SdpProblem& problem, const std::vector<arma::cx_mat>& X) {
    problem.validate();
    if (X.size() != problem.blocks.size()) {
        throw DimensionMismatch("candidate point must supply one matrix per block");
    }
    for (arma::uword blk = 0; blk < X.size(); ++blk) {
        if (X[blk].n_rows != problem.blocks[blk].dim || X[blk].n_cols != problem.blocks[blk].dim) {
            throw DimensionMismatch("candidate point block dimensions do not match");
        }
    }
    ResidualReport rep;
    rep.violation.zeros(problem.constraints.size());
    rep.min_eig.zeros(X.size());
    for (arma::uword c = 0; c < problem.constraints.size(); ++c) {
        const auto& row = problem.constraints[c];
        double val = 0.0;
        for (const auto& [blk, A] : row.coeff) {
            val += re_inner(A, X[blk]);
        }
        switch (row.sense) {
            case SdpProblem::Sense::LE:
                rep.violation(c) = std::max(0.0, val - row.bound);
                break;
            case SdpProblem::Sense::GE:
                rep.violation(c) = std::max(0.0, row.bound - val);
                break;
            case SdpProblem::Sense::EQ:
                rep.violation(c) = std::abs(val - row.bound);
                break;
        }
    }
    for (arma::uword blk = 0; blk < X.size(); ++blk) {
        if (X[blk].n_rows == 1) {
            rep.min_eig(blk) = X[blk](0, 0).real();
            continue;
        }
        const arma::vec ev = arma::eig_sym(arma::cx_mat(0.5 * (X[blk] + X[blk].t())));
        rep.min_eig(blk) = ev.min();
    }
    return rep;
}

}  // namespace hristrack::sdp
