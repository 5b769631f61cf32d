#pragma once

#include <armadillo>
#include <iosfwd>
#include <vector>

#include "hristrack/common.hpp"

namespace hristrack::sdp {

/// Block-structured semidefinite program in maximization form:
///   maximize   sum_b Re tr{C_b X_b}
///   subject to sum_b Re tr{A_{c,b} X_b}  (<=|=|>=)  bound_c   for each c,
///              X_b >= 0 (PSD), Hermitian.
/// All coefficient matrices must be Hermitian within 1e-12. A block with
/// hermitian=false is treated as real symmetric (imaginary parts must be
/// zero and are kept zero by the solver).
struct SdpProblem {
    struct Block {
        arma::uword dim = 0;
        bool hermitian = true;
    };
    enum class Sense { LE, EQ, GE };
    struct Constraint {
        /// Sparse row: (block index, Hermitian coefficient matrix) pairs.
        std::vector<std::pair<arma::uword, arma::cx_mat>> coeff;
        Sense sense = Sense::EQ;
        double bound = 0.0;
    };

    std::vector<Block> blocks;
    std::vector<arma::cx_mat> objective;  ///< one Hermitian C_b per block
    std::vector<Constraint> constraints;

    /// Shape and Hermitian-ness checks; throws DimensionMismatch.
    void validate() const;

    /// Text dump of the instance (format documented in the README) for
    /// cross-checking against external solvers.
    void dump(std::ostream& os) const;
};

struct SdpSettings {
    double tol = 1e-6;        ///< primal and dual residual tolerance (scaled data)
    long max_iters = 50000;
    double mu0 = 1.0;         ///< initial splitting penalty
    long check_interval = 25; ///< iterations between convergence checks
    /// Optional initial primal iterate (one matrix per declared block).
    std::vector<arma::cx_mat> initial_X;
};

enum class SdpStatus { Optimal, MaxIters, Infeasible };

struct SdpSolution {
    std::vector<arma::cx_mat> X;  ///< one PSD Hermitian matrix per block
    double objective_value = 0.0; ///< in the caller's maximization sense
    double primal_residual = 0.0; ///< ||A(X)-b|| / (1+||b||), scaled data
    double dual_residual = 0.0;   ///< ||C-A*(y)-S||_F / (1+||C||_F), scaled data
    long iterations = 0;
    SdpStatus status = SdpStatus::MaxIters;
    /// Objective trace at each convergence checkpoint; records the best
    /// candidate objective seen so far, hence non-decreasing.
    std::vector<double> objective_log;
};

/// First-order operator-splitting solve: each iteration alternates a
/// projection onto the affine constraint set (a linear solve against the
/// prefactored constraint Gram matrix) with a projection onto the PSD cone
/// (Hermitian eigendecomposition, eigenvalue clipping). Inequality rows
/// carry internal nonnegative slacks. Deterministic for fixed inputs.
SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings = {});

/// Principal rank-one component sqrt(lambda_max) v_max of a PSD matrix and
/// the rank-one ratio lambda_max / sum_i lambda_i. Degenerate spectra break
/// ties towards the lowest eigenvector index of the deterministic
/// eigensolver ordering; a zero matrix yields a zero vector and ratio 1.
struct RankOne {
    arma::cx_vec v;
    double ratio = 1.0;
};

RankOne extract_rank_one(const arma::cx_mat& X);

/// Exact feasibility report for a candidate point: one-sided constraint
/// violations (absolute deviation for equalities) and the minimum
/// eigenvalue of each block.
struct ResidualReport {
    arma::vec violation;  ///< per constraint
    arma::vec min_eig;    ///< per block
};

ResidualReport residuals(const SdpProblem& problem, const std::vector<arma::cx_mat>& X);

}  // namespace hristrack::sdp
