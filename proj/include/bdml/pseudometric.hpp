#pragma once

#include "bdml/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bdml {

/// Compiled SDP relaxation of the mapping step: margin matrices
/// X~_ij = X_ij (x) Lambda over a qd x qd PSD variable, plus the
/// orthogonality equalities A_uv . Q~ = b_uv. A_uv is block diagonal with d
/// identical q x q blocks carrying 1 at (u,v) and (v,u); the diagonal block
/// B_uu carries 2 at (u,u) so that A_uv . vec(Q)vec(Q)^T = 2 (Q Q^T)_uv for
/// every u <= v and the equalities force Tr(Q~) = q.
struct RelaxedSdp {
    int q = 0;
    int d = 0;
    bool triplet_mode = false;
    double mu = 1.0;
    VectorXd lambda;                  // fixed positive diagonal of the scaling
    std::vector<SymMatrix> xt_s;      // target-pair matrices, S order
    std::vector<SymMatrix> margins;   // impostor X~ (pair) or triplet differences
    std::vector<std::tuple<int, int, SparseSym>> a_uv;  // u <= v
    SymMatrix gt;                     // (1/n) sum over S = G (x) Lambda

    static double b_uv(int u, int v) { return u == v ? 2.0 : 0.0; }
};

RelaxedSdp relax_to_sdp(const ConstraintSet& cs, const VectorXd& lambda, double mu,
                        bool triplet_mode = false);

struct RelaxationSolution {
    SymMatrix q_star;
    double objective = 0.0;        // Gt . Q*
    double max_violation = 0.0;    // over all compiled constraints
    double equality_residual = 0.0;
    double u0 = 0.0;
    int bisect_steps = 0;
    long long oracle_calls = 0;
};

/// Bisection + MWU over the trace-<=-q PSD cone; equalities are encoded as
/// opposing inequality pairs. u0_hint is the objective of a known QCQP
/// point; the cap is expanded when the hint is infeasible at the solver's
/// accuracy. rho <= 0 picks 5q.
RelaxationSolution solve_relaxation(const RelaxedSdp& sdp, double delta, double rho,
                                    long long mwu_rounds, double bisect_tol, double u0_hint);

struct RoundStats {
    double nu = 0.0;         // min margin value at the selected sample
    double zeta = 0.0;       // max |xi^T A_uv xi - b_uv|
    double objective = 0.0;  // (1/n) sum_S xi^T X~ xi
    int selected = -1;
    int rank = 0;            // rank of Q* at the factor tolerance
};

struct RoundResult {
    MatrixXd q;  // q x d, vec(q) == selected xi (column-major)
    RoundStats stats;
};

/// Gaussian randomization: draws T' samples xi ~ N(0, Q*), keeps the one
/// with the smallest objective. Sampling is keyed by (seed, t).
RoundResult gaussian_round(const SymMatrix& q_star, const RelaxedSdp& sdp, int t_prime,
                           std::uint64_t seed);

/// Probability lower bound of the rounding tail theorem, evaluated exactly
/// as printed; only valid for pair-mode relaxations (the margin matrices
/// must be PSD).
double approx_bound(double gamma, double eps, double omega, int r, int q, int d,
                    int n_impostors);

struct PseudoMetricModel {
    MatrixXd q;        // q x d mapping
    VectorXd lambda;   // positive diagonal scaling
    SymMatrix m_induced;
    double ortho_residual = 0.0;  // ||Q Q^T - I||_max
    double objective = 0.0;
    double gamma_achieved = 0.0;  // nu / mu
    RoundStats round_stats;
    int outer_iters_run = 0;
    std::string stop_reason;
};

struct PseudoConfig {
    TrainConfig train;          // margins, distortion cap (applied to Lambda), budgets
    int q = 1;
    int outer_iters = 4;
    int t_prime = 100;
    std::uint64_t seed = 0;
    bool reorthonormalize = false;  // polar-style row correction after rounding
};

/// Alternates the diagonal scaling step and the SDP-relaxed mapping step
/// starting from the top-q PCA directions; an outer iterate is kept only if
/// it does not increase the objective.
PseudoMetricModel alternate_optimize(const LabeledDataset& data, const PseudoConfig& cfg);

/// Top-q principal directions (rows orthonormal).
MatrixXd pca_directions(const LabeledDataset& data, int q);

struct TailBoundCell {
    std::string name;
    double param = 0.0;
    double empirical = 0.0;
    double bound = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

struct TailBoundReport {
    std::vector<TailBoundCell> cells;
    bool all_pass = true;
};

/// Monte Carlo check of the concentration lemmas behind the rounding
/// theorem: left-side polynomial, right-side exponential, two-side
/// exponential and the chi-square tail pair. Each cell asserts
/// empirical <= bound + 3 standard errors.
TailBoundReport verify_tail_bounds(long long trials, std::uint64_t seed,
                                   long long chi_square_trials = 0);

}  // namespace bdml
