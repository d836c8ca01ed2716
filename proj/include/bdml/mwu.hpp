#pragma once

#include "bdml/constraints.hpp"
#include "bdml/core_linalg.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace bdml {

/// Sparse symmetric matrix as a mirrored entry list: off-diagonal positions
/// carry both (r,c) and (c,r) entries so that dot products are plain sums.
struct SparseSym {
    struct Entry {
        int r, c;
        double v;
    };
    int dim = 0;
    std::vector<Entry> entries;

    void add_sym(int r, int c, double v) {
        if (r == c) {
            entries.push_back({r, r, v});
        } else {
            entries.push_back({r, c, v});
            entries.push_back({c, r, v});
        }
    }

    /// J . (scale * v v^T)
    double dot_rank_one(const VectorXd& v, double scale) const {
        double s = 0.0;
        for (const auto& e : entries) s += e.v * v(e.r) * v(e.c);
        return s * scale;
    }

    double dot_dense(const MatrixXd& y) const {
        double s = 0.0;
        for (const auto& e : entries) s += e.v * y(e.r, e.c);
        return s;
    }

    void add_to_dense(MatrixXd& out, double w) const {
        for (const auto& e : entries) out(e.r, e.c) += w * e.v;
    }

    SymMatrix to_dense() const {
        MatrixXd m = MatrixXd::Zero(dim, dim);
        add_to_dense(m, 1.0);
        return SymMatrix(m);
    }

    /// Frobenius norm; entries already carry both mirrored halves.
    double frobenius() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.v * e.v;
        return std::sqrt(s);
    }
};

enum class ConstraintTag {
    objective_cap,
    impostor_margin,
    triplet_margin,
    link_lower,
    link_upper,
    alpha_floor,
    equality_pair,
};

/// Meaning is always "J . Y >= h"; the objective cap is stored negated.
struct LinearConstraint {
    SparseSym j;
    double h = 0.0;
    ConstraintTag tag = ConstraintTag::impostor_margin;
};

struct LinearConstraintSystem {
    std::vector<LinearConstraint> constraints;
    int block_dim = 0;
    double r_bound = 0.0;       // trace bound on the PSD variable
    int d = 0;                  // original metric dimension (0: generic system)
    double distortion_cap = 0;  // K, for extraction diagnostics
    bool diagonal_only = false;

    int m() const { return static_cast<int>(constraints.size()); }

    /// Upper bound on max_i |J_i . Y - h_i| over the trace-bounded cone:
    /// R ||J_i||_F + |h_i|; any rho at or above this avoids eta clamping.
    double width_bound() const {
        double w = 0.0;
        for (const auto& c : constraints)
            w = std::max(w, r_bound * c.j.frobenius() + std::abs(c.h));
        return w;
    }
};

struct MwuConfig {
    double delta = 0.05;
    double rho = 0.0;
    double epsilon = 0.0;   // 0: derive when finalized
    long long rounds = 0;   // 0: derive when finalized
    double c1 = 0.25;
    double c2 = 8.0;
    bool auto_derived = false;

    /// Theorem-faithful settings: epsilon = c1*delta/rho, T = c2*rho^2 ln(m)/delta^2.
    static MwuConfig theorem(double delta, double rho, int m);

    /// Fixed round budget; epsilon chosen to minimize the violation bound
    /// rho*(2 eps + ln(m)/(eps T)), capped at 1/2.
    static MwuConfig budgeted(double delta, double rho, long long rounds, int m);

    void finalize(int m);
};

struct MwuOutcome {
    enum class Status { Feasible, Infeasible };
    Status status = Status::Infeasible;
    SymMatrix y_bar;                 // round-averaged solution (Feasible only)
    double max_violation = 0.0;      // max_i (h_i - J_i . Ybar)
    long long rounds_used = 0;
    long long certificate_round = -1;
    VectorXd certificate_p;          // probability vector at the failing round
    std::vector<double> oracle_values;
    long long width_exceeded = 0;    // rounds x constraints where |eta| clamped
    double trace_m = 0.0;            // trace of the leading d-block of Ybar
    double wall_time_s = 0.0;

    bool feasible() const { return status == Status::Feasible; }
};

struct OracleResult {
    bool feasible = false;
    VectorXd v;          // direction with Y = R v v^T; zero when Y = 0 wins
    double value = 0.0;  // R * lambda_max(C), the oracle maximum
};

/// Maximizes the weighted aggregate sum_i p_i (J_i . Y - h_i) over the
/// trace-bounded PSD cone {Y >= 0, tr Y <= R}.  Equivalently, with a slack
/// coordinate absorbing the unused trace, assembles
/// C = diag(sum_i p_i (J_i - (h_i/R) I), -h_mix/R) and takes the top
/// eigenpair: the maximizer is either R v v^T for the top eigenvector v of
/// sum_i p_i J_i, or the zero matrix when every aggregate direction points
/// down (slack eigenvalue wins).  Infeasible iff R * lambda_max(C) < 0.
/// With diagonal_only the cone is restricted to diagonal matrices and the
/// maximizer is a coordinate direction.
OracleResult oracle(const VectorXd& p, const LinearConstraintSystem& sys,
                    double eig_tol = 1e-9);

using ProgressFn = std::function<void(long long round, double oracle_value)>;

MwuOutcome mwu_solve(const LinearConstraintSystem& sys, const MwuConfig& cfg,
                     const ProgressFn& progress = nullptr);

struct CompileOptions {
    double tau_alpha = -1.0;  // <0: default 1e-3 * R / ((3d+1) K)
    bool diagonal = false;    // restrict to diagonal metrics (Lambda step)
};

/// Compiles one feasibility instance (objective cap g_bar, margin mu,
/// distortion cap K) into constraints over the block variable
/// Y = blockdiag(M, M1, M2, alpha) with M1 = M - alpha I, M2 = alpha K I - M
/// enforced entrywise as opposing inequality pairs.
LinearConstraintSystem compile_feasibility(const ConstraintSet& cs, double g_bar, double mu,
                                           double distortion_cap, double r_bound,
                                           bool triplet_mode, CompileOptions opts = {});

struct ExtractedMetric {
    SymMatrix m;
    double alpha = 0.0;
    double link_lower_residual = 0.0;  // ||M - M1 - alpha I||_max
    double link_upper_residual = 0.0;  // ||M + M2 - alpha K I||_max
};

ExtractedMetric extract_metric(const SymMatrix& y_bar, const LinearConstraintSystem& sys);

}  // namespace bdml
