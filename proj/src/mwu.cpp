#include "bdml/mwu.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace bdml {

MwuConfig MwuConfig::theorem(double delta, double rho, int m) {
    MwuConfig cfg;
    cfg.delta = delta;
    cfg.rho = rho;
    cfg.auto_derived = true;
    cfg.finalize(m);
    return cfg;
}

MwuConfig MwuConfig::budgeted(double delta, double rho, long long rounds, int m) {
    MwuConfig cfg;
    cfg.delta = delta;
    cfg.rho = rho;
    cfg.rounds = rounds;
    cfg.finalize(m);
    return cfg;
}

void MwuConfig::finalize(int m) {
    if (delta <= 0.0 || rho <= 0.0) throw std::invalid_argument("MwuConfig: need delta, rho > 0");
    const double lnm = std::log(std::max(m, 2));
    if (rounds <= 0) {
        // theorem-derived schedule
        epsilon = c1 * delta / rho;
        rounds = static_cast<long long>(std::ceil(c2 * rho * rho * lnm / (delta * delta)));
        auto_derived = true;
    } else if (epsilon <= 0.0) {
        epsilon = std::sqrt(lnm / (2.0 * static_cast<double>(rounds)));
    }
    epsilon = std::min(epsilon, 0.5);
    if (epsilon <= 0.0 || epsilon > 0.5) throw std::invalid_argument("MwuConfig: epsilon out of range");
}

OracleResult oracle(const VectorXd& p, const LinearConstraintSystem& sys, double eig_tol) {
    const int m = sys.m();
    if (p.size() != m) throw std::invalid_argument("oracle: probability vector size mismatch");
    double psum = 0.0;
    for (int i = 0; i < m; ++i) {
        if (p(i) < 0.0) throw std::invalid_argument("oracle: negative probability");
        psum += p(i);
    }
    if (std::abs(psum - 1.0) > 1e-12)
        throw std::invalid_argument("oracle: probabilities must sum to 1");

    const int n = sys.block_dim;
    MatrixXd a = MatrixXd::Zero(n, n);
    double h_mix = 0.0;
    for (int i = 0; i < m; ++i) {
        if (p(i) == 0.0) continue;
        sys.constraints[i].j.add_to_dense(a, p(i));
        h_mix += p(i) * sys.constraints[i].h;
    }

    // top eigenvalue of sum_i p_i J_i; the slack coordinate contributes 0
    double lam = 0.0;
    VectorXd dir;
    if (sys.diagonal_only) {
        int best = 0;
        a.diagonal().maxCoeff(&best);
        lam = a(best, best);
        dir = VectorXd::Unit(n, best);
    } else {
        auto top = top_eigenpair(SymMatrix(MatrixXd(0.5 * (a + a.transpose()))), eig_tol);
        lam = top.value;
        dir = top.vector;
    }

    OracleResult res;
    if (lam >= 0.0) {
        res.value = sys.r_bound * lam - h_mix;
        res.v = dir;
    } else {
        // every direction points down: best point of the cone is Y = 0
        res.value = -h_mix;
        res.v = VectorXd::Zero(n);
    }
    if (res.value < 0.0) return res;
    res.feasible = true;
    return res;
}

MwuOutcome mwu_solve(const LinearConstraintSystem& sys, const MwuConfig& cfg_in,
                     const ProgressFn& progress) {
    const auto t0 = std::chrono::steady_clock::now();
    MwuConfig cfg = cfg_in;
    cfg.finalize(sys.m());

    const int m = sys.m();
    const int n = sys.block_dim;
    const double r = sys.r_bound;

    VectorXd w = VectorXd::Ones(m);
    VectorXd p(m);
    VectorXd val_sum = VectorXd::Zero(m);  // running sums of J_i . Y^(t)
    MatrixXd y_sum = MatrixXd::Zero(n, n);

    MwuOutcome out;
    out.oracle_values.reserve(static_cast<size_t>(std::min<long long>(cfg.rounds, 1 << 20)));

    for (long long t = 1; t <= cfg.rounds; ++t) {
        p = w / w.sum();
        OracleResult orc = oracle(p, sys);
        if (!orc.feasible) {
            out.status = MwuOutcome::Status::Infeasible;
            out.certificate_round = t;
            out.certificate_p = p;
            out.rounds_used = t;
            out.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return out;
        }
        out.oracle_values.push_back(orc.value);
        if (progress) progress(t, orc.value);

        for (int i = 0; i < m; ++i) {
            const double val = sys.constraints[i].j.dot_rank_one(orc.v, r);
            val_sum(i) += val;
            double eta = (val - sys.constraints[i].h) / cfg.rho;
            if (eta > 1.0) {
                eta = 1.0;
                ++out.width_exceeded;
            } else if (eta < -1.0) {
                eta = -1.0;
                ++out.width_exceeded;
            }
            w(i) *= (1.0 - cfg.epsilon * eta);
            if (w(i) <= 0.0)
                throw std::runtime_error(
                    "mwu_solve: nonpositive weight, width parameter too small (|eta| = " +
                    std::to_string(std::abs(eta)) + ")");
        }
        y_sum.noalias() += (r * orc.v) * orc.v.transpose();
        out.rounds_used = t;
    }

    y_sum /= static_cast<double>(cfg.rounds);
    out.status = MwuOutcome::Status::Feasible;
    out.y_bar = SymMatrix(y_sum);
    out.max_violation = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        const double avg = val_sum(i) / static_cast<double>(cfg.rounds);
        out.max_violation = std::max(out.max_violation, sys.constraints[i].h - avg);
    }
    if (sys.d > 0) out.trace_m = y_sum.topLeftCorner(sys.d, sys.d).trace();
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace {

// J symmetric with J . Y == Y(r,c) for symmetric Y
void add_picker(SparseSym& j, int r, int c, double coeff) {
    if (r == c)
        j.add_sym(r, r, coeff);
    else
        j.add_sym(r, c, 0.5 * coeff);
}

}  // namespace

LinearConstraintSystem compile_feasibility(const ConstraintSet& cs, double g_bar, double mu,
                                           double distortion_cap, double r_bound,
                                           bool triplet_mode, CompileOptions opts) {
    if (distortion_cap < 1.0) throw std::invalid_argument("compile_feasibility: K must be >= 1");
    if (mu <= 0.0) throw std::invalid_argument("compile_feasibility: mu must be > 0");
    if (triplet_mode && cs.t.empty())
        throw std::invalid_argument("compile_feasibility: empty triplet set");
    if (!triplet_mode && cs.i.empty())
        throw std::invalid_argument("compile_feasibility: empty impostor set");

    const int d = cs.d;
    const int dim = 3 * d + 1;
    const int off_m1 = d, off_m2 = 2 * d, idx_alpha = 3 * d;

    LinearConstraintSystem sys;
    sys.block_dim = dim;
    sys.r_bound = r_bound;
    sys.d = d;
    sys.distortion_cap = distortion_cap;
    sys.diagonal_only = opts.diagonal;

    // objective cap, stored negated: -G . M >= -g_bar
    {
        LinearConstraint lc;
        lc.tag = ConstraintTag::objective_cap;
        lc.j.dim = dim;
        lc.h = -g_bar;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b)
                if (cs.g(a, b) != 0.0) lc.j.add_sym(a, b, -cs.g(a, b));
        sys.constraints.push_back(std::move(lc));
    }

    auto add_margin = [&](const SymMatrix& x, ConstraintTag tag) {
        LinearConstraint lc;
        lc.tag = tag;
        lc.j.dim = dim;
        lc.h = mu;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b)
                if (x(a, b) != 0.0) lc.j.add_sym(a, b, x(a, b));
        sys.constraints.push_back(std::move(lc));
    };

    if (triplet_mode) {
        for (const auto& [i, j, q] : cs.t)
            add_margin(cs.xij(i, q) - cs.xij(i, j), ConstraintTag::triplet_margin);
    } else {
        for (const auto& pr : cs.i) add_margin(cs.x.at(pr), ConstraintTag::impostor_margin);
    }

    // link constraints, entrywise over all d^2 positions as opposing pairs;
    // diagonal mode keeps only the d diagonal positions
    for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
            if (opts.diagonal && a != b) continue;
            for (double sign : {+1.0, -1.0}) {
                LinearConstraint lo;  // M - M1 - alpha I = 0 at (a,b)
                lo.tag = ConstraintTag::link_lower;
                lo.j.dim = dim;
                lo.h = 0.0;
                add_picker(lo.j, a, b, sign);
                add_picker(lo.j, off_m1 + a, off_m1 + b, -sign);
                if (a == b) add_picker(lo.j, idx_alpha, idx_alpha, -sign);
                sys.constraints.push_back(std::move(lo));

                // M + M2 - alpha K I = 0 at (a,b), scaled by 1/K so the row
                // width stays O(R) instead of O(K R)
                LinearConstraint up;
                up.tag = ConstraintTag::link_upper;
                up.j.dim = dim;
                up.h = 0.0;
                add_picker(up.j, a, b, sign / distortion_cap);
                add_picker(up.j, off_m2 + a, off_m2 + b, sign / distortion_cap);
                if (a == b) add_picker(up.j, idx_alpha, idx_alpha, -sign);
                sys.constraints.push_back(std::move(up));
            }
        }
    }

    // alpha floor keeps M strictly PD; the positivity of alpha is not
    // expressible as a closed constraint
    {
        LinearConstraint lc;
        lc.tag = ConstraintTag::alpha_floor;
        lc.j.dim = dim;
        lc.h = opts.tau_alpha >= 0.0 ? opts.tau_alpha
                                     : 1e-3 * r_bound / (dim * distortion_cap);
        add_picker(lc.j, idx_alpha, idx_alpha, 1.0);
        sys.constraints.push_back(std::move(lc));
    }

    return sys;
}

ExtractedMetric extract_metric(const SymMatrix& y_bar, const LinearConstraintSystem& sys) {
    const int d = sys.d;
    if (d <= 0 || y_bar.dim() != 3 * d + 1)
        throw std::invalid_argument("extract_metric: block dimension mismatch");
    ExtractedMetric out;
    out.m = y_bar.block(0, d);
    out.alpha = y_bar(3 * d, 3 * d);
    const SymMatrix m1 = y_bar.block(d, d);
    const SymMatrix m2 = y_bar.block(2 * d, d);
    const MatrixXd eye = MatrixXd::Identity(d, d);
    out.link_lower_residual =
        (out.m.mat() - m1.mat() - out.alpha * eye).cwiseAbs().maxCoeff();
    out.link_upper_residual =
        (out.m.mat() + m2.mat() - out.alpha * sys.distortion_cap * eye).cwiseAbs().maxCoeff();
    return out;
}

}  // namespace bdml
