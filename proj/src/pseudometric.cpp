#include "bdml/pseudometric.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

namespace bdml {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ stream));
}

SparseSym make_a_uv(int u, int v, int q, int d) {
    SparseSym a;
    a.dim = q * d;
    for (int c = 0; c < d; ++c) {
        if (u == v)
            a.add_sym(c * q + u, c * q + u, 2.0);
        else
            a.add_sym(c * q + u, c * q + v, 1.0);
    }
    return a;
}

}  // namespace

RelaxedSdp relax_to_sdp(const ConstraintSet& cs, const VectorXd& lambda, double mu,
                        bool triplet_mode) {
    const int q = static_cast<int>(lambda.size());
    for (int i = 0; i < q; ++i)
        if (!(lambda(i) > 0.0))
            throw std::invalid_argument("relax_to_sdp: Lambda must be positive diagonal");
    RelaxedSdp sdp;
    sdp.q = q;
    sdp.d = cs.d;
    sdp.mu = mu;
    sdp.triplet_mode = triplet_mode;
    sdp.lambda = lambda;
    const SymMatrix lam(MatrixXd(lambda.asDiagonal()));

    std::map<IndexPair, SymMatrix> xt;
    for (const auto& [p, x] : cs.x) xt.emplace(p, kron(x, lam));

    for (const auto& p : cs.s) sdp.xt_s.push_back(xt.at(p));
    if (triplet_mode) {
        if (cs.t.empty()) throw std::invalid_argument("relax_to_sdp: empty triplet set");
        for (const auto& [i, j, k] : cs.t)
            sdp.margins.push_back(xt.at({i, k}) - xt.at({i, j}));
    } else {
        if (cs.i.empty()) throw std::invalid_argument("relax_to_sdp: empty impostor set");
        for (const auto& p : cs.i) sdp.margins.push_back(xt.at(p));
    }
    for (int u = 0; u < q; ++u)
        for (int v = u; v < q; ++v) sdp.a_uv.emplace_back(u, v, make_a_uv(u, v, q, cs.d));
    sdp.gt = kron(cs.g, lam);
    return sdp;
}

namespace {

LinearConstraintSystem compile_relaxation(const RelaxedSdp& sdp, double g_bar) {
    LinearConstraintSystem sys;
    sys.block_dim = sdp.q * sdp.d;
    sys.r_bound = sdp.q;

    auto add_dense = [&](const SymMatrix& m, double h, double sign, ConstraintTag tag) {
        LinearConstraint lc;
        lc.tag = tag;
        lc.h = sign * h;
        lc.j.dim = sys.block_dim;
        for (int a = 0; a < m.dim(); ++a)
            for (int b = a; b < m.dim(); ++b)
                if (m(a, b) != 0.0) lc.j.add_sym(a, b, sign * m(a, b));
        sys.constraints.push_back(std::move(lc));
    };

    add_dense(sdp.gt, g_bar, -1.0, ConstraintTag::objective_cap);
    for (const auto& x : sdp.margins)
        add_dense(x, sdp.mu, 1.0,
                  sdp.triplet_mode ? ConstraintTag::triplet_margin
                                   : ConstraintTag::impostor_margin);
    for (const auto& [u, v, a] : sdp.a_uv) {
        const double b = RelaxedSdp::b_uv(u, v);
        for (double sign : {+1.0, -1.0}) {
            LinearConstraint lc;
            lc.tag = ConstraintTag::equality_pair;
            lc.h = sign * b;
            lc.j.dim = sys.block_dim;
            for (const auto& e : a.entries) lc.j.entries.push_back({e.r, e.c, sign * e.v});
            sys.constraints.push_back(std::move(lc));
        }
    }
    return sys;
}

}  // namespace

RelaxationSolution solve_relaxation(const RelaxedSdp& sdp, double delta, double rho,
                                    long long mwu_rounds, double bisect_tol, double u0_hint) {
    if (rho <= 0.0) rho = 5.0 * sdp.q;
    RelaxationSolution sol;

    struct Attempt {
        bool feasible = false;
        MwuOutcome outcome;
        LinearConstraintSystem sys;
    };
    auto attempt = [&](double g_bar) {
        Attempt at;
        at.sys = compile_relaxation(sdp, g_bar);
        MwuConfig cfg = mwu_rounds > 0 ? MwuConfig::budgeted(delta, rho, mwu_rounds, at.sys.m())
                                       : MwuConfig::theorem(delta, rho, at.sys.m());
        at.outcome = mwu_solve(at.sys, cfg);
        sol.oracle_calls += at.outcome.rounds_used;
        ++sol.bisect_steps;
        at.feasible = at.outcome.feasible() && at.outcome.max_violation <= delta + 1e-12;
        return at;
    };

    double hi = std::max(u0_hint, 1e-8);
    Attempt top = attempt(hi);
    for (int grow = 0; !top.feasible && grow < 4; ++grow) {
        hi *= 2.0;
        top = attempt(hi);
    }
    if (!top.feasible)
        throw std::runtime_error("solve_relaxation: infeasible relaxation at cap " +
                                 std::to_string(hi));
    sol.u0 = hi;

    double lo = 0.0;
    Attempt retained = top;
    const double tol = bisect_tol > 0.0 ? bisect_tol : 1e-2 * hi;
    while (hi - lo > tol) {
        const double g_bar = 0.5 * (lo + hi);
        Attempt at = attempt(g_bar);
        if (at.feasible) {
            hi = g_bar;
            retained = std::move(at);
        } else {
            lo = g_bar;
        }
    }

    sol.q_star = retained.outcome.y_bar;
    sol.objective = sdp.gt.dot(sol.q_star);
    sol.max_violation = retained.outcome.max_violation;
    sol.equality_residual = 0.0;
    for (const auto& [u, v, a] : sdp.a_uv)
        sol.equality_residual =
            std::max(sol.equality_residual,
                     std::abs(a.dot_dense(sol.q_star.mat()) - RelaxedSdp::b_uv(u, v)));
    return sol;
}

RoundResult gaussian_round(const SymMatrix& q_star, const RelaxedSdp& sdp, int t_prime,
                           std::uint64_t seed) {
    if (t_prime < 1) throw std::invalid_argument("gaussian_round: T' must be positive");
    const EigenSummary es = eigen_summary(q_star);
    const double factor_tol = 1e-8 * std::max(es.lambda_max, 1e-300);
    const MatrixXd u = psd_factor(q_star, std::max(factor_tol, 1e-14));
    const int r = static_cast<int>(u.cols());

    VectorXd best;
    double best_obj = std::numeric_limits<double>::infinity();
    int best_t = -1;
    const double inv_n = 1.0 / static_cast<double>(sdp.xt_s.size());
    for (int t = 0; t < t_prime; ++t) {
        auto rng = keyed_rng(seed, static_cast<std::uint64_t>(t));
        std::normal_distribution<double> normal(0.0, 1.0);
        VectorXd z(r);
        for (int i = 0; i < r; ++i) z(i) = normal(rng);
        const VectorXd xi = u * z;
        double obj = 0.0;
        for (const auto& x : sdp.xt_s) obj += x.quad(xi);
        obj *= inv_n;
        if (obj < best_obj) {  // deterministic argmin, first index wins ties
            best_obj = obj;
            best = xi;
            best_t = t;
        }
    }

    RoundResult res;
    res.stats.objective = best_obj;
    res.stats.selected = best_t;
    res.stats.rank = r;
    res.stats.nu = std::numeric_limits<double>::infinity();
    for (const auto& x : sdp.margins) res.stats.nu = std::min(res.stats.nu, x.quad(best));
    res.stats.zeta = 0.0;
    for (const auto& [uu, vv, a] : sdp.a_uv) {
        double val = 0.0;
        for (const auto& e : a.entries) val += e.v * best(e.r) * best(e.c);
        res.stats.zeta = std::max(res.stats.zeta, std::abs(val - RelaxedSdp::b_uv(uu, vv)));
    }
    // column-major reshape: vec(Q) == xi exactly
    res.q = Eigen::Map<const MatrixXd>(best.data(), sdp.q, sdp.d);
    return res;
}

double approx_bound(double gamma, double eps, double omega, int r, int q, int d,
                    int n_impostors) {
    if (r < 1) throw std::invalid_argument("approx_bound: rank must be >= 1");
    if (gamma <= 0.0 || eps < 0.0 || omega < 1.0)
        throw std::invalid_argument("approx_bound: parameter out of range");
    const double pi = std::numbers::pi;
    const double margin_term =
        n_impostors * std::max(std::sqrt(gamma), 2.0 * (r - 1) * gamma / (pi - 2.0));
    const double obj_term = r * std::exp(-0.5 * (omega - std::sqrt(2.0 * omega - 1.0)));
    const double tau = std::sqrt(eps / q * std::sqrt(2.0 / (static_cast<double>(r) * d)) + 1.0);
    const double eq_term =
        0.5 * r * q * (q + 1.0) *
        (std::exp(-0.25 * (tau - 1.0) * (tau - 1.0)) +
         std::exp(-eps * eps / (8.0 * r * d * static_cast<double>(q) * q)));
    return 1.0 - margin_term - obj_term - eq_term;
}

MatrixXd pca_directions(const LabeledDataset& data, int q) {
    const int d = data.d;
    if (q < 1 || q > d) throw std::invalid_argument("pca_directions: need 1 <= q <= d");
    VectorXd mean = VectorXd::Zero(d);
    for (const auto& p : data.points) mean += p;
    mean /= std::max(data.size(), 1);
    MatrixXd cov = MatrixXd::Zero(d, d);
    for (const auto& p : data.points) {
        const VectorXd c = p - mean;
        cov.noalias() += c * c.transpose();
    }
    cov /= std::max(data.size(), 1);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    MatrixXd out(q, d);
    for (int i = 0; i < q; ++i) out.row(i) = es.eigenvectors().col(d - 1 - i).transpose();
    return out;
}

namespace {

double pseudo_objective(const ConstraintSet& cs, const MatrixXd& q, const VectorXd& lambda) {
    const SymMatrix m(MatrixXd(q.transpose() * lambda.asDiagonal() * q));
    return cs.g.dot(m);
}

MatrixXd orthonormalize_rows(const MatrixXd& q) {
    // polar-style: rows of (QQ^T)^{-1/2} Q are orthonormal
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(q * q.transpose());
    MatrixXd inv_sqrt = es.eigenvectors() *
                        es.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
                        es.eigenvectors().transpose();
    return inv_sqrt * q;
}

}  // namespace

PseudoMetricModel alternate_optimize(const LabeledDataset& data, const PseudoConfig& cfg) {
    const int d = data.d;
    const int q = cfg.q;
    if (q < 1 || q > d) throw std::invalid_argument("alternate_optimize: need 1 <= q <= d");

    ConstraintSet cs = build_neighborhoods(data, cfg.train.k);
    MatrixXd cur_q = pca_directions(data, q);
    VectorXd cur_lambda = VectorXd::Ones(q);
    double cur_obj = pseudo_objective(cs, cur_q, cur_lambda);

    PseudoMetricModel model;
    model.stop_reason = "outer_iters";

    auto mapped_points = [&](const MatrixXd& qm) {
        std::vector<VectorXd> pts;
        pts.reserve(data.points.size());
        for (const auto& p : data.points) pts.push_back(qm * p);
        return pts;
    };

    RoundStats last_stats;
    for (int iter = 0; iter < cfg.outer_iters; ++iter) {
        MatrixXd next_q = cur_q;
        VectorXd next_lambda = cur_lambda;

        // scaling step: diagonal BDML in the mapped space
        ConstraintSet cs_mapped = rebuild_with_points(cs, mapped_points(next_q));
        TrainConfig diag_cfg = cfg.train;
        auto diag_res = solve_diagonal(cs_mapped, diag_cfg);
        if (std::holds_alternative<GloballyInfeasible>(diag_res)) {
            model.stop_reason = "lambda_step_infeasible";
            break;
        }
        next_lambda = std::get<DiagonalResult>(diag_res).lambda;

        // mapping step: SDP relaxation + randomized rounding
        RoundStats stats;
        try {
            RelaxedSdp sdp = relax_to_sdp(cs, next_lambda, cfg.train.mu, cfg.train.triplet_mode);
            const VectorXd zeta =
                Eigen::Map<const VectorXd>(next_q.data(), static_cast<Eigen::Index>(q) * d);
            const double u0 = sdp.gt.quad(zeta);
            const double gamma = [&] {
                double g = 0.0;
                for (const auto& p : data.points) g = std::max(g, (next_q * p).norm());
                return g;
            }();
            const double rho = 5.0 * q * std::max(1.0, next_lambda.maxCoeff() * gamma * gamma);
            RelaxationSolution rel = solve_relaxation(sdp, cfg.train.delta, rho,
                                                      cfg.train.mwu_rounds, 0.0, u0);
            RoundResult rounded =
                gaussian_round(rel.q_star, sdp, cfg.t_prime,
                               splitmix64(cfg.seed) ^ static_cast<std::uint64_t>(iter));
            next_q = cfg.reorthonormalize ? orthonormalize_rows(rounded.q) : rounded.q;
            stats = rounded.stats;
        } catch (const std::runtime_error&) {
            model.stop_reason = "q_step_infeasible";
            break;
        }

        const double next_obj = pseudo_objective(cs, next_q, next_lambda);
        model.outer_iters_run = iter + 1;
        if (next_obj > cur_obj) {
            model.stop_reason = "objective_regressed";
            break;
        }
        const double improvement = cur_obj > 0.0 ? (cur_obj - next_obj) / cur_obj : 0.0;
        cur_q = next_q;
        cur_lambda = next_lambda;
        cur_obj = next_obj;
        last_stats = stats;
        if (improvement < 1e-3) {
            model.stop_reason = "converged";
            break;
        }
    }

    model.q = cur_q;
    model.lambda = cur_lambda;
    model.m_induced = SymMatrix(MatrixXd(cur_q.transpose() * cur_lambda.asDiagonal() * cur_q));
    model.ortho_residual =
        (cur_q * cur_q.transpose() - MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff();
    model.objective = cur_obj;
    model.round_stats = last_stats;
    model.gamma_achieved = cfg.train.mu > 0 ? last_stats.nu / cfg.train.mu : 0.0;
    return model;
}

namespace {

SymMatrix random_psd(int dim, int rank, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd b(dim, rank);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < rank; ++j) b(i, j) = normal(rng);
    return SymMatrix(MatrixXd(b * b.transpose()));
}

}  // namespace

TailBoundReport verify_tail_bounds(long long trials, std::uint64_t seed,
                                   long long chi_square_trials) {
    if (trials < 1) throw std::invalid_argument("verify_tail_bounds: trials must be >= 1");
    if (chi_square_trials <= 0) chi_square_trials = trials;
    TailBoundReport report;
    const double pi = std::numbers::pi;

    auto push = [&](const std::string& name, double param, double empirical, double bound,
                    long long n) {
        TailBoundCell cell;
        cell.name = name;
        cell.param = param;
        cell.empirical = empirical;
        cell.bound = bound;
        cell.std_error =
            std::sqrt(std::max(empirical * (1.0 - empirical), 1.0 / n) / static_cast<double>(n));
        cell.pass = empirical <= bound + 3.0 * cell.std_error;
        report.all_pass = report.all_pass && cell.pass;
        report.cells.push_back(cell);
    };

    // quadratic-form bounds: sample xi ~ N(0, Z) and compare against the
    // polynomial (left) and exponential (right) tails
    struct MatCase {
        int dim, rank_h, rank_z;
    };
    const std::vector<MatCase> cases = {{3, 3, 3}, {6, 2, 4}, {10, 10, 5}};
    int case_id = 0;
    for (const auto& mc : cases) {
        auto rng = keyed_rng(seed, 100 + case_id);
        const SymMatrix h = case_id == 0 ? SymMatrix::identity(mc.dim)
                                         : random_psd(mc.dim, mc.rank_h, rng);
        const SymMatrix z = case_id == 0 ? SymMatrix::identity(mc.dim)
                                         : random_psd(mc.dim, mc.rank_z, rng);
        const MatrixXd u = psd_factor(z, 1e-12);
        const int rz = static_cast<int>(u.cols());
        const int rbar = std::min(case_id == 0 ? mc.dim : mc.rank_h, rz);
        const double expectation = h.dot(SymMatrix(MatrixXd(u * u.transpose())));

        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> values(trials);
        for (long long t = 0; t < trials; ++t) {
            VectorXd zv(rz);
            for (int i = 0; i < rz; ++i) zv(i) = normal(rng);
            const VectorXd xi = u * zv;
            values[t] = h.quad(xi);
        }

        for (double gamma : {0.01, 0.1, 0.5}) {
            long long hits = 0;
            for (double v : values)
                if (v < gamma * expectation) ++hits;
            const double bound =
                std::max(std::sqrt(gamma), 2.0 * (rbar - 1) * gamma / (pi - 2.0));
            push("left_poly_case" + std::to_string(case_id), gamma,
                 static_cast<double>(hits) / trials, bound, trials);
        }
        for (double gamma : {2.0, 4.0, 8.0}) {
            long long hits = 0;
            for (double v : values)
                if (v > gamma * expectation) ++hits;
            const double bound =
                rbar * std::exp(-0.5 * (gamma - std::sqrt(2.0 * gamma - 1.0)));
            push("right_exp_case" + std::to_string(case_id), gamma,
                 static_cast<double>(hits) / trials, bound, trials);
        }
        ++case_id;
    }

    // two-side bound with the actual orthogonality constraint matrices
    {
        const int q = 2, d = 3;
        auto rng = keyed_rng(seed, 200);
        SymMatrix z = random_psd(q * d, 4, rng);
        z = z * (q / z.trace());  // feasible trace: Tr(Z) = q
        const MatrixXd u = psd_factor(z, 1e-12);
        const int rz = static_cast<int>(u.cols());
        std::normal_distribution<double> normal(0.0, 1.0);

        const std::vector<std::pair<int, int>> uv_cells = {{0, 0}, {0, 1}};
        for (const auto& [uu, vv] : uv_cells) {
            const SparseSym a = make_a_uv(uu, vv, q, d);
            const int rank_a = (uu == vv ? d : 2 * d);
            const int rbar = std::min(rank_a, rz);
            const double expectation = a.dot_dense(MatrixXd(u * u.transpose()));
            std::vector<double> values(trials);
            for (long long t = 0; t < trials; ++t) {
                VectorXd zv(rz);
                for (int i = 0; i < rz; ++i) zv(i) = normal(rng);
                const VectorXd xi = u * zv;
                double val = 0.0;
                for (const auto& e : a.entries) val += e.v * xi(e.r) * xi(e.c);
                values[t] = std::abs(val - expectation);
            }
            for (double eps : {5.0, 15.0, 40.0}) {
                long long hits = 0;
                for (double v : values)
                    if (v >= eps) ++hits;
                const double tau =
                    std::sqrt(eps / q * std::sqrt(2.0 / (static_cast<double>(rbar) * d)) + 1.0);
                const double bound =
                    rbar * (std::exp(-0.25 * (tau - 1.0) * (tau - 1.0)) +
                            std::exp(-eps * eps /
                                     (8.0 * rbar * d * static_cast<double>(q) * q)));
                push("two_side_uv" + std::to_string(uu) + std::to_string(vv), eps,
                     static_cast<double>(hits) / trials, bound, trials);
            }
        }
    }

    // chi-square tail pair
    for (int dof : {1, 5, 10}) {
        auto rng = keyed_rng(seed, 300 + dof);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> values(chi_square_trials);
        for (long long t = 0; t < chi_square_trials; ++t) {
            double s = 0.0;
            for (int i = 0; i < dof; ++i) {
                const double g = normal(rng);
                s += g * g;
            }
            values[t] = s;
        }
        for (double eps : {0.5, 1.0, 2.0}) {
            long long upper = 0, lower = 0;
            const double up_thresh = dof + 2.0 * std::sqrt(dof * eps) + 2.0 * eps;
            const double lo_thresh = dof - 2.0 * std::sqrt(dof * eps);
            for (double v : values) {
                if (v >= up_thresh) ++upper;
                if (v <= lo_thresh) ++lower;
            }
            const double bound = std::exp(-eps);
            push("chi_square_upper_d" + std::to_string(dof), eps,
                 static_cast<double>(upper) / chi_square_trials, bound, chi_square_trials);
            push("chi_square_lower_d" + std::to_string(dof), eps,
                 static_cast<double>(lower) / chi_square_trials, bound, chi_square_trials);
        }
    }

    return report;
}

}  // namespace bdml
