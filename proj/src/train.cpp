#include "bdml/train.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

namespace bdml {

namespace {

double identity_objective(const ConstraintSet& cs) { return cs.g.trace(); }

double tau_floor(const TrainConfig& cfg, int d) {
    return cfg.tau_alpha >= 0.0
               ? cfg.tau_alpha
               : 1e-3 * cfg.effective_r(d) / ((3 * d + 1) * cfg.distortion_cap);
}

// Rounds an averaged MWU iterate onto the exact feasible set: clip the
// spectrum of the extracted M into [alpha, K alpha] (condition bound holds by
// construction), rescale to fit the trace budget and the objective cap, and
// accept when every margin survives within delta.  Feasibility of the result
// is established by direct measurement rather than the width guarantee, which
// converges too slowly on the link rows at practical round budgets.
std::optional<FeasibleSeed> repair_metric(const SymMatrix& m_raw, const ConstraintSet& cs,
                                          const TrainConfig& cfg, double g_bar) {
    const int d = cs.d;
    const double r = cfg.effective_r(d);
    const double cap = cfg.distortion_cap;
    const double tau = tau_floor(cfg, d);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m_raw.mat());
    VectorXd ev = es.eigenvalues();
    double lmax = ev.maxCoeff();
    if (!(lmax > 0.0)) return std::nullopt;
    double alpha = std::max(lmax / cap, tau);
    for (int i = 0; i < d; ++i) ev(i) = std::clamp(ev(i), alpha, lmax);

    const double block_tr = ev.sum() + alpha * (d * (cap - 1.0) + 1.0);
    double obj = 0.0;
    {
        const MatrixXd m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        obj = cs.g.dot(SymMatrix(m));
    }
    double s = r / block_tr;
    if (obj > 0.0) s = std::min(s, g_bar / obj);
    if (!(s > 0.0) || !std::isfinite(s)) return std::nullopt;

    // rebuild at the final scale so the alpha floor stays honored exactly
    lmax *= s;
    alpha = std::max(lmax / cap, tau);
    for (int i = 0; i < d; ++i) ev(i) = std::clamp(s * ev(i), alpha, lmax);
    SymMatrix mf(
        MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose()));
    if (max_margin_violation(cs, mf, cfg.triplet_mode, cfg.mu) > cfg.delta) return std::nullopt;
    const double obj_f = cs.g.dot(mf);
    // the tau floor can nudge objective and trace past the scaled targets
    if (obj_f > g_bar + tau * cs.g.trace() + 1e-9 * std::max(1.0, g_bar)) return std::nullopt;
    if (ev.sum() + alpha * (d * (cap - 1.0) + 1.0) > r + tau * (d * cap + 1.0) + 1e-9 * r)
        return std::nullopt;
    return FeasibleSeed{mf, alpha, obj_f};
}

double min_margin_gap_euclidean(const ConstraintSet& cs, bool triplet_mode) {
    double gap = std::numeric_limits<double>::infinity();
    if (triplet_mode) {
        for (const auto& [i, j, q] : cs.t)
            gap = std::min(gap, cs.xij(i, q).trace() - cs.xij(i, j).trace());
    } else {
        for (const auto& p : cs.i) gap = std::min(gap, cs.x.at(p).trace());
    }
    return gap;
}

// Margins and objective cap alone, over the d-dimensional trace-bounded cone.
// This relaxes the full problem (every feasible metric satisfies it), so its
// infeasibility certificates carry over; the condition cap is restored on the
// averaged iterate by repair_metric.
LinearConstraintSystem compile_margin_stage(const ConstraintSet& cs, double g_bar, double mu,
                                            double r_bound, bool triplet_mode, bool diagonal) {
    LinearConstraintSystem sys;
    sys.block_dim = cs.d;
    sys.r_bound = r_bound;
    sys.diagonal_only = diagonal;
    const int d = cs.d;
    auto add_dense = [&](const SymMatrix& m, double h, double sign, ConstraintTag tag) {
        LinearConstraint lc;
        lc.tag = tag;
        lc.h = sign * h;
        lc.j.dim = d;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b)
                if (m(a, b) != 0.0) lc.j.add_sym(a, b, sign * m(a, b));
        sys.constraints.push_back(std::move(lc));
    };
    add_dense(cs.g, g_bar, -1.0, ConstraintTag::objective_cap);
    if (triplet_mode) {
        for (const auto& [i, j, q] : cs.t)
            add_dense(cs.xij(i, q) - cs.xij(i, j), mu, 1.0, ConstraintTag::triplet_margin);
    } else {
        for (const auto& p : cs.i) add_dense(cs.x.at(p), mu, 1.0, ConstraintTag::impostor_margin);
    }
    return sys;
}

struct ProbeSolve {
    bool feasible = false;
    MwuOutcome outcome;
    LinearConstraintSystem sys;
    ExtractedMetric raw;               // valid when the solver ran to completion
    std::optional<FeasibleSeed> repaired;
    long long extra_rounds = 0;        // margin-stage rounds, when it ran
};

ProbeSolve solve_probe(const ConstraintSet& cs, const TrainConfig& cfg, double g_bar,
                       bool diagonal) {
    const int d = cs.d;
    const double r = cfg.effective_r(d);
    CompileOptions opts;
    opts.tau_alpha = cfg.tau_alpha;
    opts.diagonal = diagonal;
    ProbeSolve ps;
    ps.sys = compile_feasibility(cs, g_bar, cfg.mu, cfg.distortion_cap, r, cfg.triplet_mode, opts);
    // the configured width is a ceiling; the per-system bound is usually much
    // tighter and the violation guarantee scales linearly with it
    const double rho = cfg.rho > 0.0
                           ? cfg.rho
                           : std::min(cfg.effective_rho(d),
                                      std::max(ps.sys.width_bound(), 1e-6));
    MwuConfig mwu = cfg.mwu_rounds > 0
                        ? MwuConfig::budgeted(cfg.delta, rho, cfg.mwu_rounds, ps.sys.m())
                        : MwuConfig::theorem(cfg.delta, rho, ps.sys.m());
    ps.outcome = mwu_solve(ps.sys, mwu);
    if (ps.outcome.feasible()) {
        ps.raw = extract_metric(ps.outcome.y_bar, ps.sys);
        ps.repaired = repair_metric(ps.raw.m, cs, cfg, g_bar);
    }
    if (!ps.repaired) {
        // the link rows dominate the block system's weight dynamics at small
        // round budgets; retry with the margin-focused relaxation
        LinearConstraintSystem msys =
            compile_margin_stage(cs, g_bar, cfg.mu, r, cfg.triplet_mode, diagonal);
        const double mrho =
            cfg.rho > 0.0 ? cfg.rho : std::max(msys.width_bound(), 1e-6);
        // the d-dim system is far cheaper per round than the block system, so
        // a 10x budget here still costs less than the first stage
        MwuConfig mcfg =
            cfg.mwu_rounds > 0
                ? MwuConfig::budgeted(cfg.delta, mrho, 10 * cfg.mwu_rounds, msys.m())
                : MwuConfig::theorem(cfg.delta, mrho, msys.m());
        MwuOutcome mout = mwu_solve(msys, mcfg);
        ps.extra_rounds = mout.rounds_used;
        if (mout.feasible()) ps.repaired = repair_metric(mout.y_bar, cs, cfg, g_bar);
    }
    ps.feasible = ps.repaired.has_value();
    return ps;
}

}  // namespace

std::optional<double> feasible_identity_scale(const ConstraintSet& cs, const TrainConfig& cfg) {
    const int d = cs.d;
    const double r = cfg.effective_r(d);
    const double gap = min_margin_gap_euclidean(cs, cfg.triplet_mode);
    if (!(gap > 0.0)) return std::nullopt;
    const double tau = tau_floor(cfg, d);
    const double cap = cfg.distortion_cap;
    // block trace of the c I point with the cheapest alpha = max(c/K, tau):
    // c d + alpha (d K - d + 1)
    double c_hi = r / (2.0 * d - (d - 1.0) / cap);
    if (c_hi / cap < tau) {
        c_hi = (r - tau * (d * cap - d + 1.0)) / d;  // alpha pinned at the floor
        if (c_hi < tau) return std::nullopt;
    }
    const double c_lo = std::max(cfg.mu / gap, tau);
    if (c_lo > c_hi) return std::nullopt;
    return c_hi;
}

TrainResult bisect(const ConstraintSet& cs, const TrainConfig& cfg,
                   std::optional<Interval> interval, std::optional<FeasibleSeed> seed,
                   bool diagonal) {
    const auto t0 = std::chrono::steady_clock::now();
    const int d = cs.d;
    TrainReport report;

    double lo = 0.0, hi = 0.0;
    if (interval) {
        lo = interval->lo;
        hi = interval->hi;
    } else if (auto c = feasible_identity_scale(cs, cfg)) {
        const double tau = tau_floor(cfg, d);
        seed = FeasibleSeed{SymMatrix::identity(d) * *c,
                            std::max(*c / cfg.distortion_cap, tau),
                            *c * identity_objective(cs)};
        hi = seed->objective;
        report.seeded_identity = true;
    } else {
        hi = identity_objective(cs);
    }
    report.u0 = hi;

    const double tol = cfg.bisect_tol > 0.0 ? cfg.bisect_tol : 1e-2 * hi;

    std::optional<FeasibleSeed> retained;
    ExtractedMetric retained_raw;
    MwuOutcome retained_outcome;

    auto probe = [&](double g_bar) {
        ProbeSolve ps = solve_probe(cs, cfg, g_bar, diagonal);
        report.oracle_calls += ps.outcome.rounds_used + ps.extra_rounds;
        report.width_exceeded += ps.outcome.width_exceeded;
        ++report.bisect_steps;
        if (ps.feasible) {
            ++report.feasible_probes;
            retained = ps.repaired;
            retained_raw = ps.raw;
            retained_outcome = ps.outcome;
        }
        return ps.feasible;
    };

    if (!seed && !retained) {
        // the identity objective is only a guess for U0: grow the cap until a
        // probe succeeds before declaring the instance infeasible
        bool ok = probe(hi);
        for (int grow = 0; !ok && grow < 6; ++grow) {
            lo = hi;
            hi *= 2.0;
            ok = probe(hi);
        }
        if (!ok) return GloballyInfeasible{report.bisect_steps};
        report.u0 = hi;
    }

    while (hi - lo > tol) {
        const double g_bar = 0.5 * (lo + hi);
        if (probe(g_bar))
            hi = g_bar;
        else
            lo = g_bar;
    }
    report.final_interval = hi - lo;

    MetricModel model;
    model.config = cfg;
    if (retained) {
        model.m = retained->m;
        model.alpha = retained->alpha;
        report.link_lower_residual = retained_raw.link_lower_residual;
        report.link_upper_residual = retained_raw.link_upper_residual;
        report.max_violation = retained_outcome.max_violation;
        report.trace_m = retained->m.trace();
    } else {
        model.m = seed->m;
        model.alpha = seed->alpha;
        report.trace_m = seed->m.trace();
    }

    // margins are homogeneous in M: shrink a slack solution until the worst
    // margin is tight; the cap, trace and link constraints only relax
    {
        const double v = max_margin_violation(cs, model.m, cfg.triplet_mode, cfg.mu);
        if (v < 0.0) {
            const double s = cfg.mu / (cfg.mu - v);
            const double tau = tau_floor(cfg, d);
            model.m = model.m * s;
            model.alpha = std::max(model.alpha * s, tau);
            report.shrink_scale = s;
        }
    }

    // strict positive definiteness of the returned metric
    EigenSummary ev = eigen_summary(model.m);
    if (!(ev.lambda_min > 0.0)) {
        const double shift = -ev.lambda_min + std::max(1e-12, 1e-10 * std::abs(ev.lambda_max));
        model.m = model.m + SymMatrix::identity(d) * shift;
        report.psd_shift = shift;
        ev = eigen_summary(model.m);
    }
    model.eigen = ev;
    model.objective = cs.g.dot(model.m);
    report.objective = model.objective;
    report.margin_violation = max_margin_violation(cs, model.m, cfg.triplet_mode, cfg.mu);
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    model.report = report;
    return model;
}

ProbeResult parallel_probe(const ConstraintSet& cs, const TrainConfig& cfg) {
    if (cfg.probe_points.empty())
        throw std::invalid_argument("parallel_probe: no probe points");
    std::vector<double> probes = cfg.probe_points;
    std::sort(probes.begin(), probes.end());

    std::vector<std::future<ProbeSolve>> futs;
    futs.reserve(probes.size());
    for (double g_bar : probes)
        futs.push_back(std::async(std::launch::async,
                                  [&, g_bar] { return solve_probe(cs, cfg, g_bar, false); }));

    std::vector<ProbeSolve> results;
    results.reserve(probes.size());
    for (auto& f : futs) results.push_back(f.get());

    ProbeResult out;
    int first_feasible = -1;
    for (size_t i = 0; i < results.size(); ++i) {
        if (results[i].feasible) {
            ++out.feasible_count;
            if (first_feasible < 0) first_feasible = static_cast<int>(i);
        }
    }
    double u0 = 0.0;
    TrainConfig base = cfg;
    if (auto c = feasible_identity_scale(cs, base)) {
        u0 = *c * identity_objective(cs);
        const double tau = tau_floor(cfg, cs.d);
        out.seed = FeasibleSeed{SymMatrix::identity(cs.d) * *c,
                                std::max(*c / cfg.distortion_cap, tau), u0};
    } else {
        u0 = identity_objective(cs);
    }

    if (first_feasible < 0) {
        out.all_infeasible = true;
        out.interval = {probes.back(), u0};
        return out;
    }
    out.seed = results[first_feasible].repaired;
    out.interval = {first_feasible > 0 ? probes[first_feasible - 1] : 0.0,
                    probes[first_feasible]};
    return out;
}

TrainResult train_pbdml(const LabeledDataset& data, const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    cfg.triplet_mode = false;
    ConstraintSet cs = build_neighborhoods(data, cfg.k);
    if (cs.i.empty()) throw std::invalid_argument("train_pbdml: no impostor pairs");
    if (!cfg.probe_points.empty()) {
        ProbeResult pr = parallel_probe(cs, cfg);
        return bisect(cs, cfg, pr.interval, pr.seed);
    }
    return bisect(cs, cfg);
}

TrainResult train_tbdml(const LabeledDataset& data, const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    cfg.triplet_mode = true;
    ConstraintSet cs = build_neighborhoods(data, cfg.k);
    if (cs.t.empty()) throw std::invalid_argument("train_tbdml: no triplets");
    if (!cfg.probe_points.empty()) {
        ProbeResult pr = parallel_probe(cs, cfg);
        return bisect(cs, cfg, pr.interval, pr.seed);
    }
    return bisect(cs, cfg);
}

std::variant<DiagonalResult, GloballyInfeasible> solve_diagonal(const ConstraintSet& cs_mapped,
                                                                const TrainConfig& cfg) {
    TrainResult res = bisect(cs_mapped, cfg, std::nullopt, std::nullopt, /*diagonal=*/true);
    if (std::holds_alternative<GloballyInfeasible>(res))
        return std::get<GloballyInfeasible>(res);
    const MetricModel& model = std::get<MetricModel>(res);
    DiagonalResult out;
    out.lambda = model.m.mat().diagonal();
    for (int i = 0; i < out.lambda.size(); ++i)
        out.lambda(i) = std::max(out.lambda(i), 1e-12);
    out.objective = model.objective;
    out.report = model.report;
    return out;
}

}  // namespace bdml
