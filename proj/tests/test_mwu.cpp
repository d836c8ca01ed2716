#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdml/mwu.hpp"
#include "jacobi_oracle.hpp"
#include "test_util.hpp"

using namespace bdml;

namespace {

/// 1-d instance built by hand: one target pair at distance ds, one impostor
/// pair at distance di.
ConstraintSet toy_1d(double ds, double di) {
    ConstraintSet cs;
    cs.d = 1;
    VectorXd z = VectorXd::Zero(1), a(1), b(1);
    a << ds;
    b << di;
    cs.s = {{0, 1}};
    cs.i = {{0, 2}};
    cs.x[{0, 1}] = outer_difference(z, a);
    cs.x[{0, 2}] = outer_difference(z, b);
    cs.g = cs.x[{0, 1}];
    cs.n = 1;
    return cs;
}

/// Brute-force feasibility of the 1-d block instance over (M, alpha).
bool grid_feasible_1d(const ConstraintSet& cs, double g_bar, double mu, double cap, double r,
                      double tau, double slack) {
    const double xi = cs.x.at({0, 2})(0, 0);
    const double gs = cs.g(0, 0);
    const int steps = 800;
    for (int im = 0; im <= steps; ++im) {
        const double m = r * im / steps;
        for (int ia = 0; ia <= steps; ++ia) {
            const double alpha = r * ia / steps;
            if (m * xi < mu - slack) continue;
            if (gs * m > g_bar + slack) continue;
            if (m - alpha < -slack) continue;                  // M1 >= 0
            if (alpha * cap - m < -slack) continue;            // M2 >= 0
            if (alpha < tau - slack) continue;
            if (m + alpha * cap > r + slack) continue;         // block trace
            return true;
        }
    }
    return false;
}

LinearConstraintSystem single_constraint_system(double j_diag, double h, int dim, double r) {
    LinearConstraintSystem sys;
    sys.block_dim = dim;
    sys.r_bound = r;
    LinearConstraint c;
    c.j.dim = dim;
    for (int i = 0; i < dim; ++i) c.j.add_sym(i, i, j_diag);
    c.h = h;
    sys.constraints.push_back(c);
    return sys;
}

}  // namespace

TEST_CASE("compiled constraint count is |I| + 4d^2 + 2 in pair mode") {
    // d=2, three impostor pairs
    ConstraintSet cs;
    cs.d = 2;
    VectorXd z = VectorXd::Zero(2);
    auto mk = [&](double a, double b) {
        VectorXd v(2);
        v << a, b;
        return v;
    };
    cs.s = {{0, 1}};
    cs.i = {{0, 2}, {0, 3}, {1, 2}};
    cs.x[{0, 1}] = outer_difference(z, mk(0.1, 0));
    cs.x[{0, 2}] = outer_difference(z, mk(2, 0));
    cs.x[{0, 3}] = outer_difference(z, mk(0, 2));
    cs.x[{1, 2}] = outer_difference(mk(0.1, 0), mk(2, 0));
    cs.g = cs.x[{0, 1}];
    cs.n = 1;
    LinearConstraintSystem sys = compile_feasibility(cs, 10.0, 1.0, 100.0, 20.0, false);
    CHECK(sys.m() == 3 + 16 + 2);
    CHECK(sys.block_dim == 3 * 2 + 1);
}

TEST_CASE("hand-built block point satisfies every link constraint exactly") {
    ConstraintSet cs = toy_1d(0.1, std::sqrt(2.0));
    const double cap = 2.0;
    LinearConstraintSystem sys = compile_feasibility(cs, 100.0, 1.0, cap, 10.0, false);
    // Y = blockdiag(M, M1, M2, alpha) with M = alpha I = I, M1 = 0, M2 = (K-1)I
    MatrixXd y = MatrixXd::Zero(4, 4);
    y(0, 0) = 1.0;
    y(1, 1) = 0.0;
    y(2, 2) = cap - 1.0;
    y(3, 3) = 1.0;
    for (const auto& c : sys.constraints) {
        if (c.tag == ConstraintTag::link_lower || c.tag == ConstraintTag::link_upper)
            CHECK(c.j.dot_dense(y) == doctest::Approx(c.h).epsilon(1e-14));
    }
}

TEST_CASE("invalid compile inputs are rejected") {
    ConstraintSet cs = toy_1d(0.1, 1.0);
    CHECK_THROWS(compile_feasibility(cs, 1.0, 1.0, 0.5, 10.0, false));  // K < 1
    CHECK_THROWS(compile_feasibility(cs, 1.0, -1.0, 2.0, 10.0, false));
    ConstraintSet no_i = cs;
    no_i.i.clear();
    CHECK_THROWS(compile_feasibility(no_i, 1.0, 1.0, 2.0, 10.0, false));
}

TEST_CASE("oracle trivial single-constraint cases") {
    LinearConstraintSystem pos = single_constraint_system(1.0, 0.0, 3, 5.0);
    VectorXd p = VectorXd::Ones(1);
    OracleResult r = oracle(p, pos);
    CHECK(r.feasible);
    CHECK(r.value == doctest::Approx(5.0).epsilon(1e-9));  // R * lambda_max(I - 0)

    LinearConstraintSystem neg = single_constraint_system(-1.0, 1.0, 3, 5.0);
    OracleResult r2 = oracle(p, neg);
    CHECK_FALSE(r2.feasible);
}

TEST_CASE("oracle optimum matches the best rank-one Jacobi candidate") {
    auto g = testutil::rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const int dim = 3 + static_cast<int>(g() % 4);
        const double r = 2.0 + (g() % 5);
        LinearConstraintSystem sys;
        sys.block_dim = dim;
        sys.r_bound = r;
        for (int c = 0; c < 3; ++c) {
            LinearConstraint lc;
            lc.j.dim = dim;
            MatrixXd jm = testutil::random_symmetric(dim, g);
            for (int i = 0; i < dim; ++i)
                for (int jcol = i; jcol < dim; ++jcol) lc.j.add_sym(i, jcol, jm(i, jcol));
            lc.h = testutil::random_vector(1, g)(0);
            sys.constraints.push_back(lc);
        }
        VectorXd p(3);
        p << 0.2, 0.5, 0.3;

        // independent evaluation over {Y >= 0, tr Y <= r}: the best point is
        // either r vv^T for the top Jacobi eigenvector of A = sum p_i J_i, or
        // the zero matrix; both compared via the aggregate sum p_i (J_i.Y - h_i)
        MatrixXd a = MatrixXd::Zero(dim, dim);
        double h_mix = 0.0;
        for (int i = 0; i < 3; ++i) {
            a += p(i) * sys.constraints[i].j.to_dense().mat();
            h_mix += p(i) * sys.constraints[i].h;
        }
        auto jac = testoracle::jacobi_eigen(a);
        const double best = std::max(r * jac.values(dim - 1), 0.0) - h_mix;

        OracleResult res = oracle(p, sys);
        if (best < 0) {
            CHECK_FALSE(res.feasible);
        } else {
            REQUIRE(res.feasible);
            CHECK(res.value ==
                  doctest::Approx(best).epsilon(1e-8));
        }
    }
}

TEST_CASE("mwu on the single constraint I.Y >= 0 is feasible with no violation") {
    LinearConstraintSystem sys = single_constraint_system(1.0, 0.0, 2, 3.0);
    MwuConfig cfg = MwuConfig::theorem(0.05, 3.0, sys.m());
    cfg.rounds = std::min(cfg.rounds, 50LL);
    MwuOutcome out = mwu_solve(sys, cfg);
    REQUIRE(out.feasible());
    CHECK(out.max_violation <= 1e-9);
}

TEST_CASE("contradictory margin pair is certified infeasible") {
    // M.X >= mu and -M.X >= -mu/2 cannot both hold for mu > 0
    const int dim = 2;
    LinearConstraintSystem sys;
    sys.block_dim = dim;
    sys.r_bound = 4.0;
    MatrixXd x = MatrixXd::Identity(dim, dim);
    LinearConstraint c1, c2;
    c1.j.dim = c2.j.dim = dim;
    for (int i = 0; i < dim; ++i) {
        c1.j.add_sym(i, i, 1.0);
        c2.j.add_sym(i, i, -1.0);
    }
    c1.h = 1.0;    // M.X >= 1
    c2.h = -0.5;   // M.X <= 1/2
    sys.constraints = {c1, c2};
    MwuConfig cfg = MwuConfig::budgeted(0.05, 10.0, 2000, sys.m());
    MwuOutcome out = mwu_solve(sys, cfg);
    CHECK_FALSE(out.feasible());
    CHECK(out.certificate_round >= 0);

    // re-verify the certificate: oracle maximum at p was negative, for both
    // the best rank-one point (via Jacobi) and the zero matrix
    const VectorXd& p = out.certificate_p;
    MatrixXd a = MatrixXd::Zero(dim, dim);
    double h_mix = 0.0;
    for (int i = 0; i < sys.m(); ++i) {
        a += p(i) * sys.constraints[i].j.to_dense().mat();
        h_mix += p(i) * sys.constraints[i].h;
    }
    auto jac = testoracle::jacobi_eigen(a);
    CHECK(std::max(sys.r_bound * jac.values(dim - 1), 0.0) - h_mix < 0.0);
}

TEST_CASE("1-d toy feasibility agrees with the 2-variable grid oracle") {
    ConstraintSet cs = toy_1d(1.0, std::sqrt(2.0));
    const double mu = 1.0, cap = 2.0, r = 10.0;
    const double delta = 0.02;
    const double tau = 1e-3 * r / (4.0 * cap);
    // g_bar well inside feasibility and well inside infeasibility
    for (double g_bar : {1.0, 0.05, 1e-4}) {
        LinearConstraintSystem sys = compile_feasibility(cs, g_bar, mu, cap, r, false);
        MwuConfig cfg = MwuConfig::budgeted(delta, 5.0 * r, 40000, sys.m());
        MwuOutcome out = mwu_solve(sys, cfg);
        const bool solver_feasible = out.feasible() && out.max_violation <= delta;
        const bool grid_strict = grid_feasible_1d(cs, g_bar, mu, cap, r, tau, -delta);
        const bool grid_relaxed = grid_feasible_1d(cs, g_bar, mu, cap, r, tau, delta);
        if (grid_strict) CHECK(solver_feasible);
        if (!grid_relaxed) CHECK_FALSE(solver_feasible);
    }
}

TEST_CASE("feasible averaged solutions live in the trace-bounded PSD cone") {
    ConstraintSet cs = toy_1d(0.1, std::sqrt(2.0));
    LinearConstraintSystem sys = compile_feasibility(cs, 1.0, 1.0, 2.0, 10.0, false);
    MwuConfig cfg = MwuConfig::budgeted(0.02, 50.0, 3000, sys.m());
    MwuOutcome out = mwu_solve(sys, cfg);
    REQUIRE(out.feasible());
    CHECK(out.y_bar.trace() <= sys.r_bound + 1e-9);
    EigenSummary s = eigen_summary(out.y_bar);
    CHECK(s.lambda_min >= -1e-9 * sys.r_bound);
}

TEST_CASE("extract_metric recovers hand-built blocks and residuals") {
    ConstraintSet cs = toy_1d(0.1, std::sqrt(2.0));
    const double cap = 2.0;
    LinearConstraintSystem sys = compile_feasibility(cs, 1.0, 1.0, cap, 10.0, false);
    MatrixXd y = MatrixXd::Zero(4, 4);
    y(0, 0) = 3.0;              // M
    y(1, 1) = 1.0;              // M1 = M - alpha
    y(2, 2) = 2.0 * cap - 3.0;  // M2 = alpha K - M
    y(3, 3) = 2.0;              // alpha
    ExtractedMetric em = extract_metric(SymMatrix(y), sys);
    CHECK(em.m(0, 0) == doctest::Approx(3.0));
    CHECK(em.alpha == doctest::Approx(2.0));
    CHECK(em.link_lower_residual == doctest::Approx(0.0));
    CHECK(em.link_upper_residual == doctest::Approx(0.0));
}

TEST_CASE("feasible solve yields small link residuals and a bounded condition number") {
    ConstraintSet cs = toy_1d(0.1, std::sqrt(2.0));
    const double delta = 0.01, cap = 2.0;
    LinearConstraintSystem sys = compile_feasibility(cs, 1.0, 1.0, cap, 10.0, false);
    MwuConfig cfg = MwuConfig::budgeted(delta, 50.0, 8000, sys.m());
    MwuOutcome out = mwu_solve(sys, cfg);
    REQUIRE(out.feasible());
    REQUIRE(out.max_violation <= delta);
    ExtractedMetric em = extract_metric(out.y_bar, sys);
    CHECK(em.link_lower_residual <= delta + 1e-12);
    CHECK(em.link_upper_residual <= delta + 1e-12);
    // kappa(M) <= (alpha K + delta) / (alpha - delta) when alpha > delta
    if (em.alpha > delta) {
        EigenSummary s = eigen_summary(em.m);
        CHECK(s.lambda_max <= em.alpha * cap + delta + 1e-9);
        CHECK(s.lambda_min >= em.alpha - delta - 1e-9);
    }
}

TEST_CASE("theorem schedule derives epsilon and T from delta, rho, m") {
    MwuConfig cfg = MwuConfig::theorem(0.1, 2.0, 10);
    CHECK(cfg.epsilon == doctest::Approx(0.25 * 0.1 / 2.0));
    CHECK(cfg.rounds == static_cast<long long>(std::ceil(8.0 * 4.0 * std::log(10.0) / 0.01)));
    CHECK(cfg.epsilon <= 0.5);
}
