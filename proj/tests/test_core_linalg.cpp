#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdml/core_linalg.hpp"
#include "jacobi_oracle.hpp"
#include "test_util.hpp"

#include <cstdio>

using namespace bdml;

TEST_CASE("condition number of identity and diagonal matrices") {
    CHECK(condition_number(SymMatrix::identity(3)) == doctest::Approx(1.0));
    CHECK(condition_number(SymMatrix::identity(7)) == doctest::Approx(1.0));
    MatrixXd d2(2, 2);
    d2 << 4, 0, 0, 1;
    CHECK(condition_number(SymMatrix(d2)) == doctest::Approx(4.0));
}

TEST_CASE("condition number matches Jacobi oracle on random SPD matrices") {
    auto g = testutil::rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixXd a = testutil::random_spd(5, g);
        auto jac = testoracle::jacobi_eigen(a);
        const double expected = jac.values(4) / jac.values(0);
        CHECK(condition_number(SymMatrix(a)) ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("condition number is +inf below the PSD tolerance") {
    MatrixXd d2(2, 2);
    d2 << 1, 0, 0, 0;
    CHECK(std::isinf(condition_number(SymMatrix(d2))));
    MatrixXd neg(2, 2);
    neg << 1, 0, 0, -1;
    CHECK(std::isinf(condition_number(SymMatrix(neg))));
}

TEST_CASE("eigen summary invariants") {
    auto g = testutil::rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd a = testutil::random_symmetric(6, g);
        EigenSummary s = eigen_summary(SymMatrix(a));
        CHECK(s.lambda_min <= s.lambda_max);
        if (s.lambda_min > 0) CHECK(s.kappa == doctest::Approx(s.lambda_max / s.lambda_min));
    }
}

TEST_CASE("top eigenpair on a diagonal matrix") {
    MatrixXd d3 = MatrixXd::Zero(3, 3);
    d3.diagonal() << 3, 1, -2;
    auto r = top_eigenpair(SymMatrix(d3));
    CHECK(r.value == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(std::abs(r.vector(0)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("top eigenpair of a rank-one matrix") {
    auto g = testutil::rng(13);
    VectorXd u = testutil::random_vector(6, g);
    SymMatrix c(MatrixXd(u * u.transpose()));
    auto r = top_eigenpair(c);
    CHECK(r.value == doctest::Approx(u.squaredNorm()).epsilon(1e-10));
    CHECK(std::abs(r.vector.dot(u.normalized())) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("top eigenpair matches Jacobi oracle on random symmetric 20x20") {
    auto g = testutil::rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd a = testutil::random_symmetric(20, g);
        auto jac = testoracle::jacobi_eigen(a);
        auto r = top_eigenpair(SymMatrix(a));
        CHECK(r.value == doctest::Approx(jac.values(19)).epsilon(1e-8));
    }
}

TEST_CASE("top eigenpair dominates random Rayleigh quotients") {
    auto g = testutil::rng(15);
    MatrixXd a = testutil::random_symmetric(12, g);
    SymMatrix c(a);
    auto r = top_eigenpair(c);
    for (int i = 0; i < 100; ++i) {
        VectorXd v = testutil::random_vector(12, g).normalized();
        CHECK(r.value >= c.quad(v) - 1e-9);
    }
}

TEST_CASE("psd factor of identity and rank-deficient diagonal") {
    MatrixXd u = psd_factor(SymMatrix::identity(4));
    CHECK(u.cols() == 4);
    CHECK((u * u.transpose() - MatrixXd::Identity(4, 4)).norm() < 1e-10);

    MatrixXd d2 = MatrixXd::Zero(2, 2);
    d2(0, 0) = 4.0;
    MatrixXd f = psd_factor(SymMatrix(d2));
    CHECK(f.cols() == 1);
    CHECK(std::abs(f(0, 0)) == doctest::Approx(2.0));
    CHECK(f(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("psd factor reconstructs random PSD matrices") {
    auto g = testutil::rng(16);
    for (int trial = 0; trial < 10; ++trial) {
        MatrixXd b = testutil::random_matrix(8, 8, g);
        MatrixXd a = b.transpose() * b;
        MatrixXd u = psd_factor(SymMatrix(a));
        CHECK((u * u.transpose() - a).norm() <= 1e-9);
        CHECK(u.cols() <= 8);
    }
    MatrixXd neg = -MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(psd_factor(SymMatrix(neg)), NotPsdError);
}

TEST_CASE("kronecker product basic cases") {
    SymMatrix id = kron(SymMatrix::identity(3), SymMatrix::identity(2));
    CHECK((id.mat() - MatrixXd::Identity(6, 6)).norm() == doctest::Approx(0.0));

    MatrixXd x(2, 2);
    x << 2, 0, 0, 3;
    MatrixXd one(1, 1);
    one << 1;
    SymMatrix k = kron(SymMatrix(x), SymMatrix(one));
    CHECK((k.mat() - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("kronecker product matches a quadruple-loop oracle") {
    auto g = testutil::rng(17);
    MatrixXd x = testutil::random_symmetric(3, g);
    MatrixXd l = testutil::random_symmetric(2, g);
    SymMatrix k = kron(SymMatrix(x), SymMatrix(l));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    CHECK(k(i * 2 + a, j * 2 + b) == doctest::Approx(x(i, j) * l(a, b)));
}

TEST_CASE("vectorization identity: zeta^T (X kron L) zeta == Tr(Q^T L Q X)") {
    auto g = testutil::rng(18);
    for (int trial = 0; trial < 50; ++trial) {
        const int q = 2 + static_cast<int>(g() % 3);
        const int d = 2 + static_cast<int>(g() % 4);
        MatrixXd qm = testutil::random_matrix(q, d, g);
        MatrixXd x = testutil::random_symmetric(d, g);
        MatrixXd l = testutil::random_symmetric(q, g);
        VectorXd zeta = Eigen::Map<const VectorXd>(qm.data(), q * d);  // column-stacked
        const double lhs = kron(SymMatrix(x), SymMatrix(l)).quad(zeta);
        const double rhs = (qm.transpose() * l * qm * x).trace();
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("Rayleigh quotient bracketed by the extreme eigenvalues") {
    auto g = testutil::rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixXd a = testutil::random_symmetric(5, g);
        SymMatrix m(a);
        EigenSummary s = eigen_summary(m);
        VectorXd x = testutil::random_vector(5, g);
        VectorXd y = testutil::random_vector(5, g);
        if ((x - y).norm() < 1e-12) continue;
        const double rq = m.quad(x - y) / (x - y).squaredNorm();
        CHECK(rq >= s.lambda_min - 1e-9);
        CHECK(rq <= s.lambda_max + 1e-9);
    }
}

TEST_CASE("matrix CSV round trip") {
    auto g = testutil::rng(20);
    MatrixXd a = testutil::random_matrix(4, 4, g);
    const std::string path = "core_roundtrip_tmp.csv";
    write_matrix_csv(a, path);
    MatrixXd b = read_matrix_csv(path);
    CHECK((a - b).norm() == doctest::Approx(0.0));
    std::remove(path.c_str());
}
