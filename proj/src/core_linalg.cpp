#include "bdml/core_linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

namespace bdml {

EigenSummary eigen_summary(const SymMatrix& m, double tol_psd_rel) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.mat(), Eigen::EigenvaluesOnly);
    EigenSummary s;
    s.lambda_min = es.eigenvalues().minCoeff();
    s.lambda_max = es.eigenvalues().maxCoeff();
    const double tol = tol_psd_rel * std::abs(s.lambda_max);
    if (s.lambda_min > tol && s.lambda_min > 0.0)
        s.kappa = s.lambda_max / s.lambda_min;
    else
        s.kappa = std::numeric_limits<double>::infinity();
    return s;
}

double condition_number(const SymMatrix& m, double tol_psd_rel) {
    return eigen_summary(m, tol_psd_rel).kappa;
}

namespace {

// One Lanczos sweep (full reorthogonalization) on B = C + shift*I starting
// from v0; returns the top Ritz pair of B restricted to the Krylov subspace.
void lanczos_sweep(const MatrixXd& c, double shift, const VectorXd& v0, int kmax,
                   double& ritz_value, VectorXd& ritz_vector) {
    const int n = static_cast<int>(c.rows());
    kmax = std::min(kmax, n);
    std::vector<VectorXd> basis;
    basis.reserve(kmax);
    VectorXd alpha(kmax), beta(kmax);
    VectorXd v = v0.normalized();
    int k = 0;
    for (; k < kmax; ++k) {
        basis.push_back(v);
        VectorXd w = c * v + shift * v;
        alpha(k) = v.dot(w);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) w -= b.dot(w) * b;
        beta(k) = w.norm();
        // deflation cutoff must stay relative to the matrix scale: an
        // absolute term stalls convergence on tiny-norm aggregates
        if (beta(k) < 1e-13 * std::max(std::abs(shift), std::abs(alpha(k)))) {
            ++k;
            break;
        }
        v = w / beta(k);
    }
    MatrixXd t = MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        t(i, i) = alpha(i);
        if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta(i);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);
    const int top = k - 1;  // eigenvalues sorted ascending
    ritz_value = es.eigenvalues()(top);
    ritz_vector = VectorXd::Zero(n);
    for (int i = 0; i < k; ++i) ritz_vector += es.eigenvectors()(i, top) * basis[i];
    ritz_vector.normalize();
}

}  // namespace

TopEigenResult top_eigenpair(const SymMatrix& cin, double tol, int max_iter) {
    const MatrixXd& c = cin.mat();
    const int n = static_cast<int>(c.rows());
    TopEigenResult res;
    if (n == 1) {
        res.value = c(0, 0);
        res.vector = VectorXd::Ones(1);
        res.matvecs = 1;
        return res;
    }
    const double fro = c.norm();
    if (fro == 0.0) {
        res.value = 0.0;
        res.vector = VectorXd::Unit(n, 0);
        return res;
    }

    // deterministic start vector; re-randomized on restarts that stall
    std::mt19937_64 rng(0x5DEECE66DULL);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    VectorXd v = VectorXd::Ones(n);
    for (int i = 0; i < n; ++i) v(i) += 1e-3 * unif(rng);

    const int kmax = std::min(n, 40);
    double best_residual = std::numeric_limits<double>::infinity();
    int matvecs = 0;
    while (matvecs < max_iter) {
        double ritz;
        VectorXd u;
        lanczos_sweep(c, fro, v, kmax, ritz, u);
        matvecs += kmax;
        const double lambda = ritz - fro;
        const double residual = (c * u - lambda * u).norm();
        ++matvecs;
        if (residual < best_residual) {
            best_residual = residual;
            res.value = lambda;
            res.vector = u;
        }
        if (best_residual <= tol * fro) {
            res.residual = best_residual;
            res.matvecs = matvecs;
            return res;
        }
        v = u;
        if (residual >= best_residual)  // stalled; perturb the restart
            for (int i = 0; i < n; ++i) v(i) += 1e-6 * unif(rng);
    }
    throw ConvergenceError("top_eigenpair: no convergence within max_iter, best residual " +
                               std::to_string(best_residual),
                           best_residual);
}

MatrixXd psd_factor(const SymMatrix& a, double tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.mat());
    const VectorXd& ev = es.eigenvalues();
    if (ev.minCoeff() < -tol)
        throw NotPsdError("psd_factor: matrix is not PSD, lambda_min = " +
                          std::to_string(ev.minCoeff()));
    int r = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) > tol) ++r;
    MatrixXd u(a.dim(), std::max(r, 0));
    int col = 0;
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) > tol) u.col(col++) = es.eigenvectors().col(i) * std::sqrt(ev(i));
    return u;
}

SymMatrix kron(const SymMatrix& x, const SymMatrix& l) {
    const int d = x.dim(), q = l.dim();
    MatrixXd out(d * q, d * q);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out.block(i * q, j * q, q, q) = x(i, j) * l.mat();
    return SymMatrix(out);
}

void write_matrix_csv(const MatrixXd& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) f << ',';
            f << m(i, j);
        }
        f << '\n';
    }
}

MatrixXd read_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged matrix CSV: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty matrix CSV: " + path);
    MatrixXd m(rows.size(), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

}  // namespace bdml
