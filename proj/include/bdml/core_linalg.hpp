#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace bdml {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double best_residual)
        : std::runtime_error(what), residual(best_residual) {}
    double residual;
};

class NotPsdError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense symmetric matrix. The underlying storage is kept exactly
/// symmetric: construction symmetrizes, element writes go through set().
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(int dim) : m_(MatrixXd::Zero(dim, dim)) {
        if (dim < 1) throw std::invalid_argument("SymMatrix: dim must be >= 1");
    }

    explicit SymMatrix(const MatrixXd& a) {
        if (a.rows() != a.cols() || a.rows() < 1)
            throw std::invalid_argument("SymMatrix: matrix must be square");
        if (!a.allFinite())
            throw std::invalid_argument("SymMatrix: non-finite entries");
        m_ = 0.5 * (a + a.transpose());
    }

    static SymMatrix identity(int dim) { return SymMatrix(MatrixXd::Identity(dim, dim)); }

    int dim() const { return static_cast<int>(m_.rows()); }
    const MatrixXd& mat() const { return m_; }

    double operator()(int i, int j) const { return m_(i, j); }

    void set(int i, int j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    double trace() const { return m_.trace(); }

    /// Frobenius inner product A .dot B = Tr(A B).
    double dot(const SymMatrix& other) const { return m_.cwiseProduct(other.m_).sum(); }

    double quad(const VectorXd& v) const { return v.dot(m_ * v); }

    SymMatrix operator+(const SymMatrix& o) const { return SymMatrix(m_ + o.m_); }
    SymMatrix operator-(const SymMatrix& o) const { return SymMatrix(m_ - o.m_); }
    SymMatrix operator*(double c) const { return SymMatrix(m_ * c); }

    SymMatrix block(int start, int size) const { return SymMatrix(MatrixXd(m_.block(start, start, size, size))); }

private:
    MatrixXd m_;
};

struct EigenSummary {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double kappa = std::numeric_limits<double>::infinity();
};

/// Full eigen-summary via a dense symmetric solve. kappa is +inf unless
/// lambda_min exceeds the scale-relative PSD tolerance.
EigenSummary eigen_summary(const SymMatrix& m, double tol_psd_rel = 1e-10);

double condition_number(const SymMatrix& m, double tol_psd_rel = 1e-10);

struct TopEigenResult {
    double value = 0.0;
    VectorXd vector;
    double residual = 0.0;
    int matvecs = 0;
};

/// Algebraically largest eigenpair of a (possibly indefinite) symmetric
/// matrix via restarted Lanczos on C + ||C||_F * I; the shift makes the
/// target eigenvalue the largest in magnitude. Residual criterion is
/// ||Cv - lambda v|| <= tol * ||C||_F.
TopEigenResult top_eigenpair(const SymMatrix& c, double tol = 1e-10, int max_iter = 20000);

/// Factor U with U U^T = A (Frobenius error <= tol * dim) for PSD A;
/// U has one column per eigenvalue above tol. Throws NotPsdError when
/// lambda_min(A) < -tol.
MatrixXd psd_factor(const SymMatrix& a, double tol = 1e-9);

/// Kronecker product X (x) L, column-stacking convention: for zeta = vec(Q)
/// stacked by columns of Q (q x d), zeta^T (X (x) L) zeta = Tr(Q^T L Q X).
SymMatrix kron(const SymMatrix& x, const SymMatrix& l);

/// Dense CSV (one row per line, full square matrix).
void write_matrix_csv(const MatrixXd& m, const std::string& path);
MatrixXd read_matrix_csv(const std::string& path);

}  // namespace bdml
