#include "bdml/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace bdml {

void LabeledDataset::update_gamma() {
    gamma = 0.0;
    for (const auto& p : points) gamma = std::max(gamma, p.norm());
}

Standardizer Standardizer::fit(const LabeledDataset& data) {
    const int d = data.d;
    const int n = data.size();
    Standardizer st;
    st.mean = VectorXd::Zero(d);
    st.scale = VectorXd::Ones(d);
    if (n == 0) return st;
    for (const auto& p : data.points) st.mean += p;
    st.mean /= n;
    VectorXd var = VectorXd::Zero(d);
    for (const auto& p : data.points) var += (p - st.mean).cwiseAbs2();
    var /= n;
    for (int j = 0; j < d; ++j) st.scale(j) = var(j) > 0 ? 1.0 / std::sqrt(var(j)) : 1.0;
    return st;
}

VectorXd Standardizer::apply(const VectorXd& x) const {
    return (x - mean).cwiseProduct(scale);
}

LabeledDataset Standardizer::apply(const LabeledDataset& data) const {
    LabeledDataset out;
    out.labels = data.labels;
    out.d = data.d;
    out.points.reserve(data.points.size());
    for (const auto& p : data.points) out.points.push_back(apply(p));
    out.update_gamma();
    return out;
}

SymMatrix outer_difference(const VectorXd& xi, const VectorXd& xj) {
    if (xi.size() != xj.size())
        throw std::invalid_argument("outer_difference: dimension mismatch");
    const VectorXd diff = xi - xj;
    return SymMatrix(MatrixXd(diff * diff.transpose()));
}

ConstraintSet build_neighborhoods(const LabeledDataset& data, int k) {
    const int n_pts = data.size();
    if (n_pts < 2) throw std::invalid_argument("build_neighborhoods: need at least 2 points");
    if (k < 1 || k >= n_pts) throw std::invalid_argument("build_neighborhoods: need 1 <= k < N");

    ConstraintSet cs;
    cs.d = data.d;
    std::set<int> label_set(data.labels.begin(), data.labels.end());

    for (int i = 0; i < n_pts; ++i) {
        // exact search; ties broken by smaller index via the pair ordering
        std::vector<std::pair<double, int>> dist;
        dist.reserve(n_pts - 1);
        for (int j = 0; j < n_pts; ++j) {
            if (j == i) continue;
            dist.emplace_back((data.points[i] - data.points[j]).squaredNorm(), j);
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int t = 0; t < k; ++t) {
            const int j = dist[t].second;
            if (data.labels[i] == data.labels[j]) {
                cs.s.emplace_back(i, j);
            } else {
                if (dist[t].first == 0.0) {
                    // coincident points with different labels make the margin
                    // constraint 0 >= mu unsatisfiable; drop with a counter
                    ++cs.dropped_duplicates;
                    continue;
                }
                cs.i.emplace_back(i, j);
            }
        }
    }

    for (const auto& [i, j] : cs.s)
        for (const auto& [i2, q] : cs.i)
            if (i2 == i) cs.t.emplace_back(i, j, q);

    for (const auto& p : cs.s)
        cs.x.emplace(p, outer_difference(data.points[p.first], data.points[p.second]));
    for (const auto& p : cs.i)
        cs.x.emplace(p, outer_difference(data.points[p.first], data.points[p.second]));

    cs.n = static_cast<int>(cs.s.size());
    cs.no_impostors = cs.i.empty();
    if (!cs.s.empty()) cs.g = objective_matrix(cs);
    return cs;
}

ConstraintSet rebuild_with_points(const ConstraintSet& cs, const std::vector<VectorXd>& points) {
    ConstraintSet out;
    out.s = cs.s;
    out.i = cs.i;
    out.t = cs.t;
    out.n = cs.n;
    out.no_impostors = cs.no_impostors;
    out.dropped_duplicates = cs.dropped_duplicates;
    out.d = points.empty() ? 0 : static_cast<int>(points.front().size());
    for (const auto& [p, unused] : cs.x)
        out.x.emplace(p, outer_difference(points[p.first], points[p.second]));
    if (!out.s.empty()) out.g = objective_matrix(out);
    return out;
}

SymMatrix objective_matrix(const ConstraintSet& cs) {
    if (cs.s.empty()) throw std::invalid_argument("objective_matrix: S is empty");
    SymMatrix g(cs.d);
    for (const auto& p : cs.s) g = g + cs.x.at(p);
    return g * (1.0 / static_cast<double>(cs.s.size()));
}

double max_margin_violation(const ConstraintSet& cs, const SymMatrix& m, bool triplet_mode,
                            double mu) {
    double worst = -std::numeric_limits<double>::infinity();
    if (triplet_mode) {
        for (const auto& [i, j, q] : cs.t)
            worst = std::max(worst, mu - (m.dot(cs.xij(i, q)) - m.dot(cs.xij(i, j))));
    } else {
        for (const auto& p : cs.i) worst = std::max(worst, mu - m.dot(cs.x.at(p)));
    }
    return worst;
}

}  // namespace bdml
