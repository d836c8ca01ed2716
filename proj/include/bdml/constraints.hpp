#pragma once

#include "bdml/core_linalg.hpp"

#include <map>
#include <tuple>
#include <utility>
#include <vector>

namespace bdml {

/// Points with integer class labels. gamma records the largest point norm
/// seen at load time (measured after any standardization).
struct LabeledDataset {
    std::vector<VectorXd> points;
    std::vector<int> labels;
    int d = 0;
    double gamma = 0.0;

    int size() const { return static_cast<int>(points.size()); }
    void update_gamma();
};

/// Per-dimension affine standardization fitted on a training split.
struct Standardizer {
    VectorXd mean;
    VectorXd scale;  // 1 / std, dims with zero variance get scale 1

    static Standardizer fit(const LabeledDataset& data);
    VectorXd apply(const VectorXd& x) const;
    LabeledDataset apply(const LabeledDataset& data) const;
};

using IndexPair = std::pair<int, int>;
using IndexTriplet = std::tuple<int, int, int>;

/// Neighbor structure and cached constraint matrices. S holds target-neighbor
/// pairs, I impostor pairs, T triplets sharing the anchor; X caches the
/// outer-product difference matrix for every pair in S and I, G is the mean
/// of the target-pair matrices.
struct ConstraintSet {
    std::vector<IndexPair> s;
    std::vector<IndexPair> i;
    std::vector<IndexTriplet> t;
    std::map<IndexPair, SymMatrix> x;
    SymMatrix g;
    int n = 0;  // |S|
    int d = 0;
    bool no_impostors = false;       // all-same-label input
    int dropped_duplicates = 0;      // impostor pairs with coincident points

    const SymMatrix& xij(int a, int b) const { return x.at({a, b}); }
};

/// (x_i - x_j)(x_i - x_j)^T; rank <= 1 PSD, trace equals the squared
/// Euclidean distance.
SymMatrix outer_difference(const VectorXd& xi, const VectorXd& xj);

/// k-nearest-neighbor structure under the Euclidean metric of the given
/// features, ties broken by smaller index. Throws for k >= N.
ConstraintSet build_neighborhoods(const LabeledDataset& data, int k);

/// Rebuilds the cached matrices of an existing index structure from
/// (possibly mapped) points; S/I/T are carried over unchanged.
ConstraintSet rebuild_with_points(const ConstraintSet& cs, const std::vector<VectorXd>& points);

/// G = (1/n) sum over S of X_ij.
SymMatrix objective_matrix(const ConstraintSet& cs);

/// max over the margin set of (mu - margin value at M); <= 0 means every
/// margin holds. mode false: pair constraints over I, true: triplets.
double max_margin_violation(const ConstraintSet& cs, const SymMatrix& m, bool triplet_mode,
                            double mu);

}  // namespace bdml
