#pragma once

#include "bdml/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bdml {

int knn_predict(const SymMatrix& m, const LabeledDataset& train, const VectorXd& x, int k);

struct EvalReport {
    double mean_error = 0.0;  // percent
    double std_error = 0.0;   // percent
    std::vector<double> per_split_errors;
    double mean_condition_number = 0.0;
    int splits_run = 0;
    int splits_failed = 0;
    TrainConfig config;
};

/// 70/30-style split protocol: per split, standardize on the training part,
/// build constraints, train, report kNN test error under the learned metric.
EvalReport evaluate_splits(const LabeledDataset& data, const TrainConfig& cfg, int n_splits,
                           double train_frac, std::uint64_t seed, bool standardize = true);

struct SweepRow {
    double distortion_cap = 0.0;
    double ln_kappa_achieved = 0.0;
    double mean_err_pct = 0.0;
    double std_err_pct = 0.0;
    double mean_kappa = 0.0;
};

std::vector<SweepRow> sweep_distortion(const LabeledDataset& data, const TrainConfig& cfg,
                                       const std::vector<double>& k_values, int n_splits,
                                       double train_frac, std::uint64_t seed);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// min/max over sampled pairs of d_M / d_I; both bracketed by the extreme
/// eigenvalues, their ratio by kappa(M).
std::pair<double, double> empirical_distortion(const SymMatrix& m,
                                               const std::vector<std::pair<VectorXd, VectorXd>>& pairs);

struct BoundInputs {
    double distortion_cap = 1.0;  // K
    double trace_bound = 1.0;     // R
    double gamma = 1.0;           // ball radius
    double d = 1.0;
    double n = 1.0;
    double delta_prob = 0.05;
    double beta = 0.0;  // stability constant; <= 0 selects the BDML value
};

double stability_beta(double distortion_cap, double trace_bound, double gamma, double d);

/// Generalization gap: the BDML-specific closed form.
double generalization_bound(const BoundInputs& b);

/// Generic-stability form 2*Gamma*sqrt(KR/(d*delta) * (2KR Gamma^2/(nd) + 3 beta)).
double generalization_bound_generic(const BoundInputs& b);

struct StabilityProbeResult {
    double max_loss_diff = 0.0;
    double beta = 0.0;
    int trials_run = 0;
    bool within_beta = true;
};

/// Replace-one stability probe: retrains with one training sample replaced
/// by a pool draw and measures the largest loss change over evaluation
/// pairs.
StabilityProbeResult stability_probe(const LabeledDataset& data, const TrainConfig& cfg,
                                     int trials, std::uint64_t seed);

/// Deterministic shuffled train/test split of [0, n).
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double train_frac,
                                                            std::uint64_t seed, int split_id);

LabeledDataset subset(const LabeledDataset& data, const std::vector<int>& idx);

}  // namespace bdml
