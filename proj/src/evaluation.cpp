#include "bdml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

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

double mahalanobis_sq(const SymMatrix& m, const VectorXd& a, const VectorXd& b) {
    const VectorXd diff = a - b;
    return diff.dot(m.mat() * diff);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    return {mean, std::sqrt(var)};
}

}  // namespace

int knn_predict(const SymMatrix& m, const LabeledDataset& train, const VectorXd& x, int k) {
    const int n = train.size();
    if (n == 0) throw std::invalid_argument("knn_predict: empty training set");
    k = std::min(k, n);
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i) dist[i] = {mahalanobis_sq(m, train.points[i], x), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    // vote; ties broken by smaller summed distance, then smaller label
    std::map<int, std::pair<int, double>> votes;  // label -> (count, sum dist)
    for (int i = 0; i < k; ++i) {
        auto& v = votes[train.labels[dist[i].second]];
        ++v.first;
        v.second += dist[i].first;
    }
    int best_label = 0;
    int best_count = -1;
    double best_sum = 0.0;
    for (const auto& [label, v] : votes) {
        if (v.first > best_count || (v.first == best_count && v.second < best_sum)) {
            best_label = label;
            best_count = v.first;
            best_sum = v.second;
        }
    }
    return best_label;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double train_frac,
                                                            std::uint64_t seed, int split_id) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = keyed_rng(seed, static_cast<std::uint64_t>(split_id));
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n_train = std::max(1, static_cast<int>(std::lround(train_frac * n)));
    std::vector<int> tr(idx.begin(), idx.begin() + n_train);
    std::vector<int> te(idx.begin() + n_train, idx.end());
    return {tr, te};
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<int>& idx) {
    LabeledDataset out;
    out.d = data.d;
    out.points.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (int i : idx) {
        out.points.push_back(data.points[i]);
        out.labels.push_back(data.labels[i]);
    }
    out.update_gamma();
    return out;
}

EvalReport evaluate_splits(const LabeledDataset& data, const TrainConfig& cfg, int n_splits,
                           double train_frac, std::uint64_t seed, bool standardize) {
    EvalReport report;
    report.config = cfg;
    std::vector<double> kappas;
    for (int s = 0; s < n_splits; ++s) {
        auto [tr_idx, te_idx] = split_indices(data.size(), train_frac, seed, s);
        LabeledDataset train = subset(data, tr_idx);
        LabeledDataset test = subset(data, te_idx);
        if (standardize) {
            Standardizer st = Standardizer::fit(train);
            train = st.apply(train);
            test = st.apply(test);
        }
        MetricModel model;
        ConstraintSet cs = build_neighborhoods(train, cfg.k);
        const bool vacuous = cfg.triplet_mode ? cs.t.empty() : cs.i.empty();
        if (vacuous) {
            // every neighborhood is pure: no margin constraints, Euclidean
            // distances already separate the classes
            model.m = SymMatrix::identity(train.d);
            model.eigen = eigen_summary(model.m);
        } else {
            TrainResult res =
                cfg.triplet_mode ? train_tbdml(train, cfg) : train_pbdml(train, cfg);
            if (std::holds_alternative<GloballyInfeasible>(res)) {
                // hard margins can be jointly unsatisfiable on real splits;
                // score the split with the untrained (identity) metric
                ++report.splits_failed;
                model.m = SymMatrix::identity(train.d);
                model.eigen = eigen_summary(model.m);
            } else {
                model = std::get<MetricModel>(res);
            }
        }
        int wrong = 0;
        for (int i = 0; i < test.size(); ++i)
            if (knn_predict(model.m, train, test.points[i], cfg.k) != test.labels[i]) ++wrong;
        const double err = test.size() > 0 ? 100.0 * wrong / test.size() : 0.0;
        report.per_split_errors.push_back(err);
        kappas.push_back(model.eigen.kappa);
        ++report.splits_run;
    }
    auto [m, sd] = mean_std(report.per_split_errors);
    report.mean_error = m;
    report.std_error = sd;
    if (!kappas.empty())
        report.mean_condition_number =
            std::accumulate(kappas.begin(), kappas.end(), 0.0) / kappas.size();
    return report;
}

std::vector<SweepRow> sweep_distortion(const LabeledDataset& data, const TrainConfig& cfg,
                                       const std::vector<double>& k_values, int n_splits,
                                       double train_frac, std::uint64_t seed) {
    std::vector<SweepRow> rows;
    rows.reserve(k_values.size());
    for (double cap : k_values) {
        TrainConfig c = cfg;
        c.distortion_cap = cap;
        EvalReport rep = evaluate_splits(data, c, n_splits, train_frac, seed);
        SweepRow row;
        row.distortion_cap = cap;
        row.mean_err_pct = rep.mean_error;
        row.std_err_pct = rep.std_error;
        row.mean_kappa = rep.mean_condition_number;
        row.ln_kappa_achieved = rep.mean_condition_number > 0.0
                                    ? std::log(rep.mean_condition_number)
                                    : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "K_cap,ln_kappa_achieved,mean_err_pct,std_err_pct,mean_kappa\n";
    for (const auto& r : rows)
        ss << r.distortion_cap << ',' << r.ln_kappa_achieved << ',' << r.mean_err_pct << ','
           << r.std_err_pct << ',' << r.mean_kappa << '\n';
    return ss.str();
}

std::pair<double, double> empirical_distortion(
    const SymMatrix& m, const std::vector<std::pair<VectorXd, VectorXd>>& pairs) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& [a, b] : pairs) {
        const double de = (a - b).squaredNorm();
        if (de <= 0.0) continue;
        const double r = mahalanobis_sq(m, a, b) / de;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    if (!std::isfinite(lo)) lo = 0.0;
    return {lo, hi};
}

double stability_beta(double distortion_cap, double trace_bound, double gamma, double d) {
    return 4.0 * (distortion_cap + 1.0) * trace_bound * gamma * gamma / d;
}

double generalization_bound(const BoundInputs& b) {
    const double k = b.distortion_cap;
    const double lead = 2.0 * b.trace_bound * b.gamma * b.gamma / b.d;
    return lead * std::sqrt((2.0 * k / b.delta_prob) * (k / b.n + 6.0 * k + 6.0));
}

double generalization_bound_generic(const BoundInputs& b) {
    const double k = b.distortion_cap;
    const double r = b.trace_bound;
    const double g = b.gamma;
    const double beta =
        b.beta > 0.0 ? b.beta : stability_beta(k, r, g, b.d);
    return 2.0 * g *
           std::sqrt(k * r / (b.d * b.delta_prob) *
                     (2.0 * k * r * g * g / (b.n * b.d) + 3.0 * beta));
}

StabilityProbeResult stability_probe(const LabeledDataset& data, const TrainConfig& cfg,
                                     int trials, std::uint64_t seed) {
    StabilityProbeResult out;
    const int n_total = data.size();
    // hold back a replacement pool and a probe set; train on the rest
    auto [tr_idx, rest] = split_indices(n_total, 0.6, seed, 9001);
    const int half = static_cast<int>(rest.size()) / 2;
    std::vector<int> pool(rest.begin(), rest.begin() + half);
    std::vector<int> probe(rest.begin() + half, rest.end());
    if (pool.empty() || probe.empty() || tr_idx.size() < 2)
        throw std::invalid_argument("stability_probe: dataset too small");

    LabeledDataset train = subset(data, tr_idx);
    Standardizer st = Standardizer::fit(train);
    train = st.apply(train);
    LabeledDataset probe_set = st.apply(subset(data, probe));

    auto fit = [&](const LabeledDataset& ds) -> std::optional<MetricModel> {
        ConstraintSet cs = build_neighborhoods(ds, cfg.k);
        if (cfg.triplet_mode ? cs.t.empty() : cs.i.empty()) {
            MetricModel model;
            model.m = SymMatrix::identity(ds.d);
            model.eigen = eigen_summary(model.m);
            return model;
        }
        TrainResult res = cfg.triplet_mode ? train_tbdml(ds, cfg) : train_pbdml(ds, cfg);
        if (std::holds_alternative<GloballyInfeasible>(res)) return std::nullopt;
        return std::get<MetricModel>(res);
    };

    auto base = fit(train);
    if (!base) throw std::runtime_error("stability_probe: base training infeasible");

    // per-pair loss surrogate: normalized squared distance under the metric
    auto losses = [&](const MetricModel& model) {
        std::vector<double> v;
        for (int i = 0; i + 1 < probe_set.size(); i += 2)
            v.push_back(mahalanobis_sq(model.m, probe_set.points[i], probe_set.points[i + 1]) /
                        data.d);
        return v;
    };
    const std::vector<double> base_losses = losses(*base);

    auto rng = keyed_rng(seed, 77);
    out.beta = stability_beta(cfg.distortion_cap, cfg.effective_r(data.d),
                              std::max(train.gamma, 1.0), data.d);
    for (int t = 0; t < trials; ++t) {
        const int swap_at = static_cast<int>(rng() % train.size());
        const int pool_at = static_cast<int>(rng() % pool.size());
        LabeledDataset perturbed = train;
        perturbed.points[swap_at] = st.apply(data.points[pool[pool_at]]);
        perturbed.labels[swap_at] = data.labels[pool[pool_at]];
        perturbed.update_gamma();
        auto alt = fit(perturbed);
        if (!alt) continue;
        const std::vector<double> alt_losses = losses(*alt);
        for (size_t i = 0; i < base_losses.size(); ++i)
            out.max_loss_diff =
                std::max(out.max_loss_diff, std::abs(alt_losses[i] - base_losses[i]));
        ++out.trials_run;
    }
    out.within_beta = out.max_loss_diff <= out.beta;
    return out;
}

}  // namespace bdml
