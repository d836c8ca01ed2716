#pragma once

#include "bdml/constraints.hpp"
#include "bdml/mwu.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace bdml {

struct TrainConfig {
    bool triplet_mode = false;
    int k = 3;
    double mu = 1.0;
    double distortion_cap = 100.0;  // K
    double r_bound = 0.0;           // 0: default 10 d
    double delta = 0.05;            // additive feasibility error
    double rho = 0.0;               // 0: default 5 R
    long long mwu_rounds = 2000;    // 0: theorem-derived schedule
    double bisect_tol = 0.0;        // 0: default 1e-2 * U0
    double tau_alpha = -1.0;        // <0: compile default
    std::vector<double> probe_points;
    int workers = 0;  // 0: hardware concurrency

    double effective_r(int d) const { return r_bound > 0.0 ? r_bound : 10.0 * d; }
    double effective_rho(int d) const { return rho > 0.0 ? rho : 5.0 * effective_r(d); }
};

struct TrainReport {
    double objective = 0.0;
    double u0 = 0.0;
    double final_interval = 0.0;
    int bisect_steps = 0;
    int feasible_probes = 0;
    long long oracle_calls = 0;
    long long width_exceeded = 0;
    double max_violation = 0.0;     // of the final feasible solve
    double margin_violation = 0.0;  // measured on the returned metric
    double link_lower_residual = 0.0;
    double link_upper_residual = 0.0;
    double trace_m = 0.0;
    double psd_shift = 0.0;     // identity shift applied to restore strict PD
    double shrink_scale = 1.0;  // post-hoc margin-tightening scale (<= 1)
    bool seeded_identity = false;
    double wall_time_s = 0.0;
};

struct MetricModel {
    SymMatrix m;
    EigenSummary eigen;
    double alpha = 0.0;
    double objective = 0.0;
    TrainConfig config;
    TrainReport report;
};

struct GloballyInfeasible {
    int probes_tried = 0;
};

using TrainResult = std::variant<MetricModel, GloballyInfeasible>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// A known-feasible point used to seed the bisection interval.
struct FeasibleSeed {
    SymMatrix m;
    double alpha = 0.0;
    double objective = 0.0;
};

/// Largest c such that c*I is feasible for the compiled instance (margins,
/// trace budget of the full block, alpha floor); nullopt when no scaled
/// identity is feasible.
std::optional<double> feasible_identity_scale(const ConstraintSet& cs, const TrainConfig& cfg);

/// Bisection over the objective cap; each probe is one cold MWU feasibility
/// solve whose averaged iterate is rounded back onto the exact feasible set
/// (spectrum clipped to the condition cap, rescaled into the trace budget);
/// a probe counts as feasible when the rounded metric keeps every margin
/// within delta and fits the cap.
TrainResult bisect(const ConstraintSet& cs, const TrainConfig& cfg,
                   std::optional<Interval> interval = std::nullopt,
                   std::optional<FeasibleSeed> seed = std::nullopt, bool diagonal = false);

struct ProbeResult {
    Interval interval;
    std::optional<FeasibleSeed> seed;  // solution at the smallest feasible probe
    bool all_infeasible = false;
    int feasible_count = 0;
};

/// Solves one feasibility instance per probe point concurrently and shrinks
/// the bisection interval to [largest infeasible, smallest feasible].
ProbeResult parallel_probe(const ConstraintSet& cs, const TrainConfig& cfg);

TrainResult train_pbdml(const LabeledDataset& data, const TrainConfig& cfg);
TrainResult train_tbdml(const LabeledDataset& data, const TrainConfig& cfg);

struct DiagonalResult {
    VectorXd lambda;  // positive diagonal
    double objective = 0.0;
    TrainReport report;
};

/// BDML restricted to diagonal metrics; cs_mapped must be built from the
/// mapped (q-dimensional) points.
std::variant<DiagonalResult, GloballyInfeasible> solve_diagonal(const ConstraintSet& cs_mapped,
                                                                const TrainConfig& cfg);

}  // namespace bdml
