#include "bdml/evaluation.hpp"
#include "bdml/io.hpp"
#include "bdml/pseudometric.hpp"
#include "bdml/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
    CliError(int code, const std::string& what) : std::runtime_error(what), exit_code(code) {}
    int exit_code;
};

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path.string());
    out << j.dump(2) << '\n';
}

bdml::LabeledDataset load_checked(const bdml::RunConfig& cfg) {
    if (!fs::exists(cfg.dataset_path))
        throw CliError(2, "dataset file not found: " + cfg.dataset_path);
    return bdml::load_dataset(cfg.dataset_path, cfg.format);
}

bdml::TrainConfig to_train_config(const bdml::RunConfig& cfg) {
    bdml::TrainConfig t;
    t.triplet_mode = cfg.triplet_mode;
    t.k = cfg.k;
    t.mu = cfg.mu;
    t.distortion_cap = cfg.distortion_cap;
    t.r_bound = cfg.r_bound;
    t.rho = cfg.rho;
    t.delta = cfg.delta;
    t.mwu_rounds = cfg.mwu_rounds;
    t.bisect_tol = cfg.bisect_tol;
    t.workers = cfg.workers;
    return t;
}

json config_echo(const bdml::RunConfig& cfg) {
    return json{{"command", cfg.command},
                {"dataset", cfg.dataset_path},
                {"format", cfg.format == bdml::DataFormat::csv ? "csv" : "svmlight"},
                {"mode", cfg.triplet_mode ? "triplet" : "pair"},
                {"k", cfg.k},
                {"mu", cfg.mu},
                {"K", cfg.distortion_cap},
                {"R", cfg.r_bound},
                {"rho", cfg.rho},
                {"delta", cfg.delta},
                {"bisect_tol", cfg.bisect_tol},
                {"mwu_rounds", cfg.mwu_rounds},
                {"q", cfg.q},
                {"T_prime", cfg.t_prime},
                {"seed", cfg.seed},
                {"workers", cfg.workers},
                {"standardize", cfg.standardize}};
}

json report_json(const bdml::TrainReport& r) {
    return json{{"objective", r.objective},
                {"u0", r.u0},
                {"final_interval", r.final_interval},
                {"bisect_steps", r.bisect_steps},
                {"feasible_probes", r.feasible_probes},
                {"oracle_calls", r.oracle_calls},
                {"width_exceeded", r.width_exceeded},
                {"max_violation", r.max_violation},
                {"margin_violation", r.margin_violation},
                {"link_lower_residual", r.link_lower_residual},
                {"link_upper_residual", r.link_upper_residual},
                {"trace_m", r.trace_m},
                {"psd_shift", r.psd_shift},
                {"seeded_identity", r.seeded_identity},
                {"wall_time_s", r.wall_time_s}};
}

int cmd_train(const bdml::RunConfig& cfg) {
    bdml::LabeledDataset data = load_checked(cfg);
    if (cfg.standardize) data = bdml::Standardizer::fit(data).apply(data);
    const bdml::TrainConfig tc = to_train_config(cfg);
    bdml::ConstraintSet cs = bdml::build_neighborhoods(data, tc.k);
    bdml::TrainResult res;
    if (tc.triplet_mode ? cs.t.empty() : cs.i.empty()) {
        // every neighborhood is pure: no margin constraints to satisfy,
        // the identity metric is already optimal
        bdml::MetricModel model;
        model.m = bdml::SymMatrix::identity(data.d);
        model.eigen = bdml::eigen_summary(model.m);
        model.config = tc;
        res = std::move(model);
    } else {
        res = tc.triplet_mode ? bdml::train_tbdml(data, tc) : bdml::train_pbdml(data, tc);
    }
    fs::create_directories(cfg.out_dir);
    json j;
    j["config"] = config_echo(cfg);
    if (std::holds_alternative<bdml::GloballyInfeasible>(res)) {
        j["status"] = "infeasible";
        j["probes_tried"] = std::get<bdml::GloballyInfeasible>(res).probes_tried;
        write_json(j, fs::path(cfg.out_dir) / "report.json");
        std::cerr << "train: problem infeasible at the requested accuracy\n";
        return 1;
    }
    const bdml::MetricModel& model = std::get<bdml::MetricModel>(res);
    bdml::write_matrix_csv(model.m.mat(), (fs::path(cfg.out_dir) / "metric.csv").string());
    j["status"] = "ok";
    j["kappa"] = model.eigen.kappa;
    j["lambda_min"] = model.eigen.lambda_min;
    j["lambda_max"] = model.eigen.lambda_max;
    j["alpha"] = model.alpha;
    j["delta_achieved"] = model.report.max_violation;
    j["report"] = report_json(model.report);
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    std::cout << "objective " << model.objective << "  kappa " << model.eigen.kappa << '\n';
    return 0;
}

int cmd_eval(const bdml::RunConfig& cfg) {
    bdml::LabeledDataset data = load_checked(cfg);
    const bdml::TrainConfig tc = to_train_config(cfg);
    bdml::EvalReport rep = bdml::evaluate_splits(data, tc, cfg.splits, cfg.train_frac, cfg.seed,
                                                 cfg.standardize);
    fs::create_directories(cfg.out_dir);
    json j;
    j["config"] = config_echo(cfg);
    j["status"] = rep.splits_run > 0 ? "ok" : "infeasible";
    j["mean_error_pct"] = rep.mean_error;
    j["std_error_pct"] = rep.std_error;
    j["per_split_errors"] = rep.per_split_errors;
    j["mean_kappa"] = rep.mean_condition_number;
    j["splits_run"] = rep.splits_run;
    j["splits_failed"] = rep.splits_failed;
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    std::cout << "mean error " << rep.mean_error << "% +- " << rep.std_error << "%\n";
    return rep.splits_run > 0 ? 0 : 1;
}

int cmd_sweep(const bdml::RunConfig& cfg) {
    bdml::LabeledDataset data = load_checked(cfg);
    const bdml::TrainConfig tc = to_train_config(cfg);
    std::vector<double> caps = cfg.sweep_caps;
    if (caps.empty()) caps = {1e1, 1e2, 1e3, 1e4, 1e5};
    auto rows = bdml::sweep_distortion(data, tc, caps, cfg.splits, cfg.train_frac, cfg.seed);
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "sweep.csv");
    out << bdml::sweep_to_csv(rows);
    json j;
    j["config"] = config_echo(cfg);
    j["status"] = "ok";
    j["rows"] = rows.size();
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    std::cout << "wrote " << rows.size() << " sweep rows\n";
    return 0;
}

int cmd_pseudo(const bdml::RunConfig& cfg) {
    bdml::LabeledDataset data = load_checked(cfg);
    if (cfg.standardize) data = bdml::Standardizer::fit(data).apply(data);
    bdml::PseudoConfig pc;
    pc.train = to_train_config(cfg);
    pc.q = cfg.q;
    pc.t_prime = cfg.t_prime;
    pc.seed = cfg.seed;
    bdml::PseudoMetricModel model = bdml::alternate_optimize(data, pc);
    fs::create_directories(cfg.out_dir);
    bdml::write_matrix_csv(model.q, (fs::path(cfg.out_dir) / "q.csv").string());
    bdml::write_matrix_csv(model.lambda, (fs::path(cfg.out_dir) / "lambda.csv").string());
    json j;
    j["config"] = config_echo(cfg);
    j["status"] = "ok";
    j["objective"] = model.objective;
    j["nu"] = model.round_stats.nu;
    j["zeta"] = model.round_stats.zeta;
    j["ortho_residual"] = model.ortho_residual;
    j["gamma_achieved"] = model.gamma_achieved;
    j["outer_iters_run"] = model.outer_iters_run;
    j["stop_reason"] = model.stop_reason;
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    std::cout << "objective " << model.objective << "  nu " << model.round_stats.nu << '\n';
    return 0;
}

int cmd_verify_bounds(const bdml::RunConfig& cfg, long long trials, long long chi_trials) {
    bdml::TailBoundReport rep = bdml::verify_tail_bounds(trials, cfg.seed, chi_trials);
    fs::create_directories(cfg.out_dir);
    json cells = json::array();
    for (const auto& c : rep.cells)
        cells.push_back(json{{"name", c.name},
                             {"param", c.param},
                             {"empirical", c.empirical},
                             {"bound", c.bound},
                             {"std_error", c.std_error},
                             {"pass", c.pass}});
    json j;
    j["config"] = config_echo(cfg);
    j["status"] = rep.all_pass ? "ok" : "violated";
    j["cells"] = cells;
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    for (const auto& c : rep.cells)
        std::cout << (c.pass ? "pass " : "FAIL ") << c.name << " param=" << c.param
                  << " empirical=" << c.empirical << " bound=" << c.bound << '\n';
    return rep.all_pass ? 0 : 1;
}

int cmd_bound_calc(const bdml::RunConfig& cfg, double gamma, double dims, double n_samples,
                   double delta_prob) {
    bdml::BoundInputs b;
    b.distortion_cap = cfg.distortion_cap;
    b.trace_bound = cfg.r_bound > 0.0 ? cfg.r_bound : 10.0 * dims;
    b.gamma = gamma;
    b.d = dims;
    b.n = n_samples;
    b.delta_prob = delta_prob;
    const double beta = bdml::stability_beta(b.distortion_cap, b.trace_bound, gamma, dims);
    const double g1 = bdml::generalization_bound(b);
    const double g2 = bdml::generalization_bound_generic(b);
    fs::create_directories(cfg.out_dir);
    json j;
    j["config"] = config_echo(cfg);
    j["status"] = "ok";
    j["beta"] = beta;
    j["generalization_bound"] = g1;
    j["generalization_bound_generic"] = g2;
    write_json(j, fs::path(cfg.out_dir) / "report.json");
    std::cout << "beta " << beta << "  gen_bound " << g1 << "  gen_bound_generic " << g2 << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bounded-distortion Mahalanobis metric learning"};
    app.require_subcommand(1);
    app.set_config("--config");

    bdml::RunConfig cfg;
    std::string mode = "triplet";
    std::string format = "csv";
    std::string sweep_caps_arg;
    long long vb_trials = 200000;
    long long chi_trials = 0;
    double gamma = 1.0;
    double dims = 1.0;
    double n_samples = 1e12;
    double delta_prob = 1.0;

    auto add_common = [&](CLI::App* sub, bool needs_data) {
        if (needs_data) sub->add_option("dataset", cfg.dataset_path, "dataset file")->required();
        sub->add_option("--mode", mode, "pair|triplet")
            ->check(CLI::IsMember({"pair", "triplet"}));
        sub->add_option("--k", cfg.k, "neighbors per point");
        sub->add_option("--mu", cfg.mu, "margin");
        sub->add_option("--K", cfg.distortion_cap, "distortion cap");
        sub->add_option("--R", cfg.r_bound, "trace bound (0: 10d)");
        sub->add_option("--rho", cfg.rho, "width bound (0: 5R)");
        sub->add_option("--delta", cfg.delta, "feasibility accuracy");
        sub->add_option("--bisect-tol", cfg.bisect_tol, "bisection tolerance (0: 1% of U0)");
        sub->add_option("--rounds", cfg.mwu_rounds, "solver round budget (0: theorem schedule)");
        sub->add_option("--q", cfg.q, "mapping rows");
        sub->add_option("--T-prime", cfg.t_prime, "rounding samples");
        sub->add_option("--seed", cfg.seed, "RNG seed");
        sub->add_option("--workers", cfg.workers, "worker threads (0: hardware)");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--format", format, "csv|svmlight")
            ->check(CLI::IsMember({"csv", "svmlight"}));
        sub->add_flag_callback("--no-standardize", [&] { cfg.standardize = false; });
    };

    auto* train = app.add_subcommand("train", "learn a metric");
    add_common(train, true);
    auto* eval = app.add_subcommand("eval", "split-protocol kNN evaluation");
    add_common(eval, true);
    eval->add_option("--splits", cfg.splits, "number of random splits");
    eval->add_option("--train-frac", cfg.train_frac, "training fraction");
    auto* sweep = app.add_subcommand("sweep", "error curve over distortion caps");
    add_common(sweep, true);
    sweep->add_option("--splits", cfg.splits, "number of random splits");
    sweep->add_option("--train-frac", cfg.train_frac, "training fraction");
    // sweep reuses --K as a comma-separated list of caps
    sweep->get_option("--K")->type_name("LIST")->expected(1)->each([&](const std::string& s) {
        sweep_caps_arg = s;
    });
    auto* pseudo = app.add_subcommand("pseudo", "low-rank pseudometric");
    add_common(pseudo, true);
    auto* verify = app.add_subcommand("verify-bounds", "Monte Carlo tail-bound checks");
    add_common(verify, false);
    verify->add_option("--trials", vb_trials, "samples per cell");
    verify->add_option("--chi-trials", chi_trials, "chi-square samples (0: same as --trials)");
    auto* bound = app.add_subcommand("bound-calc", "closed-form bound calculators");
    add_common(bound, false);
    bound->add_option("--gamma", gamma, "data ball radius");
    bound->add_option("--d", dims, "dimension");
    bound->add_option("--n", n_samples, "sample count");
    bound->add_option("--delta-prob", delta_prob, "confidence parameter");

    CLI11_PARSE(app, argc, argv);
    cfg.triplet_mode = (mode == "triplet");
    cfg.format = format == "csv" ? bdml::DataFormat::csv : bdml::DataFormat::svmlight;
    if (!sweep_caps_arg.empty()) {
        std::stringstream ss(sweep_caps_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.sweep_caps.push_back(std::stod(tok));
    }

    auto fail = [&](int code, const std::string& what) {
        json err{{"status", "error"}, {"error", what}};
        if (!cfg.dataset_path.empty()) err["path"] = cfg.dataset_path;
        std::cerr << err.dump() << '\n';
        try {
            fs::create_directories(cfg.out_dir);
            write_json(err, fs::path(cfg.out_dir) / "error.json");
        } catch (...) {
        }
        return code;
    };

    try {
        if (train->parsed()) { cfg.command = "train"; return cmd_train(cfg); }
        if (eval->parsed()) { cfg.command = "eval"; return cmd_eval(cfg); }
        if (sweep->parsed()) { cfg.command = "sweep"; return cmd_sweep(cfg); }
        if (pseudo->parsed()) { cfg.command = "pseudo"; return cmd_pseudo(cfg); }
        if (verify->parsed()) {
            cfg.command = "verify-bounds";
            return cmd_verify_bounds(cfg, vb_trials, chi_trials);
        }
        cfg.command = "bound-calc";
        return cmd_bound_calc(cfg, gamma, dims, n_samples, delta_prob);
    } catch (const CliError& e) {
        return fail(e.exit_code, e.what());
    } catch (const bdml::ParseError& e) {
        return fail(3, e.what());
    } catch (const std::exception& e) {
        return fail(1, e.what());
    }
}
