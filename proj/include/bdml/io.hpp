#pragma once

#include "bdml/constraints.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bdml {

enum class DataFormat { csv, svmlight };

struct ParseError : std::runtime_error {
    ParseError(const std::string& path, int line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
          path(path),
          line(line) {}
    std::string path;
    int line = 0;
};

/// CSV: integer label first, then real features. svmlight: "label idx:val ..."
/// with 1-based indices, densified to the largest index seen.
LabeledDataset load_dataset(const std::string& path, DataFormat format = DataFormat::csv);

void save_dataset_csv(const LabeledDataset& data, const std::string& path);

struct RunConfig {
    std::string command;
    std::string dataset_path;
    DataFormat format = DataFormat::csv;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool standardize = true;

    bool triplet_mode = true;
    int k = 3;
    double mu = 1.0;
    double distortion_cap = 100.0;
    double r_bound = 0.0;
    double rho = 0.0;
    double delta = 0.05;
    double bisect_tol = 0.0;
    long long mwu_rounds = 2000;
    int q = 2;
    int t_prime = 100;
    int workers = 0;
    int splits = 10;
    double train_frac = 0.7;
    std::vector<double> sweep_caps;
};

}  // namespace bdml
