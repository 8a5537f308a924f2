#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mimo/common.hpp"
#include "mimo/model.hpp"
#include "mimo/tensor.hpp"

namespace mimo {

enum class Split { train, test };
const char* split_name(Split s);

struct Dataset {
    Task task = Task::classification;
    Split split = Split::train;
    Tensor features; // N x input_dim
    Tensor labels;   // N x classes (one-hot) or N x 1 (regression)

    std::size_t size() const { return features.rows(); }
    std::size_t input_dim() const { return features.cols(); }
    std::size_t label_dim() const { return labels.cols(); }
    // Class index of a one-hot label row.
    std::size_t label_class(std::size_t row) const;
    void validate() const;
};

// y = x + 0.3 sin(2pi(x+e)) + 0.3 sin(4pi(x+e)) + e with e ~ Normal(0, noise_sd)
// and x uniform on [x_lo, x_hi).
Dataset gen_noisy_regression(std::size_t n, std::uint64_t seed, double x_lo,
                             double x_hi, double noise_sd, Split split);

// Balanced Gaussian clusters (unit variance) at deterministic centers:
// evenly spaced on a line for input_dim 1, on a circle of radius `separation`
// in the first two coordinates otherwise.
Dataset gen_blobs(std::size_t n, std::size_t classes, std::size_t input_dim,
                  double separation, std::uint64_t seed, Split split);

struct CsvSchema {
    std::vector<std::string> feature_columns;
    std::string label_column;
    std::size_t classes = 0; // 0 for regression
};

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema,
                         Task task, Split split);
void save_csv_dataset(const std::filesystem::path& path, const Dataset& data,
                      const CsvSchema& schema);

struct SamplingConfig {
    std::size_t batch_size = 32;
    std::size_t ensemble_size = 1; // M
    double input_repetition_probability = 0.0; // rho
    std::size_t batch_repetitions = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MimoBatch {
    std::vector<Tensor> features; // M of rows x input_dim
    std::vector<Tensor> labels;   // M of rows x label_dim
    std::vector<std::vector<std::size_t>> indices; // dataset row per slot per row

    std::size_t slots() const { return features.size(); }
    std::size_t rows() const { return features.empty() ? 0 : features[0].rows(); }
};

// Slot 1 draws batch_size indices uniformly with replacement; each later slot
// copies slot 1's (x, y) with probability rho, else draws independently. The
// assembled rows are then each repeated batch_repetitions times, grouped
// contiguously.
MimoBatch sample_mimo_batch(const Dataset& data, const SamplingConfig& config,
                            Rng& rng);

} // namespace mimo
