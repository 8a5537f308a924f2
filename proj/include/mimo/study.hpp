#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimo/analysis.hpp"
#include "mimo/data.hpp"
#include "mimo/landscape.hpp"
#include "mimo/model.hpp"
#include "mimo/train.hpp"

namespace mimo {

enum class DataKind { regression, blobs, csv };
const char* data_kind_name(DataKind k);

// The "data" config section: which dataset to build and how.
struct DataSpec {
    DataKind kind = DataKind::blobs;
    std::uint64_t seed = 1;
    std::size_t train_n = 256;
    std::size_t test_n = 1024;
    // regression
    double noise_sd = 0.02;
    double train_lo = 0.0;
    double train_hi = 0.5;
    double test_lo = -0.2;
    double test_hi = 0.7;
    // blobs
    std::size_t classes = 4;
    std::size_t input_dim = 2;
    double separation = 3.0;
    // csv
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    CsvSchema schema;

    Task task() const;
    // Both are known without materializing the data.
    std::size_t feature_dim() const;
    std::size_t label_dim() const;
    void validate() const;
};

// Train set for a derived seed; `stream` 0 is the canonical train set.
Dataset make_train_dataset(const DataSpec& spec, std::uint64_t stream);
Dataset make_test_dataset(const DataSpec& spec);

// The "analysis" config section: knobs for the report commands.
struct AnalysisSpec {
    std::uint64_t seed = 1;
    std::size_t invariance_resamples = 8;
    ConditionalVarianceConfig condvar;
    std::size_t ece_bins = 15;
    double sparsity_threshold = 1e-4;
    std::size_t landscape_resolution = 25;
    double landscape_margin = 0.2;
    std::size_t landscape_eval_limit = 1000;
    std::size_t trajectory_rows = 200; // dataset rows snapshotted per head

    void validate() const;
};

struct StudyConfig {
    DataSpec data;
    NetworkConfig network;
    SamplingConfig sampling; // ensemble_size filled from the network section
    OptimizerConfig optimizer;
    AnalysisSpec analysis;
    std::filesystem::path output_dir = "out";
    std::size_t workers = 1;
    bool verbose = false; // flag-only, never part of the config document

    void validate() const;
};

// Parse and validate a config document; unknown keys are rejected with their
// field path. When optimizer.schedule is absent the rate drops to 10% at half
// the run and 1% at three quarters (an explicit empty list keeps it flat).
StudyConfig parse_study_config(const nlohmann::json& document);
StudyConfig load_study_config(const std::filesystem::path& path);

// Canonical document with every field materialized; equal configs serialize
// identically. output_dir and workers are carried but excluded from the hash.
nlohmann::json study_config_to_json(const StudyConfig& config);
std::string study_config_hash(const StudyConfig& config);

// Rederive data/init/sampling/analysis seeds from one master seed.
void apply_seed_override(StudyConfig& config, std::uint64_t seed);

// Paths of everything a command produced, manifest included.
struct CommandOutcome {
    bool skipped = false; // a matching manifest already covered this run
    std::vector<std::filesystem::path> files;
};

CommandOutcome run_train(const StudyConfig& config);

// what: diversity | invariance | separation | metrics | sparsity.
CommandOutcome run_analyze(const StudyConfig& config, const std::string& what,
                           const std::filesystem::path& checkpoint_path);

// axis: M | rho | batch_repetitions | l1 | l2. One trained cell per
// (value, replicate); finished cells are reused on re-run.
CommandOutcome run_sweep(const StudyConfig& config, const std::string& axis,
                         const std::vector<double>& values, std::size_t replicates);

CommandOutcome run_bias_variance(const StudyConfig& config,
                                 const std::vector<std::size_t>& m_list,
                                 std::size_t replicates);

CommandOutcome run_landscape(const StudyConfig& config,
                             const std::filesystem::path& checkpoint_path,
                             std::size_t resolution, double margin);

} // namespace mimo
