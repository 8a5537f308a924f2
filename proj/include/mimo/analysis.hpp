#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimo/data.hpp"
#include "mimo/model.hpp"
#include "mimo/train.hpp"

namespace mimo {

enum class DiversityMetric { disagreement, kl, cosine };
const char* diversity_metric_name(DiversityMetric m);
DiversityMetric diversity_metric_from_name(const std::string& name);

// Argmax with ties broken toward the lowest index.
std::size_t argmax_index(const double* p, std::size_t k);

// 1 if the argmax classes differ, else 0.
double disagreement(const double* p1, const double* p2, std::size_t k);

// sum p1 (log p1 - log p2) with probabilities clamped at 1e-12 inside the
// logs and 0 log 0 = 0.
double kl_divergence(const double* p1, const double* p2, std::size_t k);

// dot(p1, p2) / (|p1| |p2|).
double cosine_similarity(const double* p1, const double* p2, std::size_t k);

double diversity_value(DiversityMetric metric, const double* p1, const double* p2,
                       std::size_t k);

struct DiversityReport {
    DiversityMetric metric = DiversityMetric::disagreement;
    std::size_t heads = 0;
    // Symmetrized head-pair means; diagonal holds the metric's self value.
    std::vector<std::vector<double>> pair_matrix;
    // Mean over ordered head pairs and examples.
    double mean = 0.0;
};

// Pairwise diversity of the heads under tiled evaluation of the dataset.
DiversityReport pairwise_diversity(const Network& net, const Dataset& data,
                                   DiversityMetric metric);

struct InvarianceReport {
    DiversityMetric metric = DiversityMetric::disagreement;
    std::size_t resamples = 0;
    // Mean metric between head 1's predictions under one companion draw and
    // under `resamples` independent redraws.
    double value = 0.0;
};

InvarianceReport invariance(const Network& net, const Dataset& data,
                            DiversityMetric metric, std::size_t resamples, Rng& rng);

struct ConditionalVarianceConfig {
    std::size_t outer = 32; // fixings of the non-swept slots
    std::size_t inner = 0;  // samples per sweep; 0 = the full dataset in order
    bool exhaustive = false; // enumerate every combination of dataset rows

    void validate() const;
};

struct UnitConditionalVariance {
    std::size_t layer = 0;
    std::size_t index_in_layer = 0;
    std::vector<double> per_slot; // Var(a_i | other slots fixed), per slot
    std::size_t dominant_slot = 0;
    double dominance_share = 0.0; // max / sum, in [1/M, 1]; 0 when all zero
};

struct ConditionalVarianceReport {
    std::vector<UnitConditionalVariance> units;
};

ConditionalVarianceReport conditional_variances(const Network& net, const Dataset& data,
                                                const ConditionalVarianceConfig& config,
                                                Rng& rng);

struct BiasVarianceReport {
    std::size_t ensemble_size = 0;
    std::size_t replicates = 0;
    double error = 0.0;    // mean over test points of mean over replicates (f - y)^2
    double bias_sq = 0.0;  // mean over test points of (fbar - y)^2
    double variance = 0.0; // mean over test points of replicate variance of f
    // Leave-one-replicate-out jackknife standard errors.
    double error_se = 0.0;
    double bias_sq_se = 0.0;
    double variance_se = 0.0;
};

// predictions[r][i]: replicate r's prediction at test point i.
BiasVarianceReport decompose_bias_variance(
    const std::vector<std::vector<double>>& predictions,
    const std::vector<double>& targets, std::size_t ensemble_size);

struct MetricsReport {
    double accuracy = 0.0;
    double nll = 0.0;
    double ece = 0.0;
    std::size_t ece_bins = 15;
};

// Classification metrics of a probability table against the dataset labels.
MetricsReport metrics_from_probs(const Tensor& probs, const Dataset& data,
                                 std::size_t ece_bins = 15);

double mse_from_predictions(const Tensor& predictions, const Dataset& data);

// Fraction of weight values (biases excluded) with |w| > threshold.
double nonzero_weight_fraction(const Network& net, double threshold = 1e-4);

} // namespace mimo
