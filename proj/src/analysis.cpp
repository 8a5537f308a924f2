#include "mimo/analysis.hpp"

#include <cmath>

namespace mimo {

namespace {

constexpr double kProbFloor = 1e-12;

} // namespace

const char* diversity_metric_name(DiversityMetric m) {
    switch (m) {
        case DiversityMetric::disagreement: return "disagreement";
        case DiversityMetric::kl:           return "kl";
        case DiversityMetric::cosine:       return "cosine";
    }
    return "?";
}

DiversityMetric diversity_metric_from_name(const std::string& name) {
    if (name == "disagreement") return DiversityMetric::disagreement;
    if (name == "kl") return DiversityMetric::kl;
    if (name == "cosine") return DiversityMetric::cosine;
    throw ConfigError("unknown diversity metric '" + name + "'");
}

std::size_t argmax_index(const double* p, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i) {
        if (p[i] > p[best]) best = i;
    }
    return best;
}

double disagreement(const double* p1, const double* p2, std::size_t k) {
    return argmax_index(p1, k) != argmax_index(p2, k) ? 1.0 : 0.0;
}

double kl_divergence(const double* p1, const double* p2, std::size_t k) {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (p1[i] <= 0.0) continue; // 0 log 0 = 0
        const double a = std::max(p1[i], kProbFloor);
        const double b = std::max(p2[i], kProbFloor);
        total += p1[i] * (std::log(a) - std::log(b));
    }
    return total;
}

double cosine_similarity(const double* p1, const double* p2, std::size_t k) {
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        dot += p1[i] * p2[i];
        n1 += p1[i] * p1[i];
        n2 += p2[i] * p2[i];
    }
    if (n1 == 0.0 || n2 == 0.0) {
        throw NumericError("cosine_similarity of a zero vector");
    }
    return dot / (std::sqrt(n1) * std::sqrt(n2));
}

double diversity_value(DiversityMetric metric, const double* p1, const double* p2,
                       std::size_t k) {
    switch (metric) {
        case DiversityMetric::disagreement: return disagreement(p1, p2, k);
        case DiversityMetric::kl:           return kl_divergence(p1, p2, k);
        case DiversityMetric::cosine:       return cosine_similarity(p1, p2, k);
    }
    throw ConfigError("unknown diversity metric");
}

namespace {

double metric_self_value(DiversityMetric metric) {
    return metric == DiversityMetric::cosine ? 1.0 : 0.0;
}

void require_classification(const Network& net, const char* what) {
    if (net.config.task != Task::classification) {
        throw ConfigError(std::string(what) + " requires a classification network");
    }
}

} // namespace

DiversityReport pairwise_diversity(const Network& net, const Dataset& data,
                                   DiversityMetric metric) {
    require_classification(net, "pairwise_diversity");
    const std::size_t m_heads = net.config.ensemble_size;
    if (m_heads < 2) throw ConfigError("pairwise_diversity needs ensemble_size >= 2");

    const std::vector<Tensor> heads = forward_tiled(net, data.features);
    const std::size_t n = data.size();
    const std::size_t k = net.config.output_dim;

    // Directional means first; the report symmetrizes.
    std::vector<std::vector<double>> directional(m_heads, std::vector<double>(m_heads, 0.0));
    for (std::size_t i = 0; i < m_heads; ++i) {
        for (std::size_t j = 0; j < m_heads; ++j) {
            if (i == j) continue;
            double total = 0.0;
            for (std::size_t row = 0; row < n; ++row) {
                total += diversity_value(metric, heads[i].data() + row * k,
                                         heads[j].data() + row * k, k);
            }
            directional[i][j] = total / static_cast<double>(n);
        }
    }

    DiversityReport report;
    report.metric = metric;
    report.heads = m_heads;
    report.pair_matrix.assign(m_heads, std::vector<double>(m_heads, 0.0));
    double mean = 0.0;
    for (std::size_t i = 0; i < m_heads; ++i) {
        report.pair_matrix[i][i] = metric_self_value(metric);
        for (std::size_t j = 0; j < m_heads; ++j) {
            if (i == j) continue;
            report.pair_matrix[i][j] = 0.5 * (directional[i][j] + directional[j][i]);
            mean += directional[i][j];
        }
    }
    report.mean = mean / static_cast<double>(m_heads * (m_heads - 1));
    return report;
}

InvarianceReport invariance(const Network& net, const Dataset& data,
                            DiversityMetric metric, std::size_t resamples, Rng& rng) {
    require_classification(net, "invariance");
    const std::size_t slots = input_slots(net.config);
    if (slots < 2) throw ConfigError("invariance needs >= 2 input slots");
    if (resamples < 1) throw ConfigError("invariance needs >= 1 resamples");

    const std::size_t n = data.size();
    const std::size_t k = net.config.output_dim;

    auto draw_companions = [&]() {
        std::vector<Tensor> inputs(slots);
        inputs[0] = data.features;
        for (std::size_t m = 1; m < slots; ++m) {
            Tensor slot({n, data.input_dim()});
            for (std::size_t row = 0; row < n; ++row) {
                const std::size_t src = rng.index(n);
                for (std::size_t j = 0; j < data.input_dim(); ++j) {
                    slot.at(row, j) = data.features.at(src, j);
                }
            }
            inputs[m] = std::move(slot);
        }
        return inputs;
    };

    const Tensor reference = forward_mimo(net, draw_companions())[0];
    double total = 0.0;
    for (std::size_t s = 0; s < resamples; ++s) {
        const Tensor redrawn = forward_mimo(net, draw_companions())[0];
        for (std::size_t row = 0; row < n; ++row) {
            total += diversity_value(metric, reference.data() + row * k,
                                     redrawn.data() + row * k, k);
        }
    }

    InvarianceReport report;
    report.metric = metric;
    report.resamples = resamples;
    report.value = total / static_cast<double>(n * resamples);
    return report;
}

void ConditionalVarianceConfig::validate() const {
    if (exhaustive) return;
    if (outer < 2) throw ConfigError("conditional variance outer sample count must be >= 2");
    if (inner == 1) throw ConfigError("conditional variance inner sample count must be 0 (full) or >= 2");
}

namespace {

double population_variance(const std::vector<double>& values) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return var / n;
}

// Pre-activations of every hidden unit with slot `sweep_slot` set to the
// dataset rows in `sweep` and every other slot pinned to its row in `fixed`.
Tensor sweep_preactivations(const Network& net, const Dataset& data,
                            std::size_t sweep_slot,
                            const std::vector<std::size_t>& fixed,
                            const std::vector<std::size_t>& sweep) {
    const std::size_t slots = input_slots(net.config);
    const std::size_t d = data.input_dim();
    const std::size_t rows = sweep.size();
    std::vector<Tensor> inputs(slots);
    for (std::size_t m = 0; m < slots; ++m) {
        Tensor slot({rows, d});
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t src = m == sweep_slot ? sweep[r] : fixed[m];
            for (std::size_t j = 0; j < d; ++j) {
                slot.at(r, j) = data.features.at(src, j);
            }
        }
        inputs[m] = std::move(slot);
    }
    return record_preactivations(net, inputs).values;
}

} // namespace

ConditionalVarianceReport conditional_variances(const Network& net, const Dataset& data,
                                                const ConditionalVarianceConfig& config,
                                                Rng& rng) {
    const std::size_t slots = input_slots(net.config);
    if (slots < 2) throw ConfigError("conditional_variances needs >= 2 input slots");
    if (net.config.architecture != Architecture::mimo) {
        throw ConfigError("conditional_variances needs a mimo network");
    }
    config.validate();

    const std::size_t n = data.size();
    std::vector<std::size_t> all_rows(n);
    for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;

    if (config.exhaustive) {
        double combos = 1.0;
        for (std::size_t m = 1; m < slots; ++m) combos *= static_cast<double>(n);
        if (combos > 1e5) {
            throw ConfigError("exhaustive conditional variances would enumerate " +
                              std::to_string(static_cast<std::size_t>(combos)) +
                              " fixings; use sampled estimation");
        }
    }

    // Unit descriptors from a probe pass on one zero row.
    const ActivationRecord probe = record_preactivations(
        net, std::vector<Tensor>(slots, Tensor({1, data.input_dim()})));
    const std::size_t units = probe.layer_of.size();

    std::vector<std::vector<double>> value(units, std::vector<double>(slots, 0.0));
    for (std::size_t sweep_slot = 0; sweep_slot < slots; ++sweep_slot) {
        std::size_t fixings = 0;
        auto accumulate_fixing = [&](const std::vector<std::size_t>& fixed) {
            std::vector<std::size_t> sweep;
            if (config.exhaustive || config.inner == 0) {
                sweep = all_rows;
            } else {
                sweep.resize(config.inner);
                for (std::size_t t = 0; t < config.inner; ++t) sweep[t] = rng.index(n);
            }
            const Tensor pre = sweep_preactivations(net, data, sweep_slot, fixed, sweep);
            std::vector<double> column(sweep.size());
            for (std::size_t u = 0; u < units; ++u) {
                for (std::size_t r = 0; r < sweep.size(); ++r) column[r] = pre.at(r, u);
                value[u][sweep_slot] += population_variance(column);
            }
            ++fixings;
        };

        if (config.exhaustive) {
            // Odometer over every combination of rows for the other slots.
            std::vector<std::size_t> others;
            for (std::size_t m = 0; m < slots; ++m) {
                if (m != sweep_slot) others.push_back(m);
            }
            std::vector<std::size_t> digits(others.size(), 0);
            std::vector<std::size_t> fixed(slots, 0);
            while (true) {
                for (std::size_t i = 0; i < others.size(); ++i) fixed[others[i]] = digits[i];
                accumulate_fixing(fixed);
                std::size_t pos = 0;
                while (pos < digits.size() && ++digits[pos] == n) {
                    digits[pos] = 0;
                    ++pos;
                }
                if (pos == digits.size()) break;
            }
        } else {
            for (std::size_t o = 0; o < config.outer; ++o) {
                std::vector<std::size_t> fixed(slots, 0);
                for (std::size_t m = 0; m < slots; ++m) {
                    if (m != sweep_slot) fixed[m] = rng.index(n);
                }
                accumulate_fixing(fixed);
            }
        }
        for (std::size_t u = 0; u < units; ++u) {
            value[u][sweep_slot] /= static_cast<double>(fixings);
        }
    }

    ConditionalVarianceReport report;
    report.units.resize(units);
    for (std::size_t u = 0; u < units; ++u) {
        UnitConditionalVariance& unit = report.units[u];
        unit.layer = probe.layer_of[u];
        unit.index_in_layer = probe.index_in_layer[u];
        unit.per_slot = value[u];
        double sum = 0.0, best = -1.0;
        for (std::size_t m = 0; m < slots; ++m) {
            sum += value[u][m];
            if (value[u][m] > best) {
                best = value[u][m];
                unit.dominant_slot = m;
            }
        }
        unit.dominance_share = sum > 0.0 ? best / sum : 0.0;
    }
    return report;
}

BiasVarianceReport decompose_bias_variance(
    const std::vector<std::vector<double>>& predictions,
    const std::vector<double>& targets, std::size_t ensemble_size) {
    const std::size_t r_count = predictions.size();
    if (r_count < 2) throw ConfigError("bias-variance decomposition needs >= 2 replicates");
    const std::size_t t_count = targets.size();
    for (std::size_t r = 0; r < r_count; ++r) {
        if (predictions[r].size() != t_count) {
            throw ConfigError("replicate " + std::to_string(r) + " has " +
                              std::to_string(predictions[r].size()) +
                              " predictions for " + std::to_string(t_count) +
                              " test points");
        }
    }

    const double rr = static_cast<double>(r_count);
    const double tt = static_cast<double>(t_count);

    // Leaving out replicate r only needs these per-point totals.
    std::vector<double> sum_pred(t_count, 0.0), sum_sq_err(t_count, 0.0);
    for (std::size_t r = 0; r < r_count; ++r) {
        for (std::size_t i = 0; i < t_count; ++i) {
            const double p = predictions[r][i];
            sum_pred[i] += p;
            const double e = p - targets[i];
            sum_sq_err[i] += e * e;
        }
    }

    BiasVarianceReport report;
    report.ensemble_size = ensemble_size;
    report.replicates = r_count;
    for (std::size_t i = 0; i < t_count; ++i) {
        const double fbar = sum_pred[i] / rr;
        const double b = fbar - targets[i];
        report.error += sum_sq_err[i] / rr;
        report.bias_sq += b * b;
    }
    report.error /= tt;
    report.bias_sq /= tt;
    double variance = 0.0;
    for (std::size_t i = 0; i < t_count; ++i) {
        const double fbar = sum_pred[i] / rr;
        double v = 0.0;
        for (std::size_t r = 0; r < r_count; ++r) {
            const double d = predictions[r][i] - fbar;
            v += d * d;
        }
        variance += v / rr;
    }
    report.variance = variance / tt;

    // Jackknife standard errors over replicates.
    std::vector<double> jk_error(r_count), jk_bias(r_count), jk_var(r_count);
    for (std::size_t r = 0; r < r_count; ++r) {
        double err = 0.0, bias = 0.0;
        for (std::size_t i = 0; i < t_count; ++i) {
            const double p = predictions[r][i];
            const double e = p - targets[i];
            err += (sum_sq_err[i] - e * e) / (rr - 1.0);
            const double fbar = (sum_pred[i] - p) / (rr - 1.0);
            bias += (fbar - targets[i]) * (fbar - targets[i]);
        }
        jk_error[r] = err / tt;
        jk_bias[r] = bias / tt;
        jk_var[r] = jk_error[r] - jk_bias[r];
    }
    auto jackknife_se = [&](const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= rr;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        return std::sqrt((rr - 1.0) / rr * ss);
    };
    report.error_se = jackknife_se(jk_error);
    report.bias_sq_se = jackknife_se(jk_bias);
    report.variance_se = jackknife_se(jk_var);
    return report;
}

MetricsReport metrics_from_probs(const Tensor& probs, const Dataset& data,
                                 std::size_t ece_bins) {
    if (data.task != Task::classification) {
        throw ConfigError("metrics_from_probs requires classification data");
    }
    if (ece_bins < 1) throw ConfigError("ece bin count must be >= 1");
    const std::size_t n = data.size();
    const std::size_t k = data.label_dim();
    if (probs.rank() != 2 || probs.rows() != n || probs.cols() != k) {
        throw ConfigError("probability table shape " + probs.shape_str() +
                          " does not match the dataset");
    }

    std::vector<double> bin_conf(ece_bins, 0.0), bin_acc(ece_bins, 0.0);
    std::vector<std::size_t> bin_count(ece_bins, 0);
    double correct = 0.0, nll = 0.0;
    for (std::size_t row = 0; row < n; ++row) {
        const double* p = probs.data() + row * k;
        const std::size_t pred = argmax_index(p, k);
        const std::size_t truth = data.label_class(row);
        const double hit = pred == truth ? 1.0 : 0.0;
        correct += hit;
        nll += -std::log(std::max(p[truth], kProbFloor));

        const double conf = p[pred];
        std::size_t bin = static_cast<std::size_t>(conf * static_cast<double>(ece_bins));
        if (bin >= ece_bins) bin = ece_bins - 1;
        bin_conf[bin] += conf;
        bin_acc[bin] += hit;
        ++bin_count[bin];
    }

    MetricsReport report;
    report.ece_bins = ece_bins;
    report.accuracy = correct / static_cast<double>(n);
    report.nll = nll / static_cast<double>(n);
    for (std::size_t b = 0; b < ece_bins; ++b) {
        if (bin_count[b] == 0) continue;
        const double w = static_cast<double>(bin_count[b]) / static_cast<double>(n);
        const double gap = bin_acc[b] / static_cast<double>(bin_count[b]) -
                           bin_conf[b] / static_cast<double>(bin_count[b]);
        report.ece += w * std::fabs(gap);
    }
    return report;
}

double mse_from_predictions(const Tensor& predictions, const Dataset& data) {
    if (!predictions.same_shape(data.labels)) {
        throw ConfigError("prediction shape " + predictions.shape_str() +
                          " does not match labels " + data.labels.shape_str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - data.labels[i];
        total += d * d;
    }
    return total / static_cast<double>(predictions.size());
}

double nonzero_weight_fraction(const Network& net, double threshold) {
    std::size_t total = 0, nonzero = 0;
    for (const auto& p : net.parameters) {
        if (!p.name.ends_with(".weight")) continue;
        total += p.value.size();
        for (double v : p.value.values()) {
            if (std::fabs(v) > threshold) ++nonzero;
        }
    }
    if (total == 0) throw ConfigError("network has no weight parameters");
    return static_cast<double>(nonzero) / static_cast<double>(total);
}

} // namespace mimo
