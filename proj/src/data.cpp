#include "mimo/data.hpp"

#include <cmath>
#include <numbers>

#include "mimo/io.hpp"

namespace mimo {

const char* split_name(Split s) {
    return s == Split::train ? "train" : "test";
}

std::size_t Dataset::label_class(std::size_t row) const {
    if (task != Task::classification) {
        throw ConfigError("label_class on a regression dataset");
    }
    for (std::size_t k = 0; k < labels.cols(); ++k) {
        if (labels.at(row, k) == 1.0) return k;
    }
    throw ConfigError("label row " + std::to_string(row) + " is not one-hot");
}

void Dataset::validate() const {
    if (features.rank() != 2 || labels.rank() != 2) {
        throw ConfigError("dataset arrays must be rank 2");
    }
    if (features.rows() != labels.rows()) {
        throw ConfigError("dataset has " + std::to_string(features.rows()) +
                          " feature rows but " + std::to_string(labels.rows()) +
                          " label rows");
    }
    for (double v : features.values()) {
        if (!std::isfinite(v)) throw NumericError("dataset features contain a non-finite value");
    }
    for (double v : labels.values()) {
        if (!std::isfinite(v)) throw NumericError("dataset labels contain a non-finite value");
    }
    if (task == Task::classification) {
        for (std::size_t r = 0; r < labels.rows(); ++r) {
            std::size_t ones = 0;
            for (std::size_t k = 0; k < labels.cols(); ++k) {
                const double v = labels.at(r, k);
                if (v == 1.0) ++ones;
                else if (v != 0.0) throw ConfigError("label row " + std::to_string(r) +
                                                     " is not one-hot");
            }
            if (ones != 1) throw ConfigError("label row " + std::to_string(r) +
                                             " is not one-hot");
        }
    }
}

Dataset gen_noisy_regression(std::size_t n, std::uint64_t seed, double x_lo,
                             double x_hi, double noise_sd, Split split) {
    if (n < 1) throw ConfigError("data.n must be >= 1");
    if (!(x_lo < x_hi)) throw ConfigError("data x range is empty");
    if (noise_sd < 0.0) throw ConfigError("data.noise_sd must be >= 0");

    Dataset d;
    d.task = Task::regression;
    d.split = split;
    d.features = Tensor({n, 1});
    d.labels = Tensor({n, 1});
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = x_lo + rng.uniform() * (x_hi - x_lo);
        const double e = noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0;
        const double y = x + 0.3 * std::sin(2.0 * std::numbers::pi * (x + e)) +
                         0.3 * std::sin(4.0 * std::numbers::pi * (x + e)) + e;
        d.features[i] = x;
        d.labels[i] = y;
    }
    return d;
}

Dataset gen_blobs(std::size_t n, std::size_t classes, std::size_t input_dim,
                  double separation, std::uint64_t seed, Split split) {
    if (n < 1) throw ConfigError("data.n must be >= 1");
    if (classes < 2) throw ConfigError("data.classes must be >= 2");
    if (input_dim < 1) throw ConfigError("data.input_dim must be >= 1");

    std::vector<std::vector<double>> centers(classes, std::vector<double>(input_dim, 0.0));
    for (std::size_t c = 0; c < classes; ++c) {
        if (input_dim == 1) {
            centers[c][0] = separation *
                            (static_cast<double>(c) - (static_cast<double>(classes) - 1.0) / 2.0);
        } else {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                                 static_cast<double>(classes);
            centers[c][0] = separation * std::cos(angle);
            centers[c][1] = separation * std::sin(angle);
        }
    }

    Dataset d;
    d.task = Task::classification;
    d.split = split;
    d.features = Tensor({n, input_dim});
    d.labels = Tensor({n, classes});
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        for (std::size_t j = 0; j < input_dim; ++j) {
            d.features.at(i, j) = centers[c][j] + rng.normal();
        }
        d.labels.at(i, c) = 1.0;
    }
    return d;
}

Dataset load_csv_dataset(const std::filesystem::path& path, const CsvSchema& schema,
                         Task task, Split split) {
    if (schema.feature_columns.empty()) {
        throw ConfigError("csv schema has no feature columns");
    }
    if (task == Task::classification && schema.classes < 2) {
        throw ConfigError("csv schema needs classes >= 2 for classification");
    }
    const io::Csv table = io::read_csv(path);
    if (table.rows.empty()) throw IoError(path.string() + ": no data rows");

    auto column_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (table.header[i] == name) return i;
        }
        throw IoError(path.string() + ": missing column '" + name + "'");
    };
    std::vector<std::size_t> feat_cols;
    for (const auto& name : schema.feature_columns) feat_cols.push_back(column_of(name));
    const std::size_t label_col = column_of(schema.label_column);

    const std::size_t n = table.rows.size();
    Dataset d;
    d.task = task;
    d.split = split;
    d.features = Tensor({n, feat_cols.size()});
    d.labels = Tensor({n, task == Task::classification ? schema.classes : 1});
    for (std::size_t r = 0; r < n; ++r) {
        const std::string where = path.string() + " row " + std::to_string(r + 2);
        for (std::size_t j = 0; j < feat_cols.size(); ++j) {
            d.features.at(r, j) = io::parse_double(
                table.rows[r][feat_cols[j]], where + " column '" +
                schema.feature_columns[j] + "'");
        }
        const double label = io::parse_double(
            table.rows[r][label_col], where + " column '" + schema.label_column + "'");
        if (task == Task::classification) {
            const double rounded = std::nearbyint(label);
            if (rounded != label || label < 0.0 ||
                label >= static_cast<double>(schema.classes)) {
                throw IoError(where + ": label " + io::format_double(label) +
                              " is not a class index below " +
                              std::to_string(schema.classes));
            }
            d.labels.at(r, static_cast<std::size_t>(label)) = 1.0;
        } else {
            d.labels.at(r, 0) = label;
        }
    }
    d.validate();
    return d;
}

void save_csv_dataset(const std::filesystem::path& path, const Dataset& data,
                      const CsvSchema& schema) {
    if (schema.feature_columns.size() != data.input_dim()) {
        throw ConfigError("csv schema names " +
                          std::to_string(schema.feature_columns.size()) +
                          " feature columns for a dataset with input_dim " +
                          std::to_string(data.input_dim()));
    }
    io::Csv table;
    table.header = schema.feature_columns;
    table.header.push_back(schema.label_column);
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::vector<std::string> row;
        for (std::size_t j = 0; j < data.input_dim(); ++j) {
            row.push_back(io::format_double(data.features.at(r, j)));
        }
        if (data.task == Task::classification) {
            row.push_back(std::to_string(data.label_class(r)));
        } else {
            row.push_back(io::format_double(data.labels.at(r, 0)));
        }
        table.rows.push_back(std::move(row));
    }
    io::write_csv_atomic(path, table);
}

void SamplingConfig::validate() const {
    if (batch_size < 1) throw ConfigError("sampling.batch_size must be >= 1");
    if (ensemble_size < 1) throw ConfigError("sampling.ensemble_size must be >= 1");
    if (!(input_repetition_probability >= 0.0 && input_repetition_probability <= 1.0)) {
        throw ConfigError("sampling.input_repetition_probability must lie in [0, 1]");
    }
    if (batch_repetitions < 1) throw ConfigError("sampling.batch_repetitions must be >= 1");
}

MimoBatch sample_mimo_batch(const Dataset& data, const SamplingConfig& config,
                            Rng& rng) {
    config.validate();
    const std::size_t n = data.size();
    if (n == 0) throw ConfigError("sampling from an empty dataset");

    const std::size_t m_slots = config.ensemble_size;
    const std::size_t b = config.batch_size;
    std::vector<std::vector<std::size_t>> picks(m_slots, std::vector<std::size_t>(b));
    for (std::size_t row = 0; row < b; ++row) {
        picks[0][row] = rng.index(n);
        for (std::size_t m = 1; m < m_slots; ++m) {
            if (rng.uniform() < config.input_repetition_probability) {
                picks[m][row] = picks[0][row];
            } else {
                picks[m][row] = rng.index(n);
            }
        }
    }

    const std::size_t reps = config.batch_repetitions;
    const std::size_t rows = b * reps;
    MimoBatch batch;
    for (std::size_t m = 0; m < m_slots; ++m) {
        Tensor feats({rows, data.input_dim()});
        Tensor labs({rows, data.label_dim()});
        std::vector<std::size_t> idx(rows);
        for (std::size_t row = 0; row < b; ++row) {
            const std::size_t src = picks[m][row];
            for (std::size_t rep = 0; rep < reps; ++rep) {
                const std::size_t dst = row * reps + rep;
                idx[dst] = src;
                for (std::size_t j = 0; j < data.input_dim(); ++j) {
                    feats.at(dst, j) = data.features.at(src, j);
                }
                for (std::size_t j = 0; j < data.label_dim(); ++j) {
                    labs.at(dst, j) = data.labels.at(src, j);
                }
            }
        }
        batch.features.push_back(std::move(feats));
        batch.labels.push_back(std::move(labs));
        batch.indices.push_back(std::move(idx));
    }
    return batch;
}

} // namespace mimo
