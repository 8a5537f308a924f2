#include "mimo/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <iostream>
#include <optional>
#include <set>

#include <omp.h>

#include "mimo/checkpoint.hpp"
#include "mimo/io.hpp"

namespace mimo {

namespace fs = std::filesystem;
using nlohmann::json;

const char* data_kind_name(DataKind k) {
    switch (k) {
        case DataKind::regression: return "regression";
        case DataKind::blobs: return "blobs";
        case DataKind::csv: return "csv";
    }
    return "?";
}

Task DataSpec::task() const {
    if (kind == DataKind::regression) return Task::regression;
    if (kind == DataKind::blobs) return Task::classification;
    return schema.classes > 0 ? Task::classification : Task::regression;
}

std::size_t DataSpec::feature_dim() const {
    if (kind == DataKind::regression) return 1;
    if (kind == DataKind::blobs) return input_dim;
    return schema.feature_columns.size();
}

std::size_t DataSpec::label_dim() const {
    if (kind == DataKind::regression) return 1;
    if (kind == DataKind::blobs) return classes;
    return schema.classes > 0 ? schema.classes : 1;
}

void DataSpec::validate() const {
    if (train_n < 1) throw ConfigError("data.train_n must be >= 1");
    if (test_n < 1) throw ConfigError("data.test_n must be >= 1");
    switch (kind) {
        case DataKind::regression:
            if (!(train_lo < train_hi)) {
                throw ConfigError("data.train_range must be an increasing pair");
            }
            if (!(test_lo < test_hi)) {
                throw ConfigError("data.test_range must be an increasing pair");
            }
            if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
                throw ConfigError("data.noise_sd must be >= 0");
            }
            break;
        case DataKind::blobs:
            if (classes < 2) throw ConfigError("data.classes must be >= 2");
            if (input_dim < 1) throw ConfigError("data.input_dim must be >= 1");
            if (!(separation >= 0.0) || !std::isfinite(separation)) {
                throw ConfigError("data.separation must be >= 0");
            }
            break;
        case DataKind::csv:
            if (train_path.empty()) throw ConfigError("data.train_path must be nonempty");
            if (test_path.empty()) throw ConfigError("data.test_path must be nonempty");
            if (schema.feature_columns.empty()) {
                throw ConfigError("data.feature_columns must be nonempty");
            }
            if (schema.label_column.empty()) {
                throw ConfigError("data.label_column must be nonempty");
            }
            if (schema.classes == 1) throw ConfigError("data.classes must be 0 or >= 2");
            break;
    }
}

namespace {

// Seed streams: 1 = test split, 2 + r = training replicate r. Replicates
// share streams across sweep values so comparisons are paired.
std::uint64_t data_stream_seed(const DataSpec& spec, std::uint64_t stream) {
    return Rng(spec.seed).derive(stream).seed();
}

} // namespace

Dataset make_train_dataset(const DataSpec& spec, std::uint64_t stream) {
    switch (spec.kind) {
        case DataKind::regression:
            return gen_noisy_regression(spec.train_n, data_stream_seed(spec, 2 + stream),
                                        spec.train_lo, spec.train_hi, spec.noise_sd,
                                        Split::train);
        case DataKind::blobs:
            return gen_blobs(spec.train_n, spec.classes, spec.input_dim,
                             spec.separation, data_stream_seed(spec, 2 + stream),
                             Split::train);
        case DataKind::csv:
            if (stream != 0) {
                throw ConfigError("csv training data cannot be resampled per replicate");
            }
            return load_csv_dataset(spec.train_path, spec.schema, spec.task(),
                                    Split::train);
    }
    throw ConfigError("unknown data kind");
}

Dataset make_test_dataset(const DataSpec& spec) {
    switch (spec.kind) {
        case DataKind::regression:
            return gen_noisy_regression(spec.test_n, data_stream_seed(spec, 1),
                                        spec.test_lo, spec.test_hi, spec.noise_sd,
                                        Split::test);
        case DataKind::blobs:
            return gen_blobs(spec.test_n, spec.classes, spec.input_dim, spec.separation,
                             data_stream_seed(spec, 1), Split::test);
        case DataKind::csv:
            return load_csv_dataset(spec.test_path, spec.schema, spec.task(),
                                    Split::test);
    }
    throw ConfigError("unknown data kind");
}

void AnalysisSpec::validate() const {
    if (invariance_resamples < 1) {
        throw ConfigError("analysis.invariance_resamples must be >= 1");
    }
    condvar.validate();
    if (ece_bins < 1) throw ConfigError("analysis.ece_bins must be >= 1");
    if (!(sparsity_threshold >= 0.0) || !std::isfinite(sparsity_threshold)) {
        throw ConfigError("analysis.sparsity_threshold must be >= 0");
    }
    if (landscape_resolution < 2) {
        throw ConfigError("analysis.landscape_resolution must be >= 2");
    }
    if (!(landscape_margin >= 0.0) || !std::isfinite(landscape_margin)) {
        throw ConfigError("analysis.landscape_margin must be >= 0");
    }
    if (landscape_eval_limit < 1) {
        throw ConfigError("analysis.landscape_eval_limit must be >= 1");
    }
    if (trajectory_rows < 1) throw ConfigError("analysis.trajectory_rows must be >= 1");
}

void StudyConfig::validate() const {
    data.validate();
    network.validate();
    if (network.task != data.task()) {
        throw ConfigError(std::string("network.task must be ") + task_name(data.task()) +
                          " to match the data section");
    }
    if (network.input_dim != data.feature_dim()) {
        throw ConfigError("network.input_dim (" + std::to_string(network.input_dim) +
                          ") does not match the data feature count (" +
                          std::to_string(data.feature_dim()) + ")");
    }
    if (network.output_dim != data.label_dim()) {
        throw ConfigError("network.output_dim (" + std::to_string(network.output_dim) +
                          ") does not match the data label width (" +
                          std::to_string(data.label_dim()) + ")");
    }
    sampling.validate();
    if (sampling.ensemble_size != input_slots(network)) {
        throw ConfigError("sampling.ensemble_size must equal the network's input slot count");
    }
    optimizer.validate();
    analysis.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
}

namespace {

[[noreturn]] void type_error(const std::string& path, const char* want) {
    throw ConfigError(path + " must be " + want);
}

std::uint64_t as_u64(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    type_error(path, "a nonnegative integer");
}

std::size_t as_size(const json& v, const std::string& path) {
    return static_cast<std::size_t>(as_u64(v, path));
}

double as_real(const json& v, const std::string& path) {
    if (!v.is_number()) type_error(path, "a number");
    return v.get<double>();
}

std::string as_text(const json& v, const std::string& path) {
    if (!v.is_string()) type_error(path, "a string");
    return v.get<std::string>();
}

bool as_flag(const json& v, const std::string& path) {
    if (!v.is_boolean()) type_error(path, "a boolean");
    return v.get<bool>();
}

// One config section: hands out values by key and rejects whatever is left.
class Section {
public:
    Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) type_error(path_, "a JSON object");
    }

    const json* take(const std::string& key) {
        used_.insert(key);
        const auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }

    std::string sub(const std::string& key) const { return path_ + "." + key; }

    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        const json* v = take(key);
        return v ? as_u64(*v, sub(key)) : fallback;
    }
    std::size_t size(const std::string& key, std::size_t fallback) {
        const json* v = take(key);
        return v ? as_size(*v, sub(key)) : fallback;
    }
    double real(const std::string& key, double fallback) {
        const json* v = take(key);
        return v ? as_real(*v, sub(key)) : fallback;
    }
    std::string text(const std::string& key, const std::string& fallback) {
        const json* v = take(key);
        return v ? as_text(*v, sub(key)) : fallback;
    }
    bool flag(const std::string& key, bool fallback) {
        const json* v = take(key);
        return v ? as_flag(*v, sub(key)) : fallback;
    }

    void finish() const {
        for (const auto& item : j_->items()) {
            if (!used_.contains(item.key())) {
                throw ConfigError(path_ + "." + item.key() + " is not a recognized key");
            }
        }
    }

private:
    const json* j_;
    std::string path_;
    std::set<std::string> used_;
};

void parse_range(Section& s, const std::string& key, double& lo, double& hi) {
    const json* v = s.take(key);
    if (!v) return;
    if (!v->is_array() || v->size() != 2) type_error(s.sub(key), "a [low, high] pair");
    lo = as_real((*v)[0], s.sub(key) + "[0]");
    hi = as_real((*v)[1], s.sub(key) + "[1]");
}

DataSpec parse_data(const json& j) {
    Section s(j, "data");
    DataSpec d;
    const json* kind = s.take("kind");
    if (!kind) throw ConfigError("data.kind is required (regression, blobs, or csv)");
    const std::string k = as_text(*kind, "data.kind");
    if (k == "regression") {
        d.kind = DataKind::regression;
    } else if (k == "blobs") {
        d.kind = DataKind::blobs;
    } else if (k == "csv") {
        d.kind = DataKind::csv;
    } else {
        throw ConfigError("data.kind must be one of regression, blobs, csv");
    }
    d.seed = s.u64("seed", d.seed);
    switch (d.kind) {
        case DataKind::regression:
            d.train_n = s.size("train_n", 64);
            d.test_n = s.size("test_n", 3000);
            d.noise_sd = s.real("noise_sd", d.noise_sd);
            parse_range(s, "train_range", d.train_lo, d.train_hi);
            parse_range(s, "test_range", d.test_lo, d.test_hi);
            break;
        case DataKind::blobs:
            d.train_n = s.size("train_n", d.train_n);
            d.test_n = s.size("test_n", d.test_n);
            d.classes = s.size("classes", d.classes);
            d.input_dim = s.size("input_dim", d.input_dim);
            d.separation = s.real("separation", d.separation);
            break;
        case DataKind::csv: {
            d.train_path = s.text("train_path", "");
            d.test_path = s.text("test_path", "");
            if (const json* cols = s.take("feature_columns")) {
                if (!cols->is_array()) type_error("data.feature_columns", "an array");
                for (std::size_t i = 0; i < cols->size(); ++i) {
                    d.schema.feature_columns.push_back(as_text(
                        (*cols)[i], "data.feature_columns[" + std::to_string(i) + "]"));
                }
            }
            d.schema.label_column = s.text("label_column", "");
            d.schema.classes = s.size("classes", 0);
            break;
        }
    }
    s.finish();
    return d;
}

NetworkConfig parse_network(const json* j, const DataSpec& data) {
    NetworkConfig n;
    n.task = data.task();
    n.input_dim = data.feature_dim();
    n.output_dim = data.label_dim();
    n.init_seed = 1;
    if (!j) {
        n.ensemble_size = 3;
        return n;
    }
    Section s(*j, "network");
    if (const json* a = s.take("architecture")) {
        n.architecture = architecture_from_name(as_text(*a, "network.architecture"));
    }
    n.ensemble_size =
        s.size("ensemble_size", n.architecture == Architecture::standard ? 1 : 3);
    if (const json* h = s.take("hidden_widths")) {
        if (!h->is_array() || h->empty()) {
            type_error("network.hidden_widths", "a nonempty array");
        }
        n.hidden_widths.clear();
        for (std::size_t i = 0; i < h->size(); ++i) {
            n.hidden_widths.push_back(
                as_size((*h)[i], "network.hidden_widths[" + std::to_string(i) + "]"));
        }
    }
    n.init_seed = s.u64("init_seed", n.init_seed);
    if (const json* t = s.take("task")) {
        if (task_from_name(as_text(*t, "network.task")) != n.task) {
            throw ConfigError(std::string("network.task must be ") + task_name(n.task) +
                              " to match the data section");
        }
    }
    const std::size_t in = s.size("input_dim", n.input_dim);
    if (in != n.input_dim) {
        throw ConfigError("network.input_dim (" + std::to_string(in) +
                          ") does not match the data feature count (" +
                          std::to_string(n.input_dim) + ")");
    }
    const std::size_t out = s.size("output_dim", n.output_dim);
    if (out != n.output_dim) {
        throw ConfigError("network.output_dim (" + std::to_string(out) +
                          ") does not match the data label width (" +
                          std::to_string(n.output_dim) + ")");
    }
    s.finish();
    return n;
}

std::vector<ScheduleEntry> default_schedule(std::size_t steps) {
    if (steps < 4) return {};
    return {{steps / 2, 0.1}, {3 * steps / 4, 0.01}};
}

OptimizerConfig parse_optimizer(const json* j) {
    OptimizerConfig o;
    o.learning_rate = 0.1;
    o.steps = 1000;
    if (!j) {
        o.schedule = default_schedule(o.steps);
        return o;
    }
    Section s(*j, "optimizer");
    o.learning_rate = s.real("learning_rate", o.learning_rate);
    o.steps = s.size("steps", o.steps);
    o.l1_coefficient = s.real("l1", 0.0);
    o.l2_coefficient = s.real("l2", 0.0);
    o.snapshot_every = s.size("snapshot_every", 0);
    if (const json* sched = s.take("schedule")) {
        if (!sched->is_array()) type_error("optimizer.schedule", "an array");
        for (std::size_t i = 0; i < sched->size(); ++i) {
            const std::string path = "optimizer.schedule[" + std::to_string(i) + "]";
            Section entry((*sched)[i], path);
            ScheduleEntry e;
            const json* step = entry.take("step");
            const json* mult = entry.take("multiplier");
            if (!step || !mult) {
                throw ConfigError(path + " needs both step and multiplier");
            }
            e.step = as_size(*step, path + ".step");
            e.multiplier = as_real(*mult, path + ".multiplier");
            entry.finish();
            o.schedule.push_back(e);
        }
    } else {
        o.schedule = default_schedule(o.steps);
    }
    s.finish();
    return o;
}

SamplingConfig parse_sampling(const json* j, const NetworkConfig& network) {
    SamplingConfig c;
    c.seed = 1;
    c.ensemble_size = input_slots(network);
    if (!j) return c;
    Section s(*j, "sampling");
    c.batch_size = s.size("batch_size", c.batch_size);
    c.input_repetition_probability =
        s.real("input_repetition_probability", c.input_repetition_probability);
    c.batch_repetitions = s.size("batch_repetitions", c.batch_repetitions);
    c.seed = s.u64("seed", c.seed);
    s.finish();
    return c;
}

AnalysisSpec parse_analysis(const json* j) {
    AnalysisSpec a;
    if (!j) return a;
    Section s(*j, "analysis");
    a.seed = s.u64("seed", a.seed);
    a.invariance_resamples = s.size("invariance_resamples", a.invariance_resamples);
    a.condvar.outer = s.size("separation_outer", a.condvar.outer);
    a.condvar.inner = s.size("separation_inner", a.condvar.inner);
    a.condvar.exhaustive = s.flag("separation_exhaustive", a.condvar.exhaustive);
    a.ece_bins = s.size("ece_bins", a.ece_bins);
    a.sparsity_threshold = s.real("sparsity_threshold", a.sparsity_threshold);
    a.landscape_resolution = s.size("landscape_resolution", a.landscape_resolution);
    a.landscape_margin = s.real("landscape_margin", a.landscape_margin);
    a.landscape_eval_limit = s.size("landscape_eval_limit", a.landscape_eval_limit);
    a.trajectory_rows = s.size("trajectory_rows", a.trajectory_rows);
    s.finish();
    return a;
}

} // namespace

StudyConfig parse_study_config(const json& document) {
    Section root(document, "config");
    StudyConfig c;
    const json* dj = root.take("data");
    if (!dj) throw ConfigError("config needs a data section");
    c.data = parse_data(*dj);
    c.network = parse_network(root.take("network"), c.data);
    c.sampling = parse_sampling(root.take("sampling"), c.network);
    c.optimizer = parse_optimizer(root.take("optimizer"));
    c.analysis = parse_analysis(root.take("analysis"));
    c.output_dir = root.text("output_dir", "out");
    c.workers = root.size("workers", 1);
    root.finish();
    c.validate();
    return c;
}

StudyConfig load_study_config(const fs::path& path) {
    const std::string text = io::read_file(path);
    json document;
    try {
        document = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " +
                          e.what());
    }
    return parse_study_config(document);
}

json study_config_to_json(const StudyConfig& c) {
    json data;
    data["kind"] = data_kind_name(c.data.kind);
    data["seed"] = c.data.seed;
    switch (c.data.kind) {
        case DataKind::regression:
            data["train_n"] = c.data.train_n;
            data["test_n"] = c.data.test_n;
            data["noise_sd"] = c.data.noise_sd;
            data["train_range"] = {c.data.train_lo, c.data.train_hi};
            data["test_range"] = {c.data.test_lo, c.data.test_hi};
            break;
        case DataKind::blobs:
            data["train_n"] = c.data.train_n;
            data["test_n"] = c.data.test_n;
            data["classes"] = c.data.classes;
            data["input_dim"] = c.data.input_dim;
            data["separation"] = c.data.separation;
            break;
        case DataKind::csv:
            data["train_path"] = c.data.train_path.generic_string();
            data["test_path"] = c.data.test_path.generic_string();
            data["feature_columns"] = c.data.schema.feature_columns;
            data["label_column"] = c.data.schema.label_column;
            data["classes"] = c.data.schema.classes;
            break;
    }
    json schedule = json::array();
    for (const ScheduleEntry& e : c.optimizer.schedule) {
        schedule.push_back({{"step", e.step}, {"multiplier", e.multiplier}});
    }
    return json{
        {"data", data},
        {"network", network_config_to_json(c.network)},
        {"sampling",
         {{"batch_size", c.sampling.batch_size},
          {"input_repetition_probability", c.sampling.input_repetition_probability},
          {"batch_repetitions", c.sampling.batch_repetitions},
          {"seed", c.sampling.seed}}},
        {"optimizer",
         {{"learning_rate", c.optimizer.learning_rate},
          {"steps", c.optimizer.steps},
          {"l1", c.optimizer.l1_coefficient},
          {"l2", c.optimizer.l2_coefficient},
          {"snapshot_every", c.optimizer.snapshot_every},
          {"schedule", schedule}}},
        {"analysis",
         {{"seed", c.analysis.seed},
          {"invariance_resamples", c.analysis.invariance_resamples},
          {"separation_outer", c.analysis.condvar.outer},
          {"separation_inner", c.analysis.condvar.inner},
          {"separation_exhaustive", c.analysis.condvar.exhaustive},
          {"ece_bins", c.analysis.ece_bins},
          {"sparsity_threshold", c.analysis.sparsity_threshold},
          {"landscape_resolution", c.analysis.landscape_resolution},
          {"landscape_margin", c.analysis.landscape_margin},
          {"landscape_eval_limit", c.analysis.landscape_eval_limit},
          {"trajectory_rows", c.analysis.trajectory_rows}}},
        {"output_dir", c.output_dir.generic_string()},
        {"workers", c.workers},
    };
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

std::string study_config_hash(const StudyConfig& config) {
    json j = study_config_to_json(config);
    j.erase("output_dir");
    j.erase("workers");
    const std::string text = j.dump();
    return hex64(fnv1a(text.data(), text.size()));
}

void apply_seed_override(StudyConfig& config, std::uint64_t seed) {
    const Rng master(seed);
    config.data.seed = master.derive(1).seed();
    config.network.init_seed = master.derive(2).seed();
    config.sampling.seed = master.derive(3).seed();
    config.analysis.seed = master.derive(4).seed();
}

// ---------------------------------------------------------------------------
// Manifests: one JSON per command recording the config, a hash of its
// semantic fields, input-file digests, and every produced file. A re-run
// whose manifest still matches is skipped wholesale.

namespace {

struct ManifestInput {
    std::string path;
    std::string digest;
};

ManifestInput digest_file(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = io::read_binary(path);
    return {path.generic_string(), hex64(fnv1a(bytes.data(), bytes.size()))};
}

fs::path manifest_path(const fs::path& dir, const std::string& slug) {
    return dir / ("manifest-" + slug + ".json");
}

std::optional<std::vector<fs::path>> manifest_covers(
    const fs::path& dir, const std::string& slug, const std::string& command,
    const std::string& hash, const std::vector<ManifestInput>& inputs) {
    const fs::path path = manifest_path(dir, slug);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    json m;
    try {
        m = json::parse(io::read_file(path));
    } catch (...) {
        return std::nullopt;
    }
    if (!m.is_object() || m.value("command", "") != command ||
        m.value("config_hash", "") != hash) {
        return std::nullopt;
    }
    const json stored_inputs = m.value("inputs", json::array());
    for (const ManifestInput& input : inputs) {
        bool found = false;
        for (const json& si : stored_inputs) {
            if (si.value("path", "") == input.path &&
                si.value("digest", "") == input.digest) {
                found = true;
                break;
            }
        }
        if (!found) return std::nullopt;
    }
    std::vector<fs::path> files;
    for (const json& f : m.value("files", json::array())) {
        const fs::path rel = f.value("path", "");
        const std::uint64_t bytes = f.value("bytes", std::uint64_t{0});
        const fs::path full = dir / rel;
        if (!fs::exists(full, ec) || fs::file_size(full, ec) != bytes) {
            return std::nullopt;
        }
        files.push_back(full);
    }
    files.push_back(path);
    return files;
}

std::vector<fs::path> write_manifest(const fs::path& dir, const std::string& slug,
                                     const std::string& command,
                                     const StudyConfig& config, const std::string& hash,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<fs::path>& produced,
                                     const std::vector<ManifestInput>& inputs) {
    json m;
    m["version"] = 1;
    m["command"] = command;
    m["config_hash"] = hash;
    m["config"] = study_config_to_json(config);
    m["created"] = timestamp_utc();
    m["seeds"] = seeds;
    json ji = json::array();
    for (const ManifestInput& input : inputs) {
        ji.push_back({{"path", input.path}, {"digest", input.digest}});
    }
    m["inputs"] = ji;
    json jf = json::array();
    std::vector<fs::path> files;
    for (const fs::path& rel : produced) {
        const fs::path full = dir / rel;
        jf.push_back({{"path", rel.generic_string()},
                      {"bytes", static_cast<std::uint64_t>(fs::file_size(full))}});
        files.push_back(full);
    }
    m["files"] = jf;
    io::write_file_atomic(manifest_path(dir, slug), m.dump(2) + "\n");
    files.push_back(manifest_path(dir, slug));
    return files;
}

Dataset dataset_head(const Dataset& data, std::size_t limit) {
    if (data.size() <= limit) return data;
    Dataset sub;
    sub.task = data.task;
    sub.split = data.split;
    sub.features = Tensor({limit, data.input_dim()});
    sub.labels = Tensor({limit, data.label_dim()});
    for (std::size_t i = 0; i < limit * data.input_dim(); ++i) {
        sub.features[i] = data.features[i];
    }
    for (std::size_t i = 0; i < limit * data.label_dim(); ++i) {
        sub.labels[i] = data.labels[i];
    }
    return sub;
}

std::string fd(double v) { return io::format_double(v); }

void note(const StudyConfig& config, const std::string& line) {
    if (!config.verbose) return;
#pragma omp critical(mimo_study_note)
    std::cerr << line << "\n";
}

// Rethrow a stored cell failure with the cell named, keeping the error class
// (and with it the exit code).
[[noreturn]] void rethrow_cell(std::exception_ptr failure, const std::string& cell) {
    const std::string prefix = cell + ": ";
    try {
        std::rethrow_exception(failure);
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const IoError& e) {
        throw IoError(prefix + e.what());
    } catch (const std::exception& e) {
        throw Error(prefix + e.what());
    }
}

} // namespace

CommandOutcome run_train(const StudyConfig& config) {
    config.validate();
    const fs::path dir = config.output_dir;
    const std::string hash = study_config_hash(config);
    if (auto files = manifest_covers(dir, "train", "train", hash, {})) {
        return {true, *files};
    }

    const Dataset train_set = make_train_dataset(config.data, 0);
    const Dataset test_set = make_test_dataset(config.data);
    Network net = build_network(config.network);

    Dataset trajectory_set;
    const Dataset* trajectory_ptr = nullptr;
    if (config.optimizer.snapshot_every > 0) {
        trajectory_set = dataset_head(test_set, config.analysis.trajectory_rows);
        trajectory_ptr = &trajectory_set;
    }
    note(config, "train: " + std::to_string(config.optimizer.steps) + " steps");
    TrainResult result =
        train(std::move(net), train_set, config.sampling, config.optimizer, trajectory_ptr);

    io::Csv loss;
    loss.header = {"step", "loss"};
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        loss.rows.push_back({std::to_string(i), fd(result.loss_curve[i])});
    }
    io::write_csv_atomic(dir / "loss.csv", loss);
    save_checkpoint(result.network, config.optimizer.steps, config.sampling.seed,
                    dir / "checkpoint.bin");
    std::vector<fs::path> produced{"loss.csv", "checkpoint.bin"};

    if (result.trajectory.size() > 0) {
        const TrajectoryLog& log = result.trajectory;
        const std::size_t k = trajectory_set.label_dim();
        io::Csv traj;
        traj.header = {"step", "head", "row"};
        for (std::size_t c = 0; c < k; ++c) traj.header.push_back("p" + std::to_string(c));
        for (std::size_t s = 0; s < log.size(); ++s) {
            for (std::size_t h = 0; h < log.heads; ++h) {
                const Tensor& preds = log.snapshots[s][h];
                for (std::size_t row = 0; row < preds.rows(); ++row) {
                    std::vector<std::string> line{std::to_string(log.steps[s]),
                                                  std::to_string(h), std::to_string(row)};
                    for (std::size_t c = 0; c < k; ++c) {
                        line.push_back(fd(preds.at(row, c)));
                    }
                    traj.rows.push_back(std::move(line));
                }
            }
        }
        io::write_csv_atomic(dir / "trajectory.csv", traj);
        produced.push_back("trajectory.csv");
    }

    const std::vector<std::uint64_t> seeds{config.data.seed, config.network.init_seed,
                                           config.sampling.seed};
    return {false, write_manifest(dir, "train", "train", config, hash, seeds, produced, {})};
}

namespace {

// Ensemble/per-head metric rows shared by the metrics report. Subnetwork rows
// evaluate each slice as a standalone network, the same path the landscape
// grid uses, so the two reports cross-check each other.
void metrics_rows(const Network& net, const Dataset& test, std::size_t ece_bins,
                  io::Csv& csv, json& report) {
    const Evaluation ev = evaluate(net, test);
    const bool classify = net.config.task == Task::classification;
    auto add = [&](const std::string& name, const Tensor& preds) {
        if (classify) {
            const MetricsReport m = metrics_from_probs(preds, test, ece_bins);
            csv.rows.push_back({name, fd(m.accuracy), fd(m.nll), fd(m.ece)});
            report[name] = {{"accuracy", m.accuracy}, {"nll", m.nll}, {"ece", m.ece}};
        } else {
            const double mse = mse_from_predictions(preds, test);
            csv.rows.push_back({name, fd(mse)});
            report[name] = {{"mse", mse}};
        }
    };
    csv.header = classify ? std::vector<std::string>{"model", "accuracy", "nll", "ece"}
                          : std::vector<std::string>{"model", "mse"};
    add("ensemble", ev.ensemble);
    for (std::size_t h = 0; h < ev.heads.size(); ++h) {
        add("head_" + std::to_string(h), ev.heads[h]);
    }
    const Architecture a = net.config.architecture;
    if (a == Architecture::mimo || a == Architecture::naive_multihead) {
        for (std::size_t m = 0; m < net.config.ensemble_size; ++m) {
            const Network model = subnetwork_model(net, extract_slice(net, m));
            add("subnetwork_" + std::to_string(m), forward_tiled(model, test.features)[0]);
        }
    }
}

} // namespace

CommandOutcome run_analyze(const StudyConfig& config, const std::string& what,
                           const fs::path& checkpoint_path) {
    config.validate();
    static const std::set<std::string> known{"diversity", "invariance", "separation",
                                             "metrics", "sparsity"};
    if (!known.contains(what)) {
        throw ConfigError("unknown analyze report '" + what +
                          "' (expected diversity, invariance, separation, metrics, or sparsity)");
    }
    const fs::path dir = config.output_dir;
    const std::string hash = study_config_hash(config);
    const std::string command = "analyze " + what;

    std::error_code ec;
    std::vector<ManifestInput> inputs;
    if (fs::exists(checkpoint_path, ec)) inputs.push_back(digest_file(checkpoint_path));
    if (auto files = manifest_covers(dir, what, command, hash, inputs)) {
        return {true, *files};
    }

    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Network& net = ck.network;
    if (net.config.task != config.data.task() ||
        net.config.input_dim != config.data.feature_dim() ||
        net.config.output_dim != config.data.label_dim()) {
        throw ConfigError("checkpoint network does not match the data section");
    }

    io::Csv csv;
    json report;
    if (what == "diversity") {
        const Dataset test = make_test_dataset(config.data);
        csv.header = {"metric", "head_a", "head_b", "value"};
        for (DiversityMetric metric : {DiversityMetric::disagreement, DiversityMetric::kl,
                                       DiversityMetric::cosine}) {
            const DiversityReport rep = pairwise_diversity(net, test, metric);
            const char* name = diversity_metric_name(metric);
            report[name] = {{"mean", rep.mean}, {"pairs", rep.pair_matrix}};
            for (std::size_t i = 0; i < rep.heads; ++i) {
                for (std::size_t j = 0; j < rep.heads; ++j) {
                    csv.rows.push_back({name, std::to_string(i), std::to_string(j),
                                        fd(rep.pair_matrix[i][j])});
                }
            }
        }
    } else if (what == "invariance") {
        const Dataset test = make_test_dataset(config.data);
        csv.header = {"metric", "value", "resamples"};
        int stream = 10;
        for (DiversityMetric metric : {DiversityMetric::disagreement, DiversityMetric::kl,
                                       DiversityMetric::cosine}) {
            Rng rng = Rng(config.analysis.seed).derive(stream++);
            const InvarianceReport rep = invariance(
                net, test, metric, config.analysis.invariance_resamples, rng);
            const char* name = diversity_metric_name(metric);
            report[name] = rep.value;
            csv.rows.push_back({name, fd(rep.value), std::to_string(rep.resamples)});
        }
        report["resamples"] = config.analysis.invariance_resamples;
    } else if (what == "separation") {
        const Dataset train = make_train_dataset(config.data, 0);
        Rng rng = Rng(config.analysis.seed).derive(20);
        const ConditionalVarianceReport rep =
            conditional_variances(net, train, config.analysis.condvar, rng);
        const std::size_t slots = rep.units.empty() ? 0 : rep.units[0].per_slot.size();
        csv.header = {"layer", "unit", "dominant_slot", "dominance_share"};
        for (std::size_t m = 0; m < slots; ++m) {
            csv.header.push_back("var_slot_" + std::to_string(m));
        }
        json units = json::array();
        for (const UnitConditionalVariance& u : rep.units) {
            std::vector<std::string> row{
                std::to_string(u.layer), std::to_string(u.index_in_layer),
                std::to_string(u.dominant_slot), fd(u.dominance_share)};
            for (double v : u.per_slot) row.push_back(fd(v));
            csv.rows.push_back(std::move(row));
            units.push_back({{"layer", u.layer},
                             {"unit", u.index_in_layer},
                             {"dominant_slot", u.dominant_slot},
                             {"dominance_share", u.dominance_share},
                             {"per_slot", u.per_slot}});
        }
        report["units"] = units;
    } else if (what == "metrics") {
        const Dataset test = make_test_dataset(config.data);
        metrics_rows(net, test, config.analysis.ece_bins, csv, report);
    } else { // sparsity
        csv.header = {"parameter", "nonzero_fraction"};
        json per = json::object();
        for (const NamedTensor& p : net.parameters) {
            if (!p.name.ends_with(".weight")) continue;
            std::size_t nonzero = 0;
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                if (std::fabs(p.value[i]) > config.analysis.sparsity_threshold) ++nonzero;
            }
            const double fraction =
                static_cast<double>(nonzero) / static_cast<double>(p.value.size());
            csv.rows.push_back({p.name, fd(fraction)});
            per[p.name] = fraction;
        }
        const double total =
            nonzero_weight_fraction(net, config.analysis.sparsity_threshold);
        csv.rows.push_back({"all_weights", fd(total)});
        report = {{"threshold", config.analysis.sparsity_threshold},
                  {"nonzero_weight_fraction", total},
                  {"per_parameter", per}};
    }

    io::write_csv_atomic(dir / (what + ".csv"), csv);
    io::write_file_atomic(dir / (what + ".json"), report.dump(2) + "\n");
    const std::vector<fs::path> produced{what + ".csv", what + ".json"};
    const std::vector<std::uint64_t> seeds{config.analysis.seed};
    return {false,
            write_manifest(dir, what, command, config, hash, seeds, produced, inputs)};
}

// ---------------------------------------------------------------------------
// Sweeps: one trained cell per (value, replicate). Cells land in their own
// files keyed by the config hash, so an interrupted sweep resumes where it
// stopped and a finished cell is never retrained.

namespace {

struct SweepRow {
    double accuracy = 0.0;
    double nll = 0.0;
    double ece = 0.0;
    double nonzero = 0.0;
    double disagreement = 0.0;
};

std::size_t integer_axis_value(const std::string& axis, double value) {
    const double rounded = std::floor(value);
    if (!(rounded == value) || value < 1.0 || value > 1e9) {
        throw ConfigError("sweep axis " + axis + " values must be positive integers");
    }
    return static_cast<std::size_t>(rounded);
}

StudyConfig apply_axis(const StudyConfig& base, const std::string& axis, double value) {
    StudyConfig c = base;
    if (axis == "M") {
        c.network.ensemble_size = integer_axis_value(axis, value);
        c.sampling.ensemble_size = input_slots(c.network);
    } else if (axis == "rho") {
        c.sampling.input_repetition_probability = value;
    } else if (axis == "batch_repetitions") {
        c.sampling.batch_repetitions = integer_axis_value(axis, value);
    } else if (axis == "l1") {
        c.optimizer.l1_coefficient = value;
    } else if (axis == "l2") {
        c.optimizer.l2_coefficient = value;
    } else {
        throw ConfigError("unknown sweep axis '" + axis +
                          "' (expected M, rho, batch_repetitions, l1, or l2)");
    }
    return c;
}

SweepRow compute_cell(const StudyConfig& base, const std::string& axis, double value,
                      std::size_t replicate, const Dataset& test) {
    StudyConfig c = apply_axis(base, axis, value);
    c.network.init_seed = Rng(base.network.init_seed).derive(5000 + replicate).seed();
    c.sampling.seed = Rng(base.sampling.seed).derive(6000 + replicate).seed();
    c.validate();
    const std::uint64_t stream = c.data.kind == DataKind::csv ? 0 : replicate;
    const Dataset train_set = make_train_dataset(c.data, stream);
    TrainResult result =
        train(build_network(c.network), train_set, c.sampling, c.optimizer, nullptr);
    const Evaluation ev = evaluate(result.network, test);
    const MetricsReport m = metrics_from_probs(ev.ensemble, test, base.analysis.ece_bins);
    SweepRow row;
    row.accuracy = m.accuracy;
    row.nll = m.nll;
    row.ece = m.ece;
    row.nonzero = nonzero_weight_fraction(result.network, base.analysis.sparsity_threshold);
    row.disagreement =
        c.network.ensemble_size >= 2
            ? pairwise_diversity(result.network, test, DiversityMetric::disagreement).mean
            : 0.0;
    return row;
}

const std::vector<std::string> kCellHeader{"axis",
                                           "value",
                                           "replicate",
                                           "accuracy",
                                           "nll",
                                           "ece",
                                           "nonzero_weight_fraction",
                                           "disagreement"};

std::optional<SweepRow> load_cell(const fs::path& path, const std::string& axis,
                                  double value, std::size_t replicate) {
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    io::Csv t;
    try {
        t = io::read_csv(path);
    } catch (...) {
        return std::nullopt;
    }
    if (t.header != kCellHeader || t.rows.size() != 1) return std::nullopt;
    const std::vector<std::string>& r = t.rows[0];
    if (r[0] != axis || r[1] != fd(value) || r[2] != std::to_string(replicate)) {
        return std::nullopt;
    }
    try {
        SweepRow row;
        row.accuracy = io::parse_double(r[3], "cell accuracy");
        row.nll = io::parse_double(r[4], "cell nll");
        row.ece = io::parse_double(r[5], "cell ece");
        row.nonzero = io::parse_double(r[6], "cell nonzero fraction");
        row.disagreement = io::parse_double(r[7], "cell disagreement");
        return row;
    } catch (...) {
        return std::nullopt;
    }
}

void store_cell(const fs::path& path, const std::string& axis, double value,
                std::size_t replicate, const SweepRow& row) {
    io::Csv t;
    t.header = kCellHeader;
    t.rows.push_back({axis, fd(value), std::to_string(replicate), fd(row.accuracy),
                      fd(row.nll), fd(row.ece), fd(row.nonzero), fd(row.disagreement)});
    io::write_csv_atomic(path, t);
}

std::string join_values(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ",";
        s += fd(values[i]);
    }
    return s;
}

} // namespace

CommandOutcome run_sweep(const StudyConfig& config, const std::string& axis,
                         const std::vector<double>& values, std::size_t replicates) {
    config.validate();
    if (values.empty()) throw ConfigError("sweep values must be nonempty");
    if (replicates < 1) throw ConfigError("sweep replicates must be >= 1");
    if (config.data.task() != Task::classification) {
        throw ConfigError("sweep requires a classification data section");
    }
    for (double v : values) apply_axis(config, axis, v).network.validate();

    const fs::path dir = config.output_dir;
    const std::string hash = study_config_hash(config);
    const std::string command = "sweep axis=" + axis + " values=" + join_values(values) +
                                " replicates=" + std::to_string(replicates);
    if (auto files = manifest_covers(dir, "sweep", command, hash, {})) {
        return {true, *files};
    }

    const Dataset test = make_test_dataset(config.data);
    const fs::path cells_dir = dir / ("cells-" + hash.substr(0, 8));

    const std::size_t grid = values.size() * replicates;
    std::vector<SweepRow> rows(grid);
    std::vector<fs::path> cell_files(grid);
    std::vector<std::exception_ptr> failures(grid);

#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(config.workers))
    for (long long idx = 0; idx < static_cast<long long>(grid); ++idx) {
        const std::size_t vi = static_cast<std::size_t>(idx) / replicates;
        const std::size_t rep = static_cast<std::size_t>(idx) % replicates;
        const double value = values[vi];
        const fs::path cell_path =
            cells_dir / (axis + "=" + fd(value) + "-r" + std::to_string(rep) + ".csv");
        cell_files[idx] = cell_path;
        try {
            if (auto cached = load_cell(cell_path, axis, value, rep)) {
                rows[idx] = *cached;
                note(config, "sweep cell " + axis + "=" + fd(value) + " replicate " +
                                 std::to_string(rep) + ": reused");
            } else {
                rows[idx] = compute_cell(config, axis, value, rep, test);
                store_cell(cell_path, axis, value, rep, rows[idx]);
                note(config, "sweep cell " + axis + "=" + fd(value) + " replicate " +
                                 std::to_string(rep) + ": done");
            }
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (std::size_t idx = 0; idx < grid; ++idx) {
        if (failures[idx]) {
            rethrow_cell(failures[idx],
                         "sweep cell (axis=" + axis + ", value=" +
                             fd(values[idx / replicates]) + ", replicate=" +
                             std::to_string(idx % replicates) + ")");
        }
    }

    io::Csv table;
    table.header = {"kind",
                    "axis",
                    "value",
                    "replicate",
                    "accuracy",
                    "nll",
                    "ece",
                    "nonzero_weight_fraction",
                    "disagreement"};
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
        for (std::size_t rep = 0; rep < replicates; ++rep) {
            const SweepRow& r = rows[vi * replicates + rep];
            table.rows.push_back({"cell", axis, fd(values[vi]), std::to_string(rep),
                                  fd(r.accuracy), fd(r.nll), fd(r.ece), fd(r.nonzero),
                                  fd(r.disagreement)});
        }
    }
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
        SweepRow mean, sq;
        for (std::size_t rep = 0; rep < replicates; ++rep) {
            const SweepRow& r = rows[vi * replicates + rep];
            mean.accuracy += r.accuracy;
            mean.nll += r.nll;
            mean.ece += r.ece;
            mean.nonzero += r.nonzero;
            mean.disagreement += r.disagreement;
        }
        const double n = static_cast<double>(replicates);
        mean.accuracy /= n;
        mean.nll /= n;
        mean.ece /= n;
        mean.nonzero /= n;
        mean.disagreement /= n;
        for (std::size_t rep = 0; rep < replicates; ++rep) {
            const SweepRow& r = rows[vi * replicates + rep];
            sq.accuracy += (r.accuracy - mean.accuracy) * (r.accuracy - mean.accuracy);
            sq.nll += (r.nll - mean.nll) * (r.nll - mean.nll);
            sq.ece += (r.ece - mean.ece) * (r.ece - mean.ece);
            sq.nonzero += (r.nonzero - mean.nonzero) * (r.nonzero - mean.nonzero);
            sq.disagreement +=
                (r.disagreement - mean.disagreement) * (r.disagreement - mean.disagreement);
        }
        auto sd = [&](double total) {
            return replicates > 1 ? std::sqrt(total / (n - 1.0)) : 0.0;
        };
        table.rows.push_back({"mean", axis, fd(values[vi]), "", fd(mean.accuracy),
                              fd(mean.nll), fd(mean.ece), fd(mean.nonzero),
                              fd(mean.disagreement)});
        table.rows.push_back({"stddev", axis, fd(values[vi]), "", fd(sd(sq.accuracy)),
                              fd(sd(sq.nll)), fd(sd(sq.ece)), fd(sd(sq.nonzero)),
                              fd(sd(sq.disagreement))});
    }
    io::write_csv_atomic(dir / "sweep.csv", table);

    std::vector<fs::path> produced{"sweep.csv"};
    for (const fs::path& cell : cell_files) {
        produced.push_back(fs::relative(cell, dir));
    }
    const std::vector<std::uint64_t> seeds{config.data.seed, config.network.init_seed,
                                           config.sampling.seed};
    return {false,
            write_manifest(dir, "sweep", command, config, hash, seeds, produced, {})};
}

CommandOutcome run_bias_variance(const StudyConfig& config,
                                 const std::vector<std::size_t>& m_list,
                                 std::size_t replicates) {
    config.validate();
    if (m_list.empty()) throw ConfigError("bias-variance M list must be nonempty");
    if (replicates < 2) {
        throw ConfigError("bias-variance needs >= 2 replicates (variance is undefined)");
    }
    if (config.data.task() != Task::regression) {
        throw ConfigError("bias-variance requires a regression data section");
    }
    for (std::size_t m : m_list) {
        StudyConfig c = config;
        c.network.ensemble_size = m;
        c.sampling.ensemble_size = input_slots(c.network);
        c.network.validate();
    }

    const fs::path dir = config.output_dir;
    const std::string hash = study_config_hash(config);
    std::string command = "bias-variance m=";
    for (std::size_t i = 0; i < m_list.size(); ++i) {
        if (i) command += ",";
        command += std::to_string(m_list[i]);
    }
    command += " replicates=" + std::to_string(replicates);
    if (auto files = manifest_covers(dir, "bias-variance", command, hash, {})) {
        return {true, *files};
    }

    const Dataset test = make_test_dataset(config.data);
    std::vector<double> targets(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) targets[i] = test.labels.at(i, 0);

    const std::size_t grid = m_list.size() * replicates;
    std::vector<std::vector<double>> cell_predictions(grid);
    std::vector<std::exception_ptr> failures(grid);

#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(config.workers))
    for (long long idx = 0; idx < static_cast<long long>(grid); ++idx) {
        const std::size_t mi = static_cast<std::size_t>(idx) / replicates;
        const std::size_t rep = static_cast<std::size_t>(idx) % replicates;
        try {
            StudyConfig c = config;
            c.network.ensemble_size = m_list[mi];
            c.sampling.ensemble_size = input_slots(c.network);
            c.network.init_seed = Rng(config.network.init_seed).derive(7000 + rep).seed();
            c.sampling.seed = Rng(config.sampling.seed).derive(8000 + rep).seed();
            c.validate();
            const Dataset train_set = make_train_dataset(c.data, rep);
            TrainResult result = train(build_network(c.network), train_set, c.sampling,
                                       c.optimizer, nullptr);
            const Evaluation ev = evaluate(result.network, test);
            std::vector<double> preds(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) preds[i] = ev.ensemble.at(i, 0);
            cell_predictions[idx] = std::move(preds);
            note(config, "bias-variance cell M=" + std::to_string(m_list[mi]) +
                             " replicate " + std::to_string(rep) + ": done");
        } catch (...) {
            failures[idx] = std::current_exception();
        }
    }
    for (std::size_t idx = 0; idx < grid; ++idx) {
        if (failures[idx]) {
            rethrow_cell(failures[idx],
                         "bias-variance cell (M=" + std::to_string(m_list[idx / replicates]) +
                             ", replicate=" + std::to_string(idx % replicates) + ")");
        }
    }

    io::Csv table;
    table.header = {"M",        "replicates", "error",       "bias_sq",
                    "variance", "error_se",   "bias_sq_se",  "variance_se"};
    for (std::size_t mi = 0; mi < m_list.size(); ++mi) {
        std::vector<std::vector<double>> predictions;
        for (std::size_t rep = 0; rep < replicates; ++rep) {
            predictions.push_back(cell_predictions[mi * replicates + rep]);
        }
        const BiasVarianceReport rep =
            decompose_bias_variance(predictions, targets, m_list[mi]);
        table.rows.push_back({std::to_string(m_list[mi]), std::to_string(replicates),
                              fd(rep.error), fd(rep.bias_sq), fd(rep.variance),
                              fd(rep.error_se), fd(rep.bias_sq_se), fd(rep.variance_se)});
    }
    io::write_csv_atomic(dir / "bias_variance.csv", table);

    const std::vector<fs::path> produced{"bias_variance.csv"};
    const std::vector<std::uint64_t> seeds{config.data.seed, config.network.init_seed,
                                           config.sampling.seed};
    return {false, write_manifest(dir, "bias-variance", command, config, hash, seeds,
                                  produced, {})};
}

namespace {

TrajectoryLog read_trajectory(const fs::path& path) {
    const io::Csv t = io::read_csv(path);
    if (t.header.size() < 4 || t.header[0] != "step" || t.header[1] != "head" ||
        t.header[2] != "row") {
        throw IoError("trajectory file " + path.string() + " has an unexpected header");
    }
    const std::size_t k = t.header.size() - 3;
    auto as_index = [&](const std::string& cell) -> std::size_t {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw IoError("trajectory file " + path.string() + " has a bad index '" +
                          cell + "'");
        }
    };
    TrajectoryLog log;
    std::vector<std::vector<std::vector<double>>> heads_values; // [snapshot][head][...]
    for (const std::vector<std::string>& r : t.rows) {
        const std::size_t step = as_index(r[0]);
        const std::size_t head = as_index(r[1]);
        if (log.steps.empty() || log.steps.back() != step) {
            log.steps.push_back(step);
            heads_values.emplace_back();
        }
        auto& snapshot = heads_values.back();
        if (head == snapshot.size()) snapshot.emplace_back();
        if (head >= snapshot.size()) {
            throw IoError("trajectory file " + path.string() + " is out of order");
        }
        for (std::size_t c = 0; c < k; ++c) {
            snapshot[head].push_back(
                io::parse_double(r[3 + c], "trajectory prediction"));
        }
    }
    if (heads_values.empty()) {
        throw IoError("trajectory file " + path.string() + " has no rows");
    }
    log.heads = heads_values[0].size();
    for (const auto& snapshot : heads_values) {
        if (snapshot.size() != log.heads) {
            throw IoError("trajectory file " + path.string() + " is ragged");
        }
        std::vector<Tensor> tensors;
        for (const std::vector<double>& values : snapshot) {
            if (values.size() % k != 0 || values.empty()) {
                throw IoError("trajectory file " + path.string() + " is ragged");
            }
            Tensor tensor({values.size() / k, k});
            for (std::size_t i = 0; i < values.size(); ++i) tensor[i] = values[i];
            tensors.push_back(std::move(tensor));
        }
        log.snapshots.push_back(std::move(tensors));
    }
    return log;
}

} // namespace

CommandOutcome run_landscape(const StudyConfig& config, const fs::path& checkpoint_path,
                             std::size_t resolution, double margin) {
    config.validate();
    const fs::path dir = config.output_dir;
    const std::string hash = study_config_hash(config);
    const std::string command = "landscape resolution=" + std::to_string(resolution) +
                                " margin=" + fd(margin);

    const fs::path trajectory_path = checkpoint_path.parent_path() / "trajectory.csv";
    std::error_code ec;
    const bool have_trajectory = fs::exists(trajectory_path, ec);
    std::vector<ManifestInput> inputs;
    if (fs::exists(checkpoint_path, ec)) inputs.push_back(digest_file(checkpoint_path));
    if (have_trajectory) inputs.push_back(digest_file(trajectory_path));
    if (auto files = manifest_covers(dir, "landscape", command, hash, inputs)) {
        return {true, *files};
    }

    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Network& net = ck.network;
    if (net.config.task != config.data.task() ||
        net.config.input_dim != config.data.feature_dim() ||
        net.config.output_dim != config.data.label_dim()) {
        throw ConfigError("checkpoint network does not match the data section");
    }

    const Dataset test = make_test_dataset(config.data);
    note(config, "landscape: " + std::to_string(resolution * resolution) + " cells");
    const GridReport grid = plane_section(net, test, resolution, margin,
                                          config.analysis.landscape_eval_limit);

    const std::size_t anchors = grid.anchors.size();
    io::Csv cells;
    cells.header = {"u", "v", "accuracy"};
    for (std::size_t a = 0; a < anchors; ++a) {
        cells.header.push_back("disagreement_" + std::to_string(a));
    }
    for (const GridCell& cell : grid.cells) {
        std::vector<std::string> row{fd(cell.u), fd(cell.v), fd(cell.accuracy)};
        for (double d : cell.disagreement) row.push_back(fd(d));
        cells.rows.push_back(std::move(row));
    }
    io::write_csv_atomic(dir / "grid.csv", cells);

    io::Csv anchor_table;
    anchor_table.header = {"anchor", "u", "v", "accuracy"};
    for (std::size_t a = 0; a < anchors; ++a) {
        anchor_table.header.push_back("disagreement_" + std::to_string(a));
    }
    json summary_anchors = json::array();
    for (std::size_t a = 0; a < anchors; ++a) {
        const GridCell& cell = grid.anchors[a];
        std::vector<std::string> row{std::to_string(a), fd(cell.u), fd(cell.v),
                                     fd(cell.accuracy)};
        for (double d : cell.disagreement) row.push_back(fd(d));
        anchor_table.rows.push_back(std::move(row));
        summary_anchors.push_back({{"u", cell.u},
                                   {"v", cell.v},
                                   {"accuracy", cell.accuracy},
                                   {"disagreement", cell.disagreement}});
    }
    io::write_csv_atomic(dir / "anchors.csv", anchor_table);

    const json summary{{"resolution", grid.resolution},
                       {"margin", grid.margin},
                       {"origin_distance", grid.origin_distance},
                       {"anchors", summary_anchors}};
    io::write_file_atomic(dir / "landscape.json", summary.dump(2) + "\n");

    std::vector<fs::path> produced{"grid.csv", "anchors.csv", "landscape.json"};
    if (have_trajectory) {
        const TrajectoryLog log = read_trajectory(trajectory_path);
        const std::vector<ProjectedPoint> points = project_trajectories(log);
        io::Csv projection;
        projection.header = {"head", "step", "c1", "c2"};
        for (const ProjectedPoint& p : points) {
            projection.rows.push_back(
                {std::to_string(p.head), std::to_string(p.step), fd(p.c1), fd(p.c2)});
        }
        io::write_csv_atomic(dir / "projection.csv", projection);
        produced.push_back("projection.csv");
    }

    const std::vector<std::uint64_t> seeds{config.data.seed};
    return {false, write_manifest(dir, "landscape", command, config, hash, seeds,
                                  produced, inputs)};
}

} // namespace mimo
