// Acceptance gate: eleven end-to-end checks, one pass/fail line each.
// Run with no arguments for all checks, or name them (c1 c4 ...) to filter.
// Tolerances and thresholds are pinned here on purpose; training setups are
// small enough for a single desktop core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "mimo/analysis.hpp"
#include "mimo/checkpoint.hpp"
#include "mimo/common.hpp"
#include "mimo/data.hpp"
#include "mimo/io.hpp"
#include "mimo/landscape.hpp"
#include "mimo/model.hpp"
#include "mimo/study.hpp"
#include "mimo/tensor.hpp"
#include "mimo/train.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace mimo;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fd(double v) { return io::format_double(v); }

NetworkConfig make_net(Architecture arch, Task task, std::size_t m,
                       std::size_t input_dim, std::vector<std::size_t> hidden,
                       std::size_t output_dim, std::uint64_t init_seed) {
    NetworkConfig c;
    c.architecture = arch;
    c.task = task;
    c.ensemble_size = m;
    c.input_dim = input_dim;
    c.hidden_widths = std::move(hidden);
    c.output_dim = output_dim;
    c.init_seed = init_seed;
    return c;
}

SamplingConfig make_sampling(const NetworkConfig& net, std::size_t batch, double rho,
                             std::uint64_t seed) {
    SamplingConfig s;
    s.batch_size = batch;
    s.ensemble_size = input_slots(net);
    s.input_repetition_probability = rho;
    s.batch_repetitions = 1;
    s.seed = seed;
    return s;
}

// SGD with the stock two-drop schedule (x0.1 at half, x0.01 at three
// quarters). A third drop to x0.001 tightens convergence where a criterion
// compares nearly identical predictors.
OptimizerConfig make_opt(double lr, std::size_t steps, double l1 = 0.0,
                         double l2 = 0.0, bool third_drop = false) {
    OptimizerConfig o;
    o.learning_rate = lr;
    o.steps = steps;
    o.l1_coefficient = l1;
    o.l2_coefficient = l2;
    o.schedule = {{steps / 2, 0.1}, {3 * steps / 4, 0.01}};
    if (third_drop) o.schedule.push_back({7 * steps / 8, 0.001});
    return o;
}

Network fit(const NetworkConfig& net, const Dataset& train_set, std::size_t batch,
            double rho, std::uint64_t sampling_seed, const OptimizerConfig& opt) {
    return train(build_network(net), train_set, make_sampling(net, batch, rho, sampling_seed),
                 opt)
        .network;
}

DataSpec blob_spec(std::size_t classes, double separation, std::size_t train_n,
                   std::size_t test_n) {
    DataSpec spec;
    spec.kind = DataKind::blobs;
    spec.seed = 1;
    spec.classes = classes;
    spec.input_dim = 2;
    spec.separation = separation;
    spec.train_n = train_n;
    spec.test_n = test_n;
    return spec;
}

double mean_of(const std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// c1: regression error decomposition trends across ensemble widths.

Outcome c1() {
    DataSpec spec;
    spec.kind = DataKind::regression;
    spec.seed = 1;
    spec.train_n = 64;
    spec.test_n = 3000;
    spec.noise_sd = 0.02;
    const Dataset test = make_test_dataset(spec);
    std::vector<double> targets(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) targets[i] = test.labels[i];

    const std::size_t replicates = 20;
    std::map<std::size_t, BiasVarianceReport> report;
    for (std::size_t m : {std::size_t{1}, std::size_t{3}}) {
        std::vector<std::vector<double>> preds(replicates,
                                               std::vector<double>(test.size()));
        for (std::size_t r = 0; r < replicates; ++r) {
            const Dataset train_set = make_train_dataset(spec, r);
            const NetworkConfig net = make_net(Architecture::mimo, Task::regression, m,
                                               1, {32, 128}, 1, 1000 + r);
            const Network trained =
                fit(net, train_set, 16, 0.0, 2000 + r, make_opt(0.1, 1800));
            const Evaluation ev = evaluate(trained, test);
            for (std::size_t i = 0; i < test.size(); ++i) preds[r][i] = ev.ensemble[i];
        }
        report[m] = decompose_bias_variance(preds, targets, m);
    }

    const BiasVarianceReport& one = report[1];
    const BiasVarianceReport& three = report[3];
    const double pooled_se =
        std::sqrt(one.bias_sq_se * one.bias_sq_se + three.bias_sq_se * three.bias_sq_se);
    const bool error_drops = three.error < one.error;
    const bool variance_drops = three.variance < one.variance;
    const bool bias_not_lower = three.bias_sq >= one.bias_sq - pooled_se;

    Outcome out;
    out.pass = error_drops && variance_drops && bias_not_lower;
    out.detail = "error " + fd(one.error) + "->" + fd(three.error) + ", variance " +
                 fd(one.variance) + "->" + fd(three.variance) + ", bias_sq " +
                 fd(one.bias_sq) + "->" + fd(three.bias_sq) + " (pooled se " +
                 fd(pooled_se) + ")";
    return out;
}

// ---------------------------------------------------------------------------
// c2: the empirical decomposition is an exact identity.

Outcome c2() {
    double worst = 0.0;

    auto check_identity = [&](const BiasVarianceReport& r) {
        const double gap = std::fabs(r.error - (r.bias_sq + r.variance));
        worst = std::max(worst, gap / std::max(1.0, r.error));
    };

    // Real training runs.
    DataSpec spec;
    spec.kind = DataKind::regression;
    spec.seed = 3;
    spec.train_n = 32;
    spec.test_n = 200;
    spec.noise_sd = 0.05;
    const Dataset test = make_test_dataset(spec);
    std::vector<double> targets(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) targets[i] = test.labels[i];
    for (std::size_t m : {std::size_t{1}, std::size_t{2}}) {
        std::vector<std::vector<double>> preds(4, std::vector<double>(test.size()));
        for (std::size_t r = 0; r < 4; ++r) {
            const Dataset train_set = make_train_dataset(spec, r);
            const NetworkConfig net =
                make_net(Architecture::mimo, Task::regression, m, 1, {8}, 1, 50 + r);
            const Network trained =
                fit(net, train_set, 8, 0.0, 60 + r, make_opt(0.05, 200));
            const Evaluation ev = evaluate(trained, test);
            for (std::size_t i = 0; i < test.size(); ++i) preds[r][i] = ev.ensemble[i];
        }
        check_identity(decompose_bias_variance(preds, targets, m));
    }

    // Random prediction tables.
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const std::size_t r_count = 2 + rng.index(5);
        const std::size_t points = 1 + rng.index(20);
        std::vector<std::vector<double>> preds(r_count, std::vector<double>(points));
        std::vector<double> targets2(points);
        for (auto& row : preds) {
            for (double& v : row) v = 6.0 * rng.uniform() - 3.0;
        }
        for (double& y : targets2) y = 2.0 * rng.uniform() - 1.0;
        check_identity(decompose_bias_variance(preds, targets2, 1));
    }

    Outcome out;
    out.pass = worst <= 1e-8;
    out.detail = "worst |error - bias_sq - variance| / max(1, error) = " + fd(worst);
    return out;
}

// ---------------------------------------------------------------------------
// c3: analytic gradients match central differences everywhere.

Tensor tensor_from(const std::vector<double>& flat, std::size_t& off,
                   std::vector<std::size_t> shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = flat[off + i];
    off += t.size();
    return t;
}

Outcome c3() {
    double worst = 0.0;
    std::string where = "none";
    auto check = [&](const std::string& name, const LossBuilder& builder,
                     const std::vector<double>& point) {
        const double err = gradient_check(builder, point, 1e-6);
        if (err > worst) {
            worst = err;
            where = name;
        }
    };

    Rng rng(33);
    auto fill = [&](std::vector<double>& v, double lo, double hi) {
        for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    };

    // Every op appears in at least one of these small closed-form graphs.
    {
        std::vector<double> p(2 * 3 + 3 * 2 + 2 * 2);
        fill(p, -1.0, 1.0);
        check("matmul/add/relu/mean", [](const std::vector<double>& flat) {
            LossBuild b;
            std::size_t off = 0;
            const NodeId a = b.graph.parameter(tensor_from(flat, off, {2, 3}));
            const NodeId w = b.graph.parameter(tensor_from(flat, off, {3, 2}));
            const NodeId c = b.graph.parameter(tensor_from(flat, off, {2, 2}));
            b.loss = b.graph.mean(b.graph.relu(b.graph.add(b.graph.matmul(a, w), c)));
            b.parameters = {a, w, c};
            return b;
        }, p);
    }
    {
        std::vector<double> p(2 * 2 + 2 * 2);
        fill(p, 0.3, 1.2); // clear of the relu/abs kinks
        check("concat/slice/subtract/square/abs/sum", [](const std::vector<double>& flat) {
            LossBuild b;
            std::size_t off = 0;
            const NodeId x = b.graph.parameter(tensor_from(flat, off, {2, 2}));
            const NodeId y = b.graph.parameter(tensor_from(flat, off, {2, 2}));
            const NodeId joined = b.graph.concat(x, y);
            const NodeId left = b.graph.slice(joined, 0, 2);
            const NodeId right = b.graph.slice(joined, 2, 2);
            const NodeId diff = b.graph.subtract(left, b.graph.abs(right));
            b.loss = b.graph.sum(b.graph.square(diff));
            b.parameters = {x, y};
            return b;
        }, p);
    }
    {
        std::vector<double> p(3 * 4);
        fill(p, -2.0, 2.0);
        check("softmax/log/multiply/scale", [](const std::vector<double>& flat) {
            LossBuild b;
            std::size_t off = 0;
            const NodeId z = b.graph.parameter(tensor_from(flat, off, {3, 4}));
            Tensor weights({3, 4});
            for (std::size_t i = 0; i < weights.size(); ++i) {
                weights[i] = 0.1 * static_cast<double>(i + 1);
            }
            const NodeId probs = b.graph.softmax(z);
            const NodeId weighted =
                b.graph.multiply(b.graph.log(probs), b.graph.constant(weights));
            b.loss = b.graph.scale(b.graph.sum(weighted), -0.25);
            b.parameters = {z};
            return b;
        }, p);
    }
    {
        std::vector<double> p(3 * 4);
        fill(p, -2.0, 2.0);
        check("log_softmax nll", [](const std::vector<double>& flat) {
            LossBuild b;
            std::size_t off = 0;
            const NodeId z = b.graph.parameter(tensor_from(flat, off, {3, 4}));
            Tensor onehot({3, 4});
            onehot.at(0, 1) = 1.0;
            onehot.at(1, 3) = 1.0;
            onehot.at(2, 0) = 1.0;
            const NodeId picked =
                b.graph.multiply(b.graph.log_softmax(z), b.graph.constant(onehot));
            b.loss = b.graph.scale(b.graph.sum(picked), -1.0 / 3.0);
            b.parameters = {z};
            return b;
        }, p);
    }

    // Whole-network objectives at 25 random configurations.
    for (int t = 0; t < 25; ++t) {
        const std::size_t m = 1 + rng.index(3);
        const std::size_t d = 1 + rng.index(2);
        const std::size_t k = 2 + rng.index(2);
        const Task task = t % 2 == 0 ? Task::classification : Task::regression;
        const std::vector<std::size_t> hidden =
            t % 3 == 0 ? std::vector<std::size_t>{3, 4} : std::vector<std::size_t>{4};
        const NetworkConfig cfg = make_net(Architecture::mimo, task, m, d, hidden,
                                           task == Task::regression ? 1 : k,
                                           400 + static_cast<std::uint64_t>(t));

        MimoBatch batch;
        for (std::size_t slot = 0; slot < m; ++slot) {
            Tensor x({2, d});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * rng.uniform() - 1.0;
            Tensor y = task == Task::regression ? Tensor({2, 1}) : Tensor({2, k});
            if (task == Task::regression) {
                for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 * rng.uniform() - 1.0;
            } else {
                y.at(0, rng.index(k)) = 1.0;
                y.at(1, rng.index(k)) = 1.0;
            }
            batch.features.push_back(std::move(x));
            batch.labels.push_back(std::move(y));
            batch.indices.push_back({0, 1});
        }

        const Network proto = build_network(cfg);
        std::vector<double> point;
        for (const auto& p : proto.parameters) {
            for (double v : p.value.values()) point.push_back(v);
        }

        check("network objective " + std::to_string(t),
              [cfg, batch](const std::vector<double>& flat) {
                  LossBuild b;
                  Network net = build_network(cfg);
                  std::size_t off = 0;
                  std::vector<NodeId> params;
                  for (auto& p : net.parameters) {
                      for (std::size_t i = 0; i < p.value.size(); ++i) {
                          p.value[i] = flat[off + i];
                      }
                      off += p.value.size();
                      params.push_back(b.graph.parameter(p.value));
                  }
                  b.loss = compute_loss(b.graph, net, params, batch, 0.01, 0.01);
                  b.parameters = params;
                  return b;
              },
              point);
    }

    Outcome out;
    out.pass = worst < 1e-5;
    out.detail = "max relative gradient error " + fd(worst) + " (" + where + ")";
    return out;
}

// ---------------------------------------------------------------------------
// c4: head diversity ordering across architectures.

Outcome c4() {
    // Overlapping classes and a small training set give independently trained
    // members room to overfit differently; weight decay makes the shared-trunk
    // heads of the naive architecture contract to one predictor.
    const DataSpec spec = blob_spec(4, 1.5, 128, 1024);
    const Dataset train_set = make_train_dataset(spec, 0);
    const Dataset test = make_test_dataset(spec);

    std::map<Architecture, std::vector<double>> disagreement;
    for (std::size_t seed = 0; seed < 5; ++seed) {
        for (Architecture arch : {Architecture::naive_multihead, Architecture::mimo,
                                  Architecture::deep_ensemble}) {
            const NetworkConfig net = make_net(arch, Task::classification, 3, 2, {16},
                                               4, 100 + seed);
            const Network trained = fit(net, train_set, 32, 0.0, 200 + seed,
                                        make_opt(0.1, 3000, 0.0, 0.02, true));
            disagreement[arch].push_back(
                pairwise_diversity(trained, test, DiversityMetric::disagreement).mean);
        }
    }

    const double naive = mean_of(disagreement[Architecture::naive_multihead]);
    const double mimo = mean_of(disagreement[Architecture::mimo]);
    const double deep = mean_of(disagreement[Architecture::deep_ensemble]);

    Outcome out;
    out.pass = naive <= 0.1 * deep && mimo >= 0.5 * deep;
    out.detail = "mean disagreement: naive " + fd(naive) + ", multi-input " + fd(mimo) +
                 ", deep ensemble " + fd(deep);
    return out;
}

// ---------------------------------------------------------------------------
// c5: trained heads ignore their companion inputs; untrained heads do not.

struct InvarianceTriple {
    double dis = 0.0;
    double kl = 0.0;
    double cos = 0.0;
};

InvarianceTriple invariance_of(const Network& net, const Dataset& test,
                               std::uint64_t seed) {
    InvarianceTriple t;
    Rng r1 = Rng(seed).derive(10);
    Rng r2 = Rng(seed).derive(11);
    Rng r3 = Rng(seed).derive(12);
    t.dis = invariance(net, test, DiversityMetric::disagreement, 8, r1).value;
    t.kl = invariance(net, test, DiversityMetric::kl, 8, r2).value;
    t.cos = invariance(net, test, DiversityMetric::cosine, 8, r3).value;
    return t;
}

Outcome c5() {
    const DataSpec spec = blob_spec(4, 3.0, 256, 512);
    const Dataset train_set = make_train_dataset(spec, 0);
    const Dataset test = make_test_dataset(spec);

    InvarianceTriple trained_sum, fresh_sum;
    for (std::size_t seed = 0; seed < 5; ++seed) {
        const NetworkConfig cfg = make_net(Architecture::mimo, Task::classification, 3,
                                           2, {32, 32}, 4, 300 + seed);
        const Network fresh = build_network(cfg);
        const Network trained =
            fit(cfg, train_set, 32, 0.0, 400 + seed, make_opt(0.1, 1500));

        const InvarianceTriple t = invariance_of(trained, test, 500 + seed);
        const InvarianceTriple f = invariance_of(fresh, test, 500 + seed);
        trained_sum.dis += t.dis / 5.0;
        trained_sum.kl += t.kl / 5.0;
        trained_sum.cos += t.cos / 5.0;
        fresh_sum.dis += f.dis / 5.0;
        fresh_sum.kl += f.kl / 5.0;
        fresh_sum.cos += f.cos / 5.0;
    }

    const bool trained_ok = trained_sum.dis <= 0.05 && trained_sum.kl <= 0.05 &&
                            trained_sum.cos >= 0.98;
    const bool fresh_fails = !(fresh_sum.dis <= 0.05 && fresh_sum.kl <= 0.05 &&
                               fresh_sum.cos >= 0.98);

    Outcome out;
    out.pass = trained_ok && fresh_fails;
    out.detail = "trained dis/kl/cos " + fd(trained_sum.dis) + "/" + fd(trained_sum.kl) +
                 "/" + fd(trained_sum.cos) + "; untrained " + fd(fresh_sum.dis) + "/" +
                 fd(fresh_sum.kl) + "/" + fd(fresh_sum.cos);
    return out;
}

// ---------------------------------------------------------------------------
// c6: training pushes hidden units toward exclusive slot ownership.

double high_dominance_fraction(const Network& net, const Dataset& data,
                               std::uint64_t seed) {
    ConditionalVarianceConfig cfg;
    cfg.outer = 32;
    cfg.inner = 0;
    Rng rng(seed);
    const ConditionalVarianceReport report = conditional_variances(net, data, cfg, rng);
    std::size_t high = 0;
    for (const auto& unit : report.units) {
        if (unit.dominance_share >= 0.9) ++high;
    }
    return static_cast<double>(high) / static_cast<double>(report.units.size());
}

Outcome c6() {
    // Estimator cross-check first: exhaustive enumeration against independent
    // row-at-a-time loops on a four-point dataset.
    double oracle_gap = 0.0;
    {
        const NetworkConfig cfg =
            make_net(Architecture::mimo, Task::regression, 2, 1, {2, 2}, 1, 7);
        const Network net = build_network(cfg);
        Dataset data;
        data.task = Task::regression;
        data.split = Split::train;
        data.features = Tensor({4, 1});
        data.labels = Tensor({4, 1});
        const double xs[4] = {0.0, 0.5, 1.25, -2.0};
        for (std::size_t i = 0; i < 4; ++i) data.features[i] = xs[i];

        ConditionalVarianceConfig cv;
        cv.exhaustive = true;
        Rng rng(1);
        const ConditionalVarianceReport report = conditional_variances(net, data, cv, rng);

        for (std::size_t u = 0; u < report.units.size(); ++u) {
            for (std::size_t slot = 0; slot < 2; ++slot) {
                double acc = 0.0;
                for (std::size_t f = 0; f < 4; ++f) {
                    std::vector<double> vals(4);
                    for (std::size_t i = 0; i < 4; ++i) {
                        std::vector<Tensor> inputs(2, Tensor({1, 1}));
                        inputs[slot][0] = xs[i];
                        inputs[1 - slot][0] = xs[f];
                        vals[i] = record_preactivations(net, inputs).values.at(0, u);
                    }
                    double mean = 0.0;
                    for (double v : vals) mean += v;
                    mean /= 4.0;
                    double var = 0.0;
                    for (double v : vals) var += (v - mean) * (v - mean);
                    acc += var / 4.0;
                }
                oracle_gap = std::max(
                    oracle_gap, std::fabs(report.units[u].per_slot[slot] - acc / 4.0));
            }
        }
    }

    const DataSpec spec = blob_spec(4, 3.0, 256, 512);
    const Dataset train_set = make_train_dataset(spec, 0);

    // A touch of l1 prunes the cross-slot first-layer weights that plain SGD
    // leaves merely small, sharpening per-unit slot ownership.
    double mean_gain = 0.0;
    for (std::size_t seed = 0; seed < 5; ++seed) {
        const NetworkConfig cfg = make_net(Architecture::mimo, Task::classification, 2,
                                           2, {32}, 4, 600 + seed);
        const double before =
            high_dominance_fraction(build_network(cfg), train_set, 700 + seed);
        const Network trained = fit(cfg, train_set, 32, 0.0, 800 + seed,
                                    make_opt(0.1, 6000, 0.002, 0.0, true));
        const double after = high_dominance_fraction(trained, train_set, 700 + seed);
        mean_gain += (after - before) / 5.0;
    }

    Outcome out;
    out.pass = oracle_gap <= 1e-12 && mean_gain >= 0.3;
    out.detail = "oracle gap " + fd(oracle_gap) + ", mean gain in units with share >= 0.9: " +
                 fd(mean_gain);
    return out;
}

// ---------------------------------------------------------------------------
// c7: metric closed forms.

Outcome c7() {
    bool pass = true;
    std::ostringstream detail;

    Rng rng(101);
    double worst_self = 0.0;
    for (int t = 0; t < 10000; ++t) {
        std::vector<double> p(5);
        double total = 0.0;
        for (double& v : p) {
            v = rng.uniform() + 1e-6;
            total += v;
        }
        for (double& v : p) v /= total;
        worst_self = std::max(worst_self, std::fabs(disagreement(p.data(), p.data(), 5)));
        worst_self = std::max(worst_self, std::fabs(kl_divergence(p.data(), p.data(), 5)));
        worst_self =
            std::max(worst_self, std::fabs(cosine_similarity(p.data(), p.data(), 5) - 1.0));
    }
    pass = pass && worst_self <= 1e-12;

    const std::vector<double> point{1.0, 0.0};
    const std::vector<double> half{0.5, 0.5};
    const double kl_gap =
        std::fabs(kl_divergence(point.data(), half.data(), 2) - std::log(2.0));
    pass = pass && kl_gap <= 1e-12;

    // One occupied bin at confidence 0.7 with accuracy one half.
    Dataset data;
    data.task = Task::classification;
    data.split = Split::test;
    data.features = Tensor({4, 1});
    data.labels = Tensor({4, 2});
    data.labels.at(0, 0) = 1.0;
    data.labels.at(1, 0) = 1.0;
    data.labels.at(2, 1) = 1.0;
    data.labels.at(3, 1) = 1.0;
    Tensor probs({4, 2});
    for (std::size_t r = 0; r < 4; ++r) {
        probs.at(r, 0) = 0.7;
        probs.at(r, 1) = 0.3;
    }
    const double ece_gap = std::fabs(metrics_from_probs(probs, data, 15).ece - 0.2);
    pass = pass && ece_gap <= 1e-12;

    Dataset four;
    four.task = Task::classification;
    four.split = Split::test;
    four.features = Tensor({3, 1});
    four.labels = Tensor({3, 4});
    four.labels.at(0, 0) = 1.0;
    four.labels.at(1, 2) = 1.0;
    four.labels.at(2, 3) = 1.0;
    Tensor uniform({3, 4});
    for (std::size_t i = 0; i < uniform.size(); ++i) uniform[i] = 0.25;
    const double nll_gap =
        std::fabs(metrics_from_probs(uniform, four, 15).nll - std::log(4.0));
    pass = pass && nll_gap <= 1e-12;

    detail << "self gap " << fd(worst_self) << ", kl gap " << fd(kl_gap) << ", ece gap "
           << fd(ece_gap) << ", nll gap " << fd(nll_gap);
    return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// c8: batch sampler contracts.

Outcome c8() {
    const Dataset data = gen_blobs(16, 4, 2, 3.0, 2, Split::train);

    // Companion-slot marginal stays uniform under input repetition.
    SamplingConfig s;
    s.batch_size = 1000;
    s.ensemble_size = 2;
    s.input_repetition_probability = 0.5;
    s.seed = 11;
    Rng rng(s.seed);
    std::vector<std::size_t> counts(16, 0);
    for (int b = 0; b < 100; ++b) {
        const MimoBatch batch = sample_mimo_batch(data, s, rng);
        for (std::size_t row = 0; row < batch.rows(); ++row) ++counts[batch.indices[1][row]];
    }
    const double expected = 100000.0 / 16.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        const double d = static_cast<double>(counts[i]) - expected;
        chi2 += d * d / expected;
    }
    const double critical = support::chi_square_critical(15, 3.0902); // alpha 0.001
    const bool marginal_ok = chi2 < critical;

    // Full repetition copies slot 0 exactly.
    SamplingConfig copy = s;
    copy.batch_size = 256;
    copy.input_repetition_probability = 1.0;
    Rng rng2(3);
    const MimoBatch copied = sample_mimo_batch(data, copy, rng2);
    bool copies_ok = copied.indices[0] == copied.indices[1] &&
                     copied.features[0].values() == copied.features[1].values();

    // Batch repetition scales every multiplicity exactly.
    SamplingConfig once = s;
    once.batch_size = 64;
    once.input_repetition_probability = 0.25;
    SamplingConfig thrice = once;
    thrice.batch_repetitions = 3;
    Rng rng3(7), rng4(7);
    const MimoBatch base = sample_mimo_batch(data, once, rng3);
    const MimoBatch tripled = sample_mimo_batch(data, thrice, rng4);
    bool reps_ok = tripled.rows() == 3 * base.rows();
    for (std::size_t slot = 0; slot < 2 && reps_ok; ++slot) {
        std::map<std::size_t, std::size_t> base_counts, tripled_counts;
        for (std::size_t i = 0; i < base.rows(); ++i) ++base_counts[base.indices[slot][i]];
        for (std::size_t i = 0; i < tripled.rows(); ++i) {
            ++tripled_counts[tripled.indices[slot][i]];
        }
        for (const auto& [row, count] : base_counts) {
            if (tripled_counts[row] != 3 * count) reps_ok = false;
        }
        if (tripled_counts.size() != base_counts.size()) reps_ok = false;
    }

    Outcome out;
    out.pass = marginal_ok && copies_ok && reps_ok;
    out.detail = "chi2 " + fd(chi2) + " (critical " + fd(critical) + "), full-copy " +
                 (copies_ok ? "exact" : "BROKEN") + ", repetition " +
                 (reps_ok ? "exact" : "BROKEN");
    return out;
}

// ---------------------------------------------------------------------------
// c9: training-configuration trends.

Outcome c9() {
    std::ostringstream detail;

    // (a) ensemble NLL over subnetwork counts has its minimum above one.
    const DataSpec scarce = blob_spec(4, 2.0, 128, 512);
    const Dataset scarce_train = make_train_dataset(scarce, 0);
    const Dataset scarce_test = make_test_dataset(scarce);
    std::vector<double> nll_by_m;
    for (std::size_t m = 1; m <= 4; ++m) {
        double total = 0.0;
        for (std::size_t seed = 0; seed < 3; ++seed) {
            const NetworkConfig cfg = make_net(Architecture::mimo, Task::classification,
                                               m, 2, {32}, 4, 900 + seed);
            const Network net =
                fit(cfg, scarce_train, 32, 0.0, 950 + seed, make_opt(0.1, 1500));
            const Evaluation ev = evaluate(net, scarce_test);
            total += metrics_from_probs(ev.ensemble, scarce_test, 15).nll;
        }
        nll_by_m.push_back(total / 3.0);
    }
    const double best_multi = *std::min_element(nll_by_m.begin() + 1, nll_by_m.end());
    const bool nll_ok = best_multi < nll_by_m[0];
    detail << "nll by M {" << fd(nll_by_m[0]) << ", " << fd(nll_by_m[1]) << ", "
           << fd(nll_by_m[2]) << ", " << fd(nll_by_m[3]) << "}";

    // (b) on a thin network, moderate input repetition beats both extremes.
    const DataSpec thin_spec = blob_spec(4, 2.0, 256, 512);
    const Dataset thin_train = make_train_dataset(thin_spec, 0);
    const Dataset thin_test = make_test_dataset(thin_spec);
    std::map<double, double> acc_by_rho;
    for (double rho : {0.0, 0.5, 1.0}) {
        double total = 0.0;
        for (std::size_t seed = 0; seed < 5; ++seed) {
            const NetworkConfig cfg = make_net(Architecture::mimo, Task::classification,
                                               3, 2, {8}, 4, 1100 + seed);
            const Network net =
                fit(cfg, thin_train, 32, rho, 1200 + seed, make_opt(0.1, 1500));
            const Evaluation ev = evaluate(net, thin_test);
            total += metrics_from_probs(ev.ensemble, thin_test, 15).accuracy;
        }
        acc_by_rho[rho] = total / 5.0;
    }
    const bool rho_ok =
        acc_by_rho[0.5] >= acc_by_rho[0.0] && acc_by_rho[0.5] >= acc_by_rho[1.0];
    detail << "; accuracy by rho {" << fd(acc_by_rho[0.0]) << ", " << fd(acc_by_rho[0.5])
           << ", " << fd(acc_by_rho[1.0]) << "}";

    // (c) an l1 sweep prunes weights monotonically and eventually favors M=1.
    const DataSpec l1_spec = blob_spec(4, 2.5, 256, 512);
    const Dataset l1_train = make_train_dataset(l1_spec, 0);
    const Dataset l1_test = make_test_dataset(l1_spec);
    const std::vector<double> lambdas{0.0, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    std::vector<double> nonzero3, acc3, acc1;
    for (double lambda : lambdas) {
        double nz = 0.0, a3 = 0.0, a1 = 0.0;
        for (std::size_t seed = 0; seed < 3; ++seed) {
            const NetworkConfig three = make_net(Architecture::mimo, Task::classification,
                                                 3, 2, {16}, 4, 1300 + seed);
            const Network net3 =
                fit(three, l1_train, 32, 0.0, 1400 + seed, make_opt(0.1, 2000, lambda));
            nz += nonzero_weight_fraction(net3, 1e-4) / 3.0;
            a3 += metrics_from_probs(evaluate(net3, l1_test).ensemble, l1_test, 15)
                      .accuracy /
                  3.0;

            const NetworkConfig one = make_net(Architecture::mimo, Task::classification,
                                               1, 2, {16}, 4, 1300 + seed);
            const Network net1 =
                fit(one, l1_train, 32, 0.0, 1400 + seed, make_opt(0.1, 2000, lambda));
            a1 += metrics_from_probs(evaluate(net1, l1_test).ensemble, l1_test, 15)
                      .accuracy /
                  3.0;
        }
        nonzero3.push_back(nz);
        acc3.push_back(a3);
        acc1.push_back(a1);
    }
    bool prunes = nonzero3.back() < nonzero3.front();
    for (std::size_t i = 1; i < nonzero3.size(); ++i) {
        if (nonzero3[i] > nonzero3[i - 1] + 0.02) prunes = false;
    }
    bool crosses = acc3.front() >= acc1.front();
    bool crossed_below = false;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (acc3[i] < acc1[i]) crossed_below = true;
    }
    const bool l1_ok = prunes && crosses && crossed_below;
    detail << "; nonzero fraction " << fd(nonzero3.front()) << "->" << fd(nonzero3.back())
           << ", accuracy M3 vs M1 at last lambda " << fd(acc3.back()) << " vs "
           << fd(acc1.back());

    Outcome out;
    out.pass = nll_ok && rho_ok && l1_ok;
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// c10: weight-plane sections and slice round-trips.

Outcome c10() {
    const DataSpec spec = blob_spec(4, 3.0, 256, 512);
    const Dataset train_set = make_train_dataset(spec, 0);
    const Dataset test = make_test_dataset(spec);

    // Bit-exact slice round-trips on an untrained network.
    const NetworkConfig cfg =
        make_net(Architecture::mimo, Task::classification, 3, 2, {16}, 4, 1500);
    const Network fresh = build_network(cfg);
    bool roundtrip = true;
    for (std::size_t m = 0; m < 3; ++m) {
        SubnetworkSlice slice = extract_slice(fresh, m);
        const Network back = install_slice(fresh, slice);
        for (std::size_t i = 0; i < fresh.parameters.size(); ++i) {
            if (!(back.parameters[i].value.values() ==
                  fresh.parameters[i].value.values())) {
                roundtrip = false;
            }
        }
        for (double& v : slice.values) v += 0.5;
        if (!(extract_slice(install_slice(fresh, slice), m).values == slice.values)) {
            roundtrip = false;
        }
    }

    // Anchors of a trained section equal the standalone subnetworks.
    const Network trained = fit(cfg, train_set, 32, 0.0, 1600, make_opt(0.1, 1500));
    const GridReport section = plane_section(trained, test, 5, 0.2);
    double anchor_gap = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
        const Network sub = subnetwork_model(trained, extract_slice(trained, m));
        const Tensor probs = forward_tiled(sub, test.features)[0];
        double correct = 0.0;
        for (std::size_t r = 0; r < test.size(); ++r) {
            if (argmax_index(probs.data() + r * 4, 4) == test.label_class(r)) {
                correct += 1.0;
            }
        }
        anchor_gap = std::max(anchor_gap,
                              std::fabs(section.anchors[m].accuracy -
                                        correct / static_cast<double>(test.size())));
    }

    double mimo_disagreement = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (i != j) {
                mimo_disagreement =
                    std::max(mimo_disagreement, section.anchors[i].disagreement[j]);
            }
        }
    }

    const NetworkConfig naive_cfg = make_net(Architecture::naive_multihead,
                                             Task::classification, 3, 2, {16}, 4, 1500);
    const Network naive =
        fit(naive_cfg, train_set, 32, 0.0, 1600, make_opt(0.1, 1500));
    const GridReport naive_section = plane_section(naive, test, 5, 0.2);
    double naive_disagreement = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (i != j) {
                naive_disagreement =
                    std::max(naive_disagreement, naive_section.anchors[i].disagreement[j]);
            }
        }
    }

    Outcome out;
    out.pass = roundtrip && anchor_gap <= 1e-12 && mimo_disagreement > 0.01 &&
               naive_disagreement < 0.01;
    out.detail = std::string("round-trip ") + (roundtrip ? "exact" : "BROKEN") +
                 ", anchor gap " + fd(anchor_gap) + ", multi-input disagreement " +
                 fd(mimo_disagreement) + ", naive disagreement " + fd(naive_disagreement);
    return out;
}

// ---------------------------------------------------------------------------
// c11: byte determinism and documented exit codes, through the real binary.

std::string cli_path() {
#ifdef MIMO_CLI_PATH
    return MIMO_CLI_PATH;
#else
    const char* env = std::getenv("MIMO_CLI_PATH");
    return env == nullptr ? "" : env;
#endif
}

int run_cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = "\"" + cli_path() + "\" " + args + " > \"" +
                            (dir / "stdout.txt").string() + "\" 2> \"" +
                            (dir / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json cli_config(const fs::path& out) {
    return json{
        {"data",
         {{"kind", "blobs"},
          {"seed", 1},
          {"train_n", 64},
          {"test_n", 64},
          {"classes", 3},
          {"input_dim", 2},
          {"separation", 3.0}}},
        {"network",
         {{"architecture", "mimo"},
          {"ensemble_size", 3},
          {"hidden_widths", json::array({8})},
          {"init_seed", 1}}},
        {"sampling", {{"batch_size", 16}, {"seed", 1}}},
        {"optimizer", {{"learning_rate", 0.1}, {"steps", 40}}},
        {"output_dir", out.string()},
    };
}

Outcome c11() {
    support::TempDir dir("acceptance-cli");
    bool pass = true;
    std::ostringstream detail;

    // Two fresh runs of the same config are byte-identical.
    const fs::path out_a = dir.path() / "a";
    const fs::path out_b = dir.path() / "b";
    const fs::path cfg_a = dir.path() / "a.json";
    const fs::path cfg_b = dir.path() / "b.json";
    io::write_file_atomic(cfg_a, cli_config(out_a).dump(2) + "\n");
    io::write_file_atomic(cfg_b, cli_config(out_b).dump(2) + "\n");
    pass = pass && run_cli(dir.path(), "train -c \"" + cfg_a.string() + "\"") == 0;
    pass = pass && run_cli(dir.path(), "train -c \"" + cfg_b.string() + "\"") == 0;
    pass = pass && run_cli(dir.path(), "analyze metrics -c \"" + cfg_a.string() + "\"") == 0;
    pass = pass && run_cli(dir.path(), "analyze metrics -c \"" + cfg_b.string() + "\"") == 0;
    const bool bytes_equal =
        pass &&
        io::read_file(out_a / "loss.csv") == io::read_file(out_b / "loss.csv") &&
        io::read_file(out_a / "checkpoint.bin") == io::read_file(out_b / "checkpoint.bin") &&
        io::read_file(out_a / "metrics.csv") == io::read_file(out_b / "metrics.csv");
    pass = pass && bytes_equal;
    detail << "byte-identical outputs " << (bytes_equal ? "yes" : "NO");

    // Checkpoint round-trip is bit exact in process.
    const NetworkConfig cfg =
        make_net(Architecture::mimo, Task::classification, 3, 2, {8}, 3, 77);
    const Network net = build_network(cfg);
    const fs::path ckpt = dir.path() / "roundtrip.bin";
    save_checkpoint(net, 3, 21, ckpt);
    const Checkpoint loaded = load_checkpoint(ckpt);
    bool roundtrip = loaded.step == 3 && loaded.sampler_seed == 21;
    for (std::size_t i = 0; i < net.parameters.size() && roundtrip; ++i) {
        roundtrip = loaded.network.parameters[i].value.values() ==
                    net.parameters[i].value.values();
    }
    pass = pass && roundtrip;
    detail << ", checkpoint round-trip " << (roundtrip ? "exact" : "BROKEN");

    // Documented exit codes for malformed inputs.
    const fs::path bad_json = dir.path() / "bad.json";
    io::write_file_atomic(bad_json, "{ not json\n");
    const int malformed_config = run_cli(dir.path(), "train -c \"" + bad_json.string() + "\"");
    json bad_rho_json = cli_config(dir.path() / "c");
    bad_rho_json["sampling"]["input_repetition_probability"] = 1.3;
    const fs::path bad_rho = dir.path() / "rho.json";
    io::write_file_atomic(bad_rho, bad_rho_json.dump(2) + "\n");
    const int config_error = run_cli(dir.path(), "train -c \"" + bad_rho.string() + "\"");

    const std::string good_bytes = io::read_file(out_a / "checkpoint.bin");
    const fs::path cut = dir.path() / "cut.bin";
    io::write_file_atomic(cut, good_bytes.substr(0, 12));
    const int broken_checkpoint =
        run_cli(dir.path(), "analyze metrics -c \"" + cfg_a.string() +
                                "\" --checkpoint \"" + cut.string() + "\"");
    const int missing_config =
        run_cli(dir.path(), "train -c \"" + (dir.path() / "absent.json").string() + "\"");

    const bool codes_ok = malformed_config == 2 && config_error == 2 &&
                          broken_checkpoint == 4 && missing_config == 4;
    pass = pass && codes_ok;
    detail << ", exit codes " << malformed_config << "/" << config_error << "/"
           << broken_checkpoint << "/" << missing_config << " (want 2/2/4/4)";

    return {pass, detail.str()};
}

} // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<Outcome()>> criteria{
        {"c1", c1}, {"c2", c2}, {"c3", c3}, {"c4", c4},  {"c5", c5},  {"c6", c6},
        {"c7", c7}, {"c8", c8}, {"c9", c9}, {"c10", c10}, {"c11", c11},
    };

    std::vector<std::string> wanted;
    for (int i = 1; i < argc; ++i) wanted.emplace_back(argv[i]);
    if (wanted.empty()) {
        for (int i = 1; i <= 11; ++i) wanted.push_back("c" + std::to_string(i));
    }

    set_workers(1);
    bool all_pass = true;
    for (const std::string& name : wanted) {
        const auto it = criteria.find(name);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion '" << name << "'\n";
            return 2;
        }
        const auto started = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = it->second();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                .count();
        std::cout << (outcome.pass ? "PASS " : "FAIL ") << name << ": " << outcome.detail
                  << " [" << fd(std::round(seconds * 10.0) / 10.0) << "s]\n";
        if (!outcome.pass) all_pass = false;
    }
    return all_pass ? 0 : 1;
}
