#include "mimo/train.hpp"

#include <cmath>
#include <limits>

namespace mimo {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("optimizer.learning_rate must be positive");
    }
    if (l1_coefficient < 0.0) throw ConfigError("optimizer.l1 must be >= 0");
    if (l2_coefficient < 0.0) throw ConfigError("optimizer.l2 must be >= 0");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i].multiplier > 0.0) || !std::isfinite(schedule[i].multiplier)) {
            throw ConfigError("optimizer.schedule multipliers must be positive");
        }
        if (i > 0 && schedule[i].step <= schedule[i - 1].step) {
            throw ConfigError("optimizer.schedule steps must be strictly increasing");
        }
    }
}

double OptimizerConfig::rate_at(std::size_t step) const {
    double mult = 1.0;
    for (const auto& entry : schedule) {
        if (entry.step <= step) mult = entry.multiplier;
        else break;
    }
    return learning_rate * mult;
}

NodeId compute_loss(Graph& g, const Network& net, const std::vector<NodeId>& params,
                    const MimoBatch& batch, double l1, double l2) {
    const NetworkConfig& c = net.config;
    if (c.architecture == Architecture::deep_ensemble) {
        throw ConfigError("compute_loss: deep_ensemble members train separately");
    }
    const std::size_t slots = input_slots(c);
    if (batch.slots() != slots) {
        throw ConfigError("compute_loss: batch has " + std::to_string(batch.slots()) +
                          " slots, network takes " + std::to_string(slots));
    }
    const double b = static_cast<double>(batch.rows());

    std::vector<NodeId> inputs;
    for (const Tensor& x : batch.features) inputs.push_back(g.constant(x));
    GraphForward fwd = forward_graph(g, net, params, inputs);

    NodeId total = 0;
    bool have_total = false;
    for (std::size_t m = 0; m < fwd.heads.size(); ++m) {
        // Naive multihead and standard nets carry a single batch slot whose
        // label every head predicts.
        const Tensor& y = batch.labels[slots == 1 ? 0 : m];
        NodeId term = 0;
        try {
            if (c.task == Task::classification) {
                NodeId lp = g.log_softmax(fwd.heads[m]);
                term = g.scale(g.sum(g.multiply(lp, g.constant(y))), -1.0 / b);
            } else {
                term = g.mean(g.square(g.subtract(fwd.heads[m], g.constant(y))));
            }
        } catch (const NumericError& e) {
            throw NumericError("head " + std::to_string(m) + ": " + e.what());
        }
        total = have_total ? g.add(total, term) : term;
        have_total = true;
    }

    if (l2 > 0.0) {
        for (NodeId p : params) {
            total = g.add(total, g.scale(g.sum(g.square(p)), l2));
        }
    }
    if (l1 > 0.0) {
        for (NodeId p : params) {
            total = g.add(total, g.scale(g.sum(g.abs(p)), l1));
        }
    }
    return total;
}

double loss_value(const Network& net, const MimoBatch& batch, double l1, double l2) {
    Graph g;
    std::vector<NodeId> params;
    for (const auto& p : net.parameters) params.push_back(g.constant(p.value));
    return g.value(compute_loss(g, net, params, batch, l1, l2))[0];
}

namespace {

std::vector<Tensor> snapshot_predictions(const Network& net, const Dataset& data) {
    return forward_tiled(net, data.features);
}

TrainResult train_single(Network net, const Dataset& data,
                         const SamplingConfig& sampling, const OptimizerConfig& opt,
                         const Dataset* trajectory_data) {
    Rng rng(sampling.seed);
    TrainResult result;
    result.loss_curve.reserve(opt.steps);

    const bool snapshots = opt.snapshot_every > 0 && trajectory_data != nullptr;
    auto take_snapshot = [&](std::size_t step) {
        result.trajectory.steps.push_back(step);
        result.trajectory.snapshots.push_back(snapshot_predictions(net, *trajectory_data));
    };
    if (snapshots) {
        result.trajectory.heads = net.config.ensemble_size;
        take_snapshot(0);
    }

    double last_finite = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t step = 0; step < opt.steps; ++step) {
        try {
            MimoBatch batch = sample_mimo_batch(data, sampling, rng);
            Graph g;
            std::vector<NodeId> params;
            params.reserve(net.parameters.size());
            for (const auto& p : net.parameters) params.push_back(g.parameter(p.value));
            NodeId loss = compute_loss(g, net, params, batch,
                                       opt.l1_coefficient, opt.l2_coefficient);
            result.loss_curve.push_back(g.value(loss)[0]);
            g.backpropagate(loss);

            const double rate = opt.rate_at(step);
            for (std::size_t i = 0; i < params.size(); ++i) {
                const Tensor& grad = g.gradient(params[i]);
                Tensor& value = net.parameters[i].value;
                for (std::size_t j = 0; j < value.size(); ++j) {
                    value[j] -= rate * grad[j];
                    if (!std::isfinite(value[j])) {
                        throw NumericError("parameter '" + net.parameters[i].name +
                                           "' became non-finite");
                    }
                }
            }
        } catch (const NumericError& e) {
            std::string last = std::isnan(last_finite)
                                   ? std::string("none")
                                   : std::to_string(last_finite);
            throw NumericError("training diverged at step " + std::to_string(step) +
                               " (last finite loss " + last + "): " + e.what());
        }
        last_finite = result.loss_curve.back();
        if (snapshots && (step + 1) % opt.snapshot_every == 0) {
            take_snapshot(step + 1);
        }
    }

    result.network = std::move(net);
    return result;
}

} // namespace

TrainResult train(Network net, const Dataset& data, const SamplingConfig& sampling,
                  const OptimizerConfig& opt, const Dataset* trajectory_data) {
    net.config.validate();
    sampling.validate();
    opt.validate();
    if (sampling.ensemble_size != input_slots(net.config)) {
        throw ConfigError("sampling.ensemble_size " +
                          std::to_string(sampling.ensemble_size) +
                          " does not match the network's " +
                          std::to_string(input_slots(net.config)) + " input slots");
    }
    if (data.input_dim() != net.config.input_dim ||
        data.label_dim() != (net.config.task == Task::classification
                                 ? net.config.output_dim
                                 : 1)) {
        throw ConfigError("dataset dimensions do not match the network config");
    }

    if (net.config.architecture != Architecture::deep_ensemble) {
        return train_single(std::move(net), data, sampling, opt, trajectory_data);
    }

    // Each member is an independent standard training run on a derived
    // sampling stream; curves are summed per step.
    const std::size_t members = net.config.ensemble_size;
    std::vector<Network> trained;
    TrainResult result;
    for (std::size_t m = 0; m < members; ++m) {
        try {
            SamplingConfig ms = sampling;
            ms.ensemble_size = 1;
            ms.seed = Rng(sampling.seed).derive(m).seed();
            TrainResult r = train_single(extract_member(net, m), data, ms, opt,
                                         trajectory_data);
            if (m == 0) {
                result.loss_curve = std::move(r.loss_curve);
                result.trajectory.steps = std::move(r.trajectory.steps);
                result.trajectory.snapshots.resize(result.trajectory.steps.size());
            } else {
                for (std::size_t s = 0; s < result.loss_curve.size(); ++s) {
                    result.loss_curve[s] += r.loss_curve[s];
                }
            }
            for (std::size_t s = 0; s < result.trajectory.snapshots.size(); ++s) {
                result.trajectory.snapshots[s].push_back(
                    std::move(r.trajectory.snapshots[s][0]));
            }
            trained.push_back(std::move(r.network));
        } catch (const NumericError& e) {
            throw NumericError("ensemble member " + std::to_string(m) + ": " + e.what());
        }
    }
    result.trajectory.heads = members;
    const std::uint64_t init_seed = net.config.init_seed;
    result.network = merge_ensemble(trained);
    result.network.config.init_seed = init_seed;
    return result;
}

Evaluation evaluate(const Network& net, const Dataset& data) {
    Evaluation ev;
    ev.heads = forward_tiled(net, data.features);
    ev.ensemble = ensemble_predict(ev.heads);
    return ev;
}

} // namespace mimo
