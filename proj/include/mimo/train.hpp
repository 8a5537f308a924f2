#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mimo/data.hpp"
#include "mimo/model.hpp"
#include "mimo/tensor.hpp"

namespace mimo {

struct ScheduleEntry {
    std::size_t step = 0;
    double multiplier = 1.0;
};

struct OptimizerConfig {
    double learning_rate = 0.1;
    std::vector<ScheduleEntry> schedule; // piecewise-constant, steps strictly increasing
    double l1_coefficient = 0.0;
    double l2_coefficient = 0.0;
    std::size_t steps = 1000;
    std::size_t snapshot_every = 0; // 0 = no snapshots

    void validate() const;
    // learning_rate times the multiplier of the last schedule entry at or
    // before `step` (1 before any entry applies).
    double rate_at(std::size_t step) const;
};

struct TrajectoryLog {
    std::size_t heads = 0;
    std::vector<std::size_t> steps;
    std::vector<std::vector<Tensor>> snapshots; // [snapshot][head] predictions

    std::size_t size() const { return steps.size(); }
};

struct TrainResult {
    Network network;
    std::vector<double> loss_curve; // one entry per step, pre-update loss
    TrajectoryLog trajectory;
};

// Scalar training objective: per head, mean-over-batch NLL (classification,
// from log-softmax) or mean squared error (regression), summed over heads,
// plus l2 * sum(theta^2) + l1 * sum(|theta|). `params` must align with
// net.parameters.
NodeId compute_loss(Graph& g, const Network& net, const std::vector<NodeId>& params,
                    const MimoBatch& batch, double l1, double l2);

// Convenience wrapper for tests: builds a throwaway graph.
double loss_value(const Network& net, const MimoBatch& batch, double l1, double l2);

// Plain SGD over `opt.steps` sampled batches. Snapshots of per-head tiled
// predictions on `trajectory_data` are taken at step 0 and after every
// snapshot_every-th update when both are provided. A deep_ensemble network
// trains each member independently on derived seeds; its loss curve is the
// per-step sum over members.
TrainResult train(Network net, const Dataset& data, const SamplingConfig& sampling,
                  const OptimizerConfig& opt,
                  const Dataset* trajectory_data = nullptr);

struct Evaluation {
    Tensor ensemble;           // N x label_dim
    std::vector<Tensor> heads; // M of N x label_dim
};

// Tiled forward over the whole dataset plus the ensemble mean.
Evaluation evaluate(const Network& net, const Dataset& data);

} // namespace mimo
