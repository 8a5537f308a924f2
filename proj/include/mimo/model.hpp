#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimo/tensor.hpp"

namespace mimo {

enum class Task { classification, regression };
enum class Architecture { mimo, naive_multihead, standard, deep_ensemble };

const char* task_name(Task t);
const char* architecture_name(Architecture a);
Task task_from_name(const std::string& name);
Architecture architecture_from_name(const std::string& name);

struct NetworkConfig {
    Architecture architecture = Architecture::mimo;
    Task task = Task::classification;
    std::size_t ensemble_size = 1; // M
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_widths{16};
    std::size_t output_dim = 1;
    std::uint64_t init_seed = 0;

    void validate() const;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Immutable-by-convention parameter bundle. The parameter list order is fixed
// by the config (checkpoints rely on it).
struct Network {
    NetworkConfig config;
    std::vector<NamedTensor> parameters;

    const Tensor& param(const std::string& name) const;
    Tensor& param(const std::string& name);
    std::size_t parameter_value_count() const;
};

// He-style fan-in init for weights (normal, sd sqrt(2/fan_in)), zero biases,
// drawn sequentially from Rng(init_seed) in parameter order. Ensemble members
// use member_seed() streams so a merged ensemble matches standalone builds.
Network build_network(const NetworkConfig& config);

std::uint64_t member_seed(std::uint64_t init_seed, std::size_t member);

// Input slots a forward pass consumes: ensemble_size for mimo and
// deep_ensemble, 1 for naive_multihead (shared input) and standard.
std::size_t input_slots(const NetworkConfig& config);

// Config of one deep_ensemble member as a standalone standard network.
NetworkConfig ensemble_member_config(const NetworkConfig& config, std::size_t member);

// Copy member m of a deep_ensemble out as a standard network.
Network extract_member(const Network& net, std::size_t member);

// Combine independently built/trained standard networks into one
// deep_ensemble network (member m's parameters prefixed "member{m}.").
Network merge_ensemble(const std::vector<Network>& members);

// Graph-level forward pass. `params` must align with net.parameters (any mix
// of parameter/constant nodes); `inputs` holds one batch node per input slot
// (ensemble_size slots for mimo/deep_ensemble, one for naive/standard).
struct GraphForward {
    std::vector<NodeId> heads;          // per head: batch x output_dim logits
    std::vector<NodeId> hidden_preacts; // per hidden layer: batch x width
};
GraphForward forward_graph(Graph& g, const Network& net,
                           const std::vector<NodeId>& params,
                           const std::vector<NodeId>& inputs);

// Per-head predictive distributions: softmax probabilities for
// classification, raw outputs for regression. One input per slot; slot
// batches must agree in size.
std::vector<Tensor> forward_mimo(const Network& net, const std::vector<Tensor>& inputs);

// Evaluate one input through all heads (the input repeated across slots).
std::vector<Tensor> forward_tiled(const Network& net, const Tensor& x);

// Arithmetic mean of per-head distributions.
Tensor ensemble_predict(const std::vector<Tensor>& members);

// Pre-activation of every hidden unit for every example tuple; values is
// examples x total_hidden_units, with unit u described by layer_of[u] and
// index_in_layer[u].
struct ActivationRecord {
    std::vector<std::size_t> layer_of;
    std::vector<std::size_t> index_in_layer;
    Tensor values;
};
ActivationRecord record_preactivations(const Network& net,
                                       const std::vector<Tensor>& inputs);

} // namespace mimo
