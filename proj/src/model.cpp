#include "mimo/model.hpp"

#include <cmath>

#include "mimo/common.hpp"

namespace mimo {

const char* task_name(Task t) {
    return t == Task::classification ? "classification" : "regression";
}

const char* architecture_name(Architecture a) {
    switch (a) {
        case Architecture::mimo:            return "mimo";
        case Architecture::naive_multihead: return "naive_multihead";
        case Architecture::standard:        return "standard";
        case Architecture::deep_ensemble:   return "deep_ensemble";
    }
    return "?";
}

Task task_from_name(const std::string& name) {
    if (name == "classification") return Task::classification;
    if (name == "regression") return Task::regression;
    throw ConfigError("unknown task '" + name + "'");
}

Architecture architecture_from_name(const std::string& name) {
    if (name == "mimo") return Architecture::mimo;
    if (name == "naive_multihead") return Architecture::naive_multihead;
    if (name == "standard") return Architecture::standard;
    if (name == "deep_ensemble") return Architecture::deep_ensemble;
    throw ConfigError("unknown architecture '" + name + "'");
}

void NetworkConfig::validate() const {
    if (ensemble_size < 1) throw ConfigError("network.ensemble_size must be >= 1");
    if (architecture == Architecture::standard && ensemble_size != 1) {
        throw ConfigError("network.ensemble_size must be 1 for the standard architecture");
    }
    if (input_dim < 1) throw ConfigError("network.input_dim must be >= 1");
    if (output_dim < 1) throw ConfigError("network.output_dim must be >= 1");
    if (hidden_widths.empty()) throw ConfigError("network.hidden_widths must be nonempty");
    for (std::size_t w : hidden_widths) {
        if (w < 1) throw ConfigError("network.hidden_widths entries must be >= 1");
    }
    if (task == Task::classification && output_dim < 2) {
        throw ConfigError("network.output_dim must be >= 2 for classification");
    }
}

const Tensor& Network::param(const std::string& name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return p.value;
    }
    throw ConfigError("network has no parameter '" + name + "'");
}

Tensor& Network::param(const std::string& name) {
    for (auto& p : parameters) {
        if (p.name == name) return p.value;
    }
    throw ConfigError("network has no parameter '" + name + "'");
}

std::size_t Network::parameter_value_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters) n += p.value.size();
    return n;
}

namespace {

// Layer sizes of the single-body architectures. The first layer consumes all
// M concatenated inputs for mimo, a single input otherwise; the output layer
// produces all M heads side by side (one head for naive's M=... heads too).
struct BodyDims {
    std::vector<std::size_t> in;
    std::vector<std::size_t> out;
};

BodyDims body_dims(const NetworkConfig& c) {
    BodyDims d;
    const std::size_t first_in =
        c.architecture == Architecture::mimo ? c.ensemble_size * c.input_dim
                                             : c.input_dim;
    std::size_t prev = first_in;
    for (std::size_t w : c.hidden_widths) {
        d.in.push_back(prev);
        d.out.push_back(w);
        prev = w;
    }
    const std::size_t heads_out =
        c.architecture == Architecture::standard ? c.output_dim
                                                 : c.ensemble_size * c.output_dim;
    d.in.push_back(prev);
    d.out.push_back(heads_out);
    return d;
}

std::string layer_param_name(std::size_t layer, std::size_t layer_count,
                             bool weight) {
    const std::string base = layer + 1 == layer_count
                                 ? "output"
                                 : "layer" + std::to_string(layer);
    return base + (weight ? ".weight" : ".bias");
}

void append_body_params(std::vector<NamedTensor>& out, const NetworkConfig& c,
                        const std::string& prefix, Rng& rng) {
    const BodyDims dims = body_dims(c);
    for (std::size_t l = 0; l < dims.in.size(); ++l) {
        Tensor weight({dims.in[l], dims.out[l]});
        const double sd = std::sqrt(2.0 / static_cast<double>(dims.in[l]));
        for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = sd * rng.normal();
        out.push_back({prefix + layer_param_name(l, dims.in.size(), true),
                       std::move(weight)});
        out.push_back({prefix + layer_param_name(l, dims.in.size(), false),
                       Tensor({dims.out[l]})});
    }
}

} // namespace

std::uint64_t member_seed(std::uint64_t init_seed, std::size_t member) {
    return Rng(init_seed).derive(member).seed();
}

NetworkConfig ensemble_member_config(const NetworkConfig& c, std::size_t m) {
    NetworkConfig mc = c;
    mc.architecture = Architecture::standard;
    mc.ensemble_size = 1;
    mc.init_seed = member_seed(c.init_seed, m);
    return mc;
}

Network extract_member(const Network& net, std::size_t member) {
    if (net.config.architecture != Architecture::deep_ensemble) {
        throw ConfigError("extract_member on a non-ensemble network");
    }
    if (member >= net.config.ensemble_size) {
        throw ConfigError("extract_member: member " + std::to_string(member) +
                          " out of range");
    }
    Network out;
    out.config = ensemble_member_config(net.config, member);
    const std::string prefix = "member" + std::to_string(member) + ".";
    for (const auto& p : net.parameters) {
        if (p.name.rfind(prefix, 0) == 0) {
            out.parameters.push_back({p.name.substr(prefix.size()), p.value});
        }
    }
    return out;
}

Network build_network(const NetworkConfig& config) {
    config.validate();
    Network net;
    net.config = config;
    if (config.architecture == Architecture::deep_ensemble) {
        for (std::size_t m = 0; m < config.ensemble_size; ++m) {
            const NetworkConfig mc = ensemble_member_config(config, m);
            Rng rng(mc.init_seed);
            append_body_params(net.parameters, mc,
                               "member" + std::to_string(m) + ".", rng);
        }
    } else {
        Rng rng(config.init_seed);
        append_body_params(net.parameters, config, "", rng);
    }
    return net;
}

Network merge_ensemble(const std::vector<Network>& members) {
    if (members.empty()) throw ConfigError("merge_ensemble: no members");
    const NetworkConfig& first = members[0].config;
    Network net;
    net.config = first;
    net.config.architecture = Architecture::deep_ensemble;
    net.config.ensemble_size = members.size();
    for (std::size_t m = 0; m < members.size(); ++m) {
        const NetworkConfig& c = members[m].config;
        if (c.architecture != Architecture::standard) {
            throw ConfigError("merge_ensemble: member " + std::to_string(m) +
                              " is not a standard network");
        }
        if (c.input_dim != first.input_dim || c.output_dim != first.output_dim ||
            c.hidden_widths != first.hidden_widths || c.task != first.task) {
            throw ConfigError("merge_ensemble: member " + std::to_string(m) +
                              " disagrees with member 0 on layer sizes or task");
        }
        for (const auto& p : members[m].parameters) {
            net.parameters.push_back({"member" + std::to_string(m) + "." + p.name,
                                      p.value});
        }
    }
    return net;
}

std::size_t input_slots(const NetworkConfig& c) {
    switch (c.architecture) {
        case Architecture::mimo:
        case Architecture::deep_ensemble: return c.ensemble_size;
        case Architecture::naive_multihead:
        case Architecture::standard:      return 1;
    }
    return 1;
}

namespace {

// Forward through one body given already-emitted parameter nodes starting at
// params[base]; returns the final pre-split output node and appends each
// hidden pre-activation node.
NodeId body_forward(Graph& g, const std::vector<NodeId>& params, std::size_t base,
                    std::size_t hidden_layers, NodeId input,
                    std::vector<NodeId>* preacts) {
    NodeId h = input;
    for (std::size_t l = 0; l <= hidden_layers; ++l) {
        NodeId z = g.add(g.matmul(h, params[base + 2 * l]), params[base + 2 * l + 1]);
        if (l < hidden_layers) {
            if (preacts) preacts->push_back(z);
            h = g.relu(z);
        } else {
            h = z;
        }
    }
    return h;
}

} // namespace

GraphForward forward_graph(Graph& g, const Network& net,
                           const std::vector<NodeId>& params,
                           const std::vector<NodeId>& inputs) {
    const NetworkConfig& c = net.config;
    if (params.size() != net.parameters.size()) {
        throw ConfigError("forward_graph: expected " +
                          std::to_string(net.parameters.size()) +
                          " parameter nodes, got " + std::to_string(params.size()));
    }
    const std::size_t slots = input_slots(c);
    if (inputs.size() != slots) {
        throw ConfigError("forward_graph: architecture " +
                          std::string(architecture_name(c.architecture)) + " takes " +
                          std::to_string(slots) + " input slots, got " +
                          std::to_string(inputs.size()));
    }
    const std::size_t batch = g.value(inputs[0]).rows();
    for (NodeId in : inputs) {
        if (g.value(in).rank() != 2 || g.value(in).cols() != c.input_dim) {
            throw ConfigError("forward_graph: inputs must be batch x " +
                              std::to_string(c.input_dim) + ", got " +
                              g.value(in).shape_str());
        }
        if (g.value(in).rows() != batch) {
            throw ConfigError("forward_graph: input slots have mismatched batch sizes");
        }
    }

    GraphForward out;
    const std::size_t hidden_layers = c.hidden_widths.size();
    if (c.architecture == Architecture::deep_ensemble) {
        const std::size_t per_member = 2 * (hidden_layers + 1);
        for (std::size_t m = 0; m < c.ensemble_size; ++m) {
            out.heads.push_back(body_forward(g, params, m * per_member, hidden_layers,
                                             inputs[m], &out.hidden_preacts));
        }
        return out;
    }

    NodeId x = inputs[0];
    if (c.architecture == Architecture::mimo) {
        for (std::size_t m = 1; m < c.ensemble_size; ++m) x = g.concat(x, inputs[m]);
    }
    NodeId logits = body_forward(g, params, 0, hidden_layers, x, &out.hidden_preacts);
    if (c.architecture == Architecture::standard) {
        out.heads.push_back(logits);
    } else {
        for (std::size_t m = 0; m < c.ensemble_size; ++m) {
            out.heads.push_back(g.slice(logits, m * c.output_dim, c.output_dim));
        }
    }
    return out;
}

namespace {

struct EvaluatedForward {
    Graph graph;
    GraphForward fwd;
};

EvaluatedForward run_forward(const Network& net, const std::vector<Tensor>& inputs) {
    EvaluatedForward ev;
    std::vector<NodeId> params;
    params.reserve(net.parameters.size());
    for (const auto& p : net.parameters) params.push_back(ev.graph.constant(p.value));
    std::vector<NodeId> input_nodes;
    input_nodes.reserve(inputs.size());
    for (const auto& t : inputs) input_nodes.push_back(ev.graph.constant(t));
    ev.fwd = forward_graph(ev.graph, net, params, input_nodes);
    return ev;
}

} // namespace

std::vector<Tensor> forward_mimo(const Network& net, const std::vector<Tensor>& inputs) {
    EvaluatedForward ev = run_forward(net, inputs);
    std::vector<Tensor> heads;
    heads.reserve(ev.fwd.heads.size());
    for (NodeId h : ev.fwd.heads) {
        if (net.config.task == Task::classification) {
            heads.push_back(ev.graph.value(ev.graph.softmax(h)));
        } else {
            heads.push_back(ev.graph.value(h));
        }
    }
    return heads;
}

std::vector<Tensor> forward_tiled(const Network& net, const Tensor& x) {
    return forward_mimo(net, std::vector<Tensor>(input_slots(net.config), x));
}

Tensor ensemble_predict(const std::vector<Tensor>& members) {
    if (members.empty()) throw ConfigError("ensemble_predict: no members");
    Tensor out = members[0];
    for (std::size_t m = 1; m < members.size(); ++m) {
        if (!members[m].same_shape(out)) {
            throw ConfigError("ensemble_predict: member " + std::to_string(m) +
                              " has shape " + members[m].shape_str() + ", expected " +
                              out.shape_str());
        }
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += members[m][i];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
    return out;
}

ActivationRecord record_preactivations(const Network& net,
                                       const std::vector<Tensor>& inputs) {
    if (net.config.architecture == Architecture::deep_ensemble) {
        throw ConfigError("record_preactivations: deep_ensemble has no shared body");
    }
    EvaluatedForward ev = run_forward(net, inputs);
    ActivationRecord rec;
    std::size_t total = 0;
    for (std::size_t w : net.config.hidden_widths) total += w;
    const std::size_t batch = ev.graph.value(ev.fwd.hidden_preacts[0]).rows();
    rec.values = Tensor({batch, total});
    std::size_t col = 0;
    for (std::size_t l = 0; l < ev.fwd.hidden_preacts.size(); ++l) {
        const Tensor& z = ev.graph.value(ev.fwd.hidden_preacts[l]);
        for (std::size_t u = 0; u < z.cols(); ++u) {
            rec.layer_of.push_back(l);
            rec.index_in_layer.push_back(u);
            for (std::size_t b = 0; b < batch; ++b) {
                rec.values.at(b, col) = z.at(b, u);
            }
            ++col;
        }
    }
    return rec;
}

} // namespace mimo
