#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mimo/common.hpp"

namespace mimo {

// Dense row-major f64 array with shape. Immutable by convention once handed
// to a Graph; copies are explicit vector copies.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t last_dim() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // Rank-2 accessors.
    std::size_t rows() const;
    std::size_t cols() const;
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

enum class Op {
    constant,
    parameter,
    matmul,
    add,        // same shape, or broadcast of rhs over the leading batch axis
    concat,     // last axis
    slice,      // last axis
    relu,
    softmax,    // last axis
    log_softmax,// last axis
    log,
    mean,       // all elements -> scalar
    sum,        // all elements -> scalar
    multiply,
    subtract,
    square,
    abs,
    scale,      // x * alpha for a fixed alpha
};

const char* op_name(Op op);

using NodeId = std::size_t;

// Single-use computation tape: append-only nodes whose inputs reference
// strictly earlier nodes, forward values computed eagerly on append. One
// Graph belongs to one thread for its lifetime.
class Graph {
public:
    NodeId constant(Tensor value);
    NodeId parameter(Tensor value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId concat(NodeId a, NodeId b);
    NodeId slice(NodeId a, std::size_t offset, std::size_t extent);
    NodeId relu(NodeId a);
    NodeId softmax(NodeId a);
    NodeId log_softmax(NodeId a);
    NodeId log(NodeId a);
    NodeId mean(NodeId a);
    NodeId sum(NodeId a);
    NodeId multiply(NodeId a, NodeId b);
    NodeId subtract(NodeId a, NodeId b);
    NodeId square(NodeId a);
    NodeId abs(NodeId a);
    NodeId scale(NodeId a, double alpha);

    // Generic dispatch for ops without attributes; used by op-generic tests.
    NodeId apply(Op op, const std::vector<NodeId>& inputs);

    const Tensor& value(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<NodeId>& parameters() const { return params_; }

    // Reverse-mode sweep from a scalar loss node. Forward values are left
    // untouched; gradient slots are (re)computed. Parameters the loss does not
    // reach get zero gradients.
    void backpropagate(NodeId loss);

    // Gradient of the last backpropagated loss w.r.t. a node. Only valid
    // after backpropagate().
    const Tensor& gradient(NodeId id) const;

private:
    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        double alpha = 0.0;        // scale
        std::size_t offset = 0;    // slice
        std::size_t extent = 0;    // slice
    };

    NodeId emit(Node node);
    void check_id(NodeId id) const;
    void backward_node(NodeId id);
    Tensor& grad_slot(NodeId id);

    std::vector<Node> nodes_;
    std::vector<NodeId> params_;
    std::vector<Tensor> grads_;
    std::vector<char> reached_;
    bool has_grads_ = false;
};

// Builds a scalar loss graph from a flat parameter vector. The returned
// parameter nodes, concatenated in order, must cover the vector exactly.
struct LossBuild {
    Graph graph;
    NodeId loss = 0;
    std::vector<NodeId> parameters;
};

using LossBuilder = std::function<LossBuild(const std::vector<double>&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|, |numeric|).
double gradient_check(const LossBuilder& builder, const std::vector<double>& point,
                      double step = 1e-6);

} // namespace mimo
