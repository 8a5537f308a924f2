#include "mimo/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mimo/kernels.hpp"

namespace mimo {
namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ConfigError("tensor shape has a zero dimension");
        n *= d;
    }
    return n;
}

void ensure_finite(const Tensor& t, Op op) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by op '") +
                               op_name(op) + "'");
        }
    }
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
        std::ostringstream msg;
        msg << "tensor data size " << data_.size() << " does not match shape "
            << shape_str();
        throw ConfigError(msg.str());
    }
}

Tensor Tensor::scalar(double v) {
    return Tensor({}, {v});
}

std::size_t Tensor::last_dim() const {
    if (shape_.empty()) throw ConfigError("scalar tensor has no last axis");
    return shape_.back();
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw ConfigError("rows() on tensor of rank " +
                                              std::to_string(shape_.size()));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw ConfigError("cols() on tensor of rank " +
                                              std::to_string(shape_.size()));
    return shape_[1];
}

std::string Tensor::shape_str() const {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) out << ", ";
        out << shape_[i];
    }
    out << ')';
    return out.str();
}

const char* op_name(Op op) {
    switch (op) {
        case Op::constant:    return "constant";
        case Op::parameter:   return "parameter";
        case Op::matmul:      return "matmul";
        case Op::add:         return "add";
        case Op::concat:      return "concat";
        case Op::slice:       return "slice";
        case Op::relu:        return "relu";
        case Op::softmax:     return "softmax";
        case Op::log_softmax: return "log_softmax";
        case Op::log:         return "log";
        case Op::mean:        return "mean";
        case Op::sum:         return "sum";
        case Op::multiply:    return "multiply";
        case Op::subtract:    return "subtract";
        case Op::square:      return "square";
        case Op::abs:         return "abs";
        case Op::scale:       return "scale";
    }
    return "?";
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ConfigError(std::string(what) + ": shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
    }
}

// add() broadcast rule: rhs may drop the leading axis of lhs.
bool broadcasts_over_leading(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() + 1) return false;
    for (std::size_t i = 0; i < b.rank(); ++i) {
        if (a.shape()[i + 1] != b.shape()[i]) return false;
    }
    return true;
}

} // namespace

NodeId Graph::emit(Node node) {
    ensure_finite(node.value, node.op);
    nodes_.push_back(std::move(node));
    has_grads_ = false;
    return nodes_.size() - 1;
}

void Graph::check_id(NodeId id) const {
    if (id >= nodes_.size()) {
        throw ConfigError("node id " + std::to_string(id) + " out of range");
    }
}

NodeId Graph::constant(Tensor value) {
    return emit({Op::constant, {}, std::move(value)});
}

NodeId Graph::parameter(Tensor value) {
    NodeId id = emit({Op::parameter, {}, std::move(value)});
    params_.push_back(id);
    return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_id(a); check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
        throw ConfigError("matmul: incompatible shapes " + ta.shape_str() + " x " +
                          tb.shape_str());
    }
    Tensor out({ta.rows(), tb.cols()});
    kernels::gemm_nn(ta.data(), tb.data(), out.data(), ta.rows(), ta.cols(),
                     tb.cols(), false);
    return emit({Op::matmul, {a, b}, std::move(out)});
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a); check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Tensor out(ta.shape());
    if (ta.same_shape(tb)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
    } else if (broadcasts_over_leading(ta, tb)) {
        const std::size_t inner = tb.size();
        const std::size_t lead = ta.size() / inner;
        for (std::size_t r = 0; r < lead; ++r) {
            for (std::size_t i = 0; i < inner; ++i) {
                out[r * inner + i] = ta[r * inner + i] + tb[i];
            }
        }
    } else {
        throw ConfigError("add: shapes " + ta.shape_str() + " and " + tb.shape_str() +
                          " neither match nor broadcast over the leading axis");
    }
    return emit({Op::add, {a, b}, std::move(out)});
}

NodeId Graph::concat(NodeId a, NodeId b) {
    check_id(a); check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.rank() == 0 || ta.rank() != tb.rank()) {
        throw ConfigError("concat: ranks " + std::to_string(ta.rank()) + " vs " +
                          std::to_string(tb.rank()));
    }
    for (std::size_t i = 0; i + 1 < ta.rank(); ++i) {
        if (ta.shape()[i] != tb.shape()[i]) {
            throw ConfigError("concat: leading shapes differ, " + ta.shape_str() +
                              " vs " + tb.shape_str());
        }
    }
    std::vector<std::size_t> shape = ta.shape();
    shape.back() = ta.last_dim() + tb.last_dim();
    Tensor out(std::move(shape));
    const std::size_t rows = ta.size() / ta.last_dim();
    const std::size_t ca = ta.last_dim(), cb = tb.last_dim();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < ca; ++i) out[r * (ca + cb) + i] = ta[r * ca + i];
        for (std::size_t i = 0; i < cb; ++i) out[r * (ca + cb) + ca + i] = tb[r * cb + i];
    }
    return emit({Op::concat, {a, b}, std::move(out)});
}

NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t extent) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    if (ta.rank() == 0) throw ConfigError("slice: scalar input");
    if (extent == 0 || offset + extent > ta.last_dim()) {
        throw ConfigError("slice: window [" + std::to_string(offset) + ", " +
                          std::to_string(offset + extent) + ") outside last axis of " +
                          ta.shape_str());
    }
    std::vector<std::size_t> shape = ta.shape();
    shape.back() = extent;
    Tensor out(std::move(shape));
    const std::size_t cols = ta.last_dim();
    const std::size_t rows = ta.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < extent; ++i) {
            out[r * extent + i] = ta[r * cols + offset + i];
        }
    }
    Node node{Op::slice, {a}, std::move(out)};
    node.offset = offset;
    node.extent = extent;
    return emit(std::move(node));
}

NodeId Graph::relu(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
    return emit({Op::relu, {a}, std::move(out)});
}

NodeId Graph::softmax(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    if (ta.rank() == 0) throw ConfigError("softmax: scalar input");
    Tensor out(ta.shape());
    kernels::softmax_rows(ta.data(), out.data(), ta.size() / ta.last_dim(), ta.last_dim());
    return emit({Op::softmax, {a}, std::move(out)});
}

NodeId Graph::log_softmax(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    if (ta.rank() == 0) throw ConfigError("log_softmax: scalar input");
    Tensor out(ta.shape());
    kernels::log_softmax_rows(ta.data(), out.data(), ta.size() / ta.last_dim(),
                              ta.last_dim());
    return emit({Op::log_softmax, {a}, std::move(out)});
}

NodeId Graph::log(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(ta[i]);
    return emit({Op::log, {a}, std::move(out)});
}

NodeId Graph::mean(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    double acc = 0.0;
    for (double v : ta.values()) acc += v;
    return emit({Op::mean, {a}, Tensor::scalar(acc / static_cast<double>(ta.size()))});
}

NodeId Graph::sum(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    double acc = 0.0;
    for (double v : ta.values()) acc += v;
    return emit({Op::sum, {a}, Tensor::scalar(acc)});
}

NodeId Graph::multiply(NodeId a, NodeId b) {
    check_id(a); check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_same_shape(ta, tb, "multiply");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
    return emit({Op::multiply, {a, b}, std::move(out)});
}

NodeId Graph::subtract(NodeId a, NodeId b) {
    check_id(a); check_id(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_same_shape(ta, tb, "subtract");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
    return emit({Op::subtract, {a, b}, std::move(out)});
}

NodeId Graph::square(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * ta[i];
    return emit({Op::square, {a}, std::move(out)});
}

NodeId Graph::abs(NodeId a) {
    check_id(a);
    const Tensor& ta = nodes_[a].value;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(ta[i]);
    return emit({Op::abs, {a}, std::move(out)});
}

NodeId Graph::scale(NodeId a, double alpha) {
    check_id(a);
    if (!std::isfinite(alpha)) throw NumericError("scale: non-finite factor");
    const Tensor& ta = nodes_[a].value;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * ta[i];
    Node node{Op::scale, {a}, std::move(out)};
    node.alpha = alpha;
    return emit(std::move(node));
}

NodeId Graph::apply(Op op, const std::vector<NodeId>& in) {
    auto want = [&](std::size_t n) {
        if (in.size() != n) {
            throw ConfigError(std::string("apply: op '") + op_name(op) + "' takes " +
                              std::to_string(n) + " inputs, got " +
                              std::to_string(in.size()));
        }
    };
    switch (op) {
        case Op::matmul:      want(2); return matmul(in[0], in[1]);
        case Op::add:         want(2); return add(in[0], in[1]);
        case Op::concat:      want(2); return concat(in[0], in[1]);
        case Op::multiply:    want(2); return multiply(in[0], in[1]);
        case Op::subtract:    want(2); return subtract(in[0], in[1]);
        case Op::relu:        want(1); return relu(in[0]);
        case Op::softmax:     want(1); return softmax(in[0]);
        case Op::log_softmax: want(1); return log_softmax(in[0]);
        case Op::log:         want(1); return log(in[0]);
        case Op::mean:        want(1); return mean(in[0]);
        case Op::sum:         want(1); return sum(in[0]);
        case Op::square:      want(1); return square(in[0]);
        case Op::abs:         want(1); return abs(in[0]);
        default:
            throw ConfigError(std::string("apply: op '") + op_name(op) +
                              "' needs attributes or is a leaf");
    }
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id);
    return nodes_[id].value;
}

Tensor& Graph::grad_slot(NodeId id) {
    return grads_[id];
}

void Graph::backpropagate(NodeId loss) {
    check_id(loss);
    if (nodes_[loss].value.size() != 1) {
        throw ConfigError("backpropagate: loss must be a scalar, got shape " +
                          nodes_[loss].value.shape_str());
    }

    grads_.assign(nodes_.size(), Tensor());
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        grads_[id] = Tensor(nodes_[id].value.shape());
    }

    // Mark nodes the loss depends on; everything else keeps a zero gradient.
    reached_.assign(nodes_.size(), 0);
    reached_[loss] = 1;
    for (NodeId id = loss + 1; id-- > 0;) {
        if (!reached_[id]) continue;
        for (NodeId in : nodes_[id].inputs) reached_[in] = 1;
    }

    grads_[loss][0] = 1.0;
    for (NodeId id = loss + 1; id-- > 0;) {
        if (reached_[id]) backward_node(id);
    }
    has_grads_ = true;
}

void Graph::backward_node(NodeId id) {
    const Node& node = nodes_[id];
    const Tensor& g = grads_[id];
    switch (node.op) {
        case Op::constant:
        case Op::parameter:
            break;
        case Op::matmul: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            Tensor& gb = grad_slot(node.inputs[1]);
            kernels::gemm_nt(g.data(), b.data(), ga.data(), a.rows(), b.cols(),
                             a.cols(), true);
            kernels::gemm_tn(a.data(), g.data(), gb.data(), a.cols(), a.rows(),
                             b.cols(), true);
            break;
        }
        case Op::add: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            Tensor& gb = grad_slot(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (a.same_shape(b)) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            } else {
                const std::size_t inner = b.size();
                const std::size_t lead = a.size() / inner;
                for (std::size_t r = 0; r < lead; ++r) {
                    for (std::size_t i = 0; i < inner; ++i) gb[i] += g[r * inner + i];
                }
            }
            break;
        }
        case Op::concat: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            Tensor& gb = grad_slot(node.inputs[1]);
            const std::size_t ca = a.last_dim(), cb = b.last_dim();
            const std::size_t rows = a.size() / ca;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < ca; ++i) ga[r * ca + i] += g[r * (ca + cb) + i];
                for (std::size_t i = 0; i < cb; ++i) gb[r * cb + i] += g[r * (ca + cb) + ca + i];
            }
            break;
        }
        case Op::slice: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            const std::size_t cols = a.last_dim();
            const std::size_t rows = a.size() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < node.extent; ++i) {
                    ga[r * cols + node.offset + i] += g[r * node.extent + i];
                }
            }
            break;
        }
        case Op::relu: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a[i] > 0.0) ga[i] += g[i];
            }
            break;
        }
        case Op::softmax: {
            // d/dx_i = y_i * (g_i - sum_j g_j y_j), per row.
            Tensor& ga = grad_slot(node.inputs[0]);
            const Tensor& y = node.value;
            const std::size_t cols = y.last_dim();
            const std::size_t rows = y.size() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t i = 0; i < cols; ++i) {
                    dot += g[r * cols + i] * y[r * cols + i];
                }
                for (std::size_t i = 0; i < cols; ++i) {
                    ga[r * cols + i] += y[r * cols + i] * (g[r * cols + i] - dot);
                }
            }
            break;
        }
        case Op::log_softmax: {
            // d/dx_i = g_i - exp(y_i) * sum_j g_j, per row.
            Tensor& ga = grad_slot(node.inputs[0]);
            const Tensor& y = node.value;
            const std::size_t cols = y.last_dim();
            const std::size_t rows = y.size() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                double gsum = 0.0;
                for (std::size_t i = 0; i < cols; ++i) gsum += g[r * cols + i];
                for (std::size_t i = 0; i < cols; ++i) {
                    ga[r * cols + i] += g[r * cols + i] - std::exp(y[r * cols + i]) * gsum;
                }
            }
            break;
        }
        case Op::log: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
            break;
        }
        case Op::mean: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            const double w = g[0] / static_cast<double>(a.size());
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += w;
            break;
        }
        case Op::sum: {
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            break;
        }
        case Op::multiply: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            Tensor& gb = grad_slot(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * b[i];
                gb[i] += g[i] * a[i];
            }
            break;
        }
        case Op::subtract: {
            Tensor& ga = grad_slot(node.inputs[0]);
            Tensor& gb = grad_slot(node.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case Op::square: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a[i] * g[i];
            break;
        }
        case Op::abs: {
            // Subgradient 0 at the kink.
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a[i] > 0.0) ga[i] += g[i];
                else if (a[i] < 0.0) ga[i] -= g[i];
            }
            break;
        }
        case Op::scale: {
            Tensor& ga = grad_slot(node.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += node.alpha * g[i];
            break;
        }
    }
}

const Tensor& Graph::gradient(NodeId id) const {
    check_id(id);
    if (!has_grads_) throw ConfigError("gradient() before backpropagate()");
    return grads_[id];
}

double gradient_check(const LossBuilder& builder, const std::vector<double>& point,
                      double step) {
    LossBuild build = builder(point);
    build.graph.backpropagate(build.loss);

    std::vector<double> analytic;
    analytic.reserve(point.size());
    for (NodeId p : build.parameters) {
        const Tensor& g = build.graph.gradient(p);
        analytic.insert(analytic.end(), g.values().begin(), g.values().end());
    }
    if (analytic.size() != point.size()) {
        throw ConfigError("gradient_check: builder parameters cover " +
                          std::to_string(analytic.size()) + " coordinates, point has " +
                          std::to_string(point.size()));
    }

    double worst = 0.0;
    std::vector<double> perturbed = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        perturbed[i] = point[i] + step;
        LossBuild plus = builder(perturbed);
        perturbed[i] = point[i] - step;
        LossBuild minus = builder(perturbed);
        perturbed[i] = point[i];
        const double numeric =
            (plus.graph.value(plus.loss)[0] - minus.graph.value(minus.loss)[0]) /
            (2.0 * step);
        const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace mimo
