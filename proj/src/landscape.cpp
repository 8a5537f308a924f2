#include "mimo/landscape.hpp"

#include <cmath>
#include <exception>

#include <omp.h>

namespace mimo {

namespace {

void require_sliceable(const Network& net) {
    const Architecture a = net.config.architecture;
    if (a != Architecture::mimo && a != Architecture::naive_multihead) {
        throw ConfigError("subnetwork slices need a mimo or naive_multihead network");
    }
}

struct SliceLayout {
    bool has_input_rows = false;
    std::size_t input_dim = 0;   // rows owned by one slot
    std::size_t hidden0 = 0;     // first-layer width
    std::size_t body_width = 0;  // last hidden width
    std::size_t output_dim = 0;  // per-head classes

    std::size_t length() const {
        return (has_input_rows ? input_dim * hidden0 : 0) +
               body_width * output_dim + output_dim;
    }
};

SliceLayout slice_layout(const NetworkConfig& c) {
    SliceLayout l;
    l.has_input_rows = c.architecture == Architecture::mimo;
    l.input_dim = c.input_dim;
    l.hidden0 = c.hidden_widths.front();
    l.body_width = c.hidden_widths.back();
    l.output_dim = c.output_dim;
    return l;
}

} // namespace

SubnetworkSlice extract_slice(const Network& net, std::size_t m) {
    require_sliceable(net);
    const NetworkConfig& c = net.config;
    if (m >= c.ensemble_size) {
        throw ConfigError("slice slot " + std::to_string(m) + " out of range for " +
                          std::to_string(c.ensemble_size) + " subnetworks");
    }
    const SliceLayout layout = slice_layout(c);

    SubnetworkSlice slice;
    slice.slot = m;
    slice.values.reserve(layout.length());
    if (layout.has_input_rows) {
        const Tensor& w0 = net.param("layer0.weight");
        for (std::size_t r = m * c.input_dim; r < (m + 1) * c.input_dim; ++r) {
            for (std::size_t col = 0; col < w0.cols(); ++col) {
                slice.values.push_back(w0.at(r, col));
            }
        }
    }
    const Tensor& wo = net.param("output.weight");
    for (std::size_t r = 0; r < wo.rows(); ++r) {
        for (std::size_t col = m * c.output_dim; col < (m + 1) * c.output_dim; ++col) {
            slice.values.push_back(wo.at(r, col));
        }
    }
    const Tensor& bo = net.param("output.bias");
    for (std::size_t i = m * c.output_dim; i < (m + 1) * c.output_dim; ++i) {
        slice.values.push_back(bo[i]);
    }
    return slice;
}

Network install_slice(Network net, const SubnetworkSlice& slice) {
    require_sliceable(net);
    const NetworkConfig& c = net.config;
    const std::size_t m = slice.slot;
    if (m >= c.ensemble_size) {
        throw ConfigError("slice slot " + std::to_string(m) + " out of range for " +
                          std::to_string(c.ensemble_size) + " subnetworks");
    }
    const SliceLayout layout = slice_layout(c);
    if (slice.values.size() != layout.length()) {
        throw ConfigError("slice holds " + std::to_string(slice.values.size()) +
                          " values, subnetworks of this network have " +
                          std::to_string(layout.length()));
    }

    std::size_t pos = 0;
    if (layout.has_input_rows) {
        Tensor& w0 = net.param("layer0.weight");
        for (std::size_t r = m * c.input_dim; r < (m + 1) * c.input_dim; ++r) {
            for (std::size_t col = 0; col < w0.cols(); ++col) {
                w0.at(r, col) = slice.values[pos++];
            }
        }
    }
    Tensor& wo = net.param("output.weight");
    for (std::size_t r = 0; r < wo.rows(); ++r) {
        for (std::size_t col = m * c.output_dim; col < (m + 1) * c.output_dim; ++col) {
            wo.at(r, col) = slice.values[pos++];
        }
    }
    Tensor& bo = net.param("output.bias");
    for (std::size_t i = m * c.output_dim; i < (m + 1) * c.output_dim; ++i) {
        bo[i] = slice.values[pos++];
    }
    return net;
}

Network subnetwork_model(const Network& net, const SubnetworkSlice& slice) {
    require_sliceable(net);
    const NetworkConfig& c = net.config;
    const SliceLayout layout = slice_layout(c);
    if (slice.values.size() != layout.length()) {
        throw ConfigError("slice holds " + std::to_string(slice.values.size()) +
                          " values, subnetworks of this network have " +
                          std::to_string(layout.length()));
    }

    NetworkConfig mc = c;
    mc.architecture = Architecture::standard;
    mc.ensemble_size = 1;

    Network model;
    model.config = mc;
    std::size_t pos = 0;
    Tensor w0({c.input_dim, layout.hidden0});
    if (layout.has_input_rows) {
        for (std::size_t i = 0; i < w0.size(); ++i) w0[i] = slice.values[pos++];
    } else {
        w0 = net.param("layer0.weight");
    }
    model.parameters.push_back({"layer0.weight", std::move(w0)});
    model.parameters.push_back({"layer0.bias", net.param("layer0.bias")});
    for (std::size_t l = 1; l < c.hidden_widths.size(); ++l) {
        const std::string name = "layer" + std::to_string(l);
        model.parameters.push_back({name + ".weight", net.param(name + ".weight")});
        model.parameters.push_back({name + ".bias", net.param(name + ".bias")});
    }
    Tensor wo({layout.body_width, c.output_dim});
    for (std::size_t i = 0; i < wo.size(); ++i) wo[i] = slice.values[pos++];
    Tensor bo({c.output_dim});
    for (std::size_t i = 0; i < bo.size(); ++i) bo[i] = slice.values[pos++];
    model.parameters.push_back({"output.weight", std::move(wo)});
    model.parameters.push_back({"output.bias", std::move(bo)});
    return model;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * b[i];
    return total;
}

Dataset head_rows(const Dataset& data, std::size_t limit) {
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

struct CellEval {
    double accuracy = 0.0;
    std::vector<double> disagreement;
};

CellEval evaluate_slice(const Network& net, const SubnetworkSlice& slice,
                        const Dataset& data,
                        const std::vector<std::vector<std::size_t>>& anchor_classes) {
    const Network model = subnetwork_model(net, slice);
    const Tensor probs = forward_tiled(model, data.features)[0];
    const std::size_t n = data.size();
    const std::size_t k = data.label_dim();

    CellEval eval;
    eval.disagreement.assign(anchor_classes.size(), 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t pred = argmax_index(probs.data() + row * k, k);
        if (pred == data.label_class(row)) eval.accuracy += 1.0;
        for (std::size_t a = 0; a < anchor_classes.size(); ++a) {
            if (pred != anchor_classes[a][row]) eval.disagreement[a] += 1.0;
        }
    }
    eval.accuracy /= static_cast<double>(n);
    for (double& d : eval.disagreement) d /= static_cast<double>(n);
    return eval;
}

} // namespace

GridReport plane_section(const Network& net, const Dataset& data,
                         std::size_t resolution, double margin,
                         std::size_t eval_limit) {
    require_sliceable(net);
    if (net.config.task != Task::classification) {
        throw ConfigError("plane_section requires a classification network");
    }
    if (net.config.ensemble_size != 3) {
        throw ConfigError("plane_section needs exactly 3 subnetworks, network has " +
                          std::to_string(net.config.ensemble_size));
    }
    if (resolution < 2) throw ConfigError("plane_section resolution must be >= 2");
    if (margin < 0.0) throw ConfigError("plane_section margin must be >= 0");
    if (eval_limit < 1) throw ConfigError("plane_section eval_limit must be >= 1");

    const SubnetworkSlice sa = extract_slice(net, 0);
    const SubnetworkSlice sb = extract_slice(net, 1);
    const SubnetworkSlice sc = extract_slice(net, 2);
    const std::size_t dim = sa.values.size();

    std::vector<double> u(dim), w(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        u[i] = sb.values[i] - sa.values[i];
        w[i] = sc.values[i] - sa.values[i];
    }
    const double unorm = std::sqrt(dot(u, u));
    if (unorm < 1e-10) {
        throw ConfigError("plane_section: subnetworks 0 and 1 coincide in weight space");
    }
    std::vector<double> uhat(dim);
    for (std::size_t i = 0; i < dim; ++i) uhat[i] = u[i] / unorm;
    const double w_on_u = dot(w, uhat);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] - w_on_u * uhat[i];
    const double vnorm = std::sqrt(dot(v, v));
    if (vnorm < 1e-10) {
        throw ConfigError("plane_section: the three subnetworks are collinear in weight space");
    }
    std::vector<double> vhat(dim);
    for (std::size_t i = 0; i < dim; ++i) vhat[i] = v[i] / vnorm;

    const double ax = 0.0, ay = 0.0;
    const double bx = unorm, by = 0.0;
    const double cx = w_on_u, cy = vnorm;
    double xmin = std::min({ax, bx, cx}), xmax = std::max({ax, bx, cx});
    double ymin = std::min({ay, by, cy}), ymax = std::max({ay, by, cy});
    const double xpad = margin * (xmax - xmin);
    const double ypad = margin * (ymax - ymin);
    xmin -= xpad; xmax += xpad;
    ymin -= ypad; ymax += ypad;

    const Dataset sub = head_rows(data, eval_limit);
    const std::vector<SubnetworkSlice> anchor_slices{sa, sb, sc};
    std::vector<std::vector<std::size_t>> anchor_classes;
    for (const auto& s : anchor_slices) {
        const Network model = subnetwork_model(net, s);
        const Tensor probs = forward_tiled(model, sub.features)[0];
        std::vector<std::size_t> classes(sub.size());
        for (std::size_t row = 0; row < sub.size(); ++row) {
            classes[row] = argmax_index(probs.data() + row * sub.label_dim(),
                                        sub.label_dim());
        }
        anchor_classes.push_back(std::move(classes));
    }

    GridReport report;
    report.resolution = resolution;
    report.margin = margin;
    report.cells.resize(resolution * resolution);

    const double xstep = (xmax - xmin) / static_cast<double>(resolution - 1);
    const double ystep = (ymax - ymin) / static_cast<double>(resolution - 1);
    std::vector<std::exception_ptr> failures(resolution * resolution);
    const long long cell_count = static_cast<long long>(resolution * resolution);
#pragma omp parallel for schedule(static) num_threads(workers())
    for (long long idx = 0; idx < cell_count; ++idx) {
        try {
            const std::size_t iv = static_cast<std::size_t>(idx) / resolution;
            const std::size_t iu = static_cast<std::size_t>(idx) % resolution;
            GridCell& cell = report.cells[static_cast<std::size_t>(idx)];
            cell.u = xmin + static_cast<double>(iu) * xstep;
            cell.v = ymin + static_cast<double>(iv) * ystep;
            SubnetworkSlice slice;
            slice.slot = 0;
            slice.values.resize(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                slice.values[i] = sa.values[i] + cell.u * uhat[i] + cell.v * vhat[i];
            }
            const CellEval eval = evaluate_slice(net, slice, sub, anchor_classes);
            cell.accuracy = eval.accuracy;
            cell.disagreement = eval.disagreement;
        } catch (...) {
            failures[static_cast<std::size_t>(idx)] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }

    const double anchor_xy[3][2] = {{ax, ay}, {bx, by}, {cx, cy}};
    for (std::size_t a = 0; a < 3; ++a) {
        GridCell cell;
        cell.u = anchor_xy[a][0];
        cell.v = anchor_xy[a][1];
        const CellEval eval = evaluate_slice(net, anchor_slices[a], sub, anchor_classes);
        cell.accuracy = eval.accuracy;
        cell.disagreement = eval.disagreement;
        report.anchors.push_back(std::move(cell));
    }

    // The zero slice rarely lies in the plane; report its off-plane distance.
    std::vector<double> origin(dim);
    for (std::size_t i = 0; i < dim; ++i) origin[i] = -sa.values[i];
    const double on_u = dot(origin, uhat), on_v = dot(origin, vhat);
    const double residual = dot(origin, origin) - on_u * on_u - on_v * on_v;
    report.origin_distance = std::sqrt(std::max(0.0, residual));
    return report;
}

namespace {

// Leading eigenvector of the symmetric matrix g by power iteration; returns
// false when g is (numerically) zero on the start vector.
bool power_iterate(const std::vector<std::vector<double>>& g, std::vector<double>& vec,
                   double tolerance) {
    const std::size_t n = vec.size();
    double norm = std::sqrt(dot(vec, vec));
    for (double& x : vec) x /= norm;
    std::vector<double> next(n);
    for (int iter = 0; iter < 10000; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = 0.0;
            for (std::size_t j = 0; j < n; ++j) next[i] += g[i][j] * vec[j];
        }
        norm = std::sqrt(dot(next, next));
        if (norm < 1e-18) return false;
        for (double& x : next) x /= norm;
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) delta += (next[i] - vec[i]) * (next[i] - vec[i]);
        vec = next;
        if (std::sqrt(delta) < tolerance) break;
    }
    return true;
}

} // namespace

std::vector<ProjectedPoint> project_trajectories(const TrajectoryLog& log) {
    const std::size_t snapshots = log.size();
    if (snapshots < 2) throw ConfigError("trajectory projection needs >= 2 snapshots");
    const std::size_t heads = log.heads;
    if (heads == 0 || log.snapshots[0].size() != heads) {
        throw ConfigError("trajectory log has no heads");
    }

    bool distinct = false;
    for (std::size_t s = 1; s < snapshots && !distinct; ++s) {
        for (std::size_t h = 0; h < heads && !distinct; ++h) {
            if (!(log.snapshots[s][h].values() == log.snapshots[0][h].values())) {
                distinct = true;
            }
        }
    }
    if (!distinct) {
        throw ConfigError("trajectory projection needs >= 2 distinct snapshots");
    }

    const std::size_t rows = snapshots * heads;
    const std::size_t dim = log.snapshots[0][0].size();
    std::vector<std::vector<double>> x(rows, std::vector<double>(dim));
    for (std::size_t s = 0; s < snapshots; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
            const Tensor& t = log.snapshots[s][h];
            if (t.size() != dim) {
                throw ConfigError("trajectory snapshots have inconsistent shapes");
            }
            for (std::size_t i = 0; i < dim; ++i) x[s * heads + h][i] = t[i];
        }
    }
    std::vector<double> mean(dim, 0.0);
    for (const auto& row : x) {
        for (std::size_t i = 0; i < dim; ++i) mean[i] += row[i];
    }
    for (std::size_t i = 0; i < dim; ++i) mean[i] /= static_cast<double>(rows);
    for (auto& row : x) {
        for (std::size_t i = 0; i < dim; ++i) row[i] -= mean[i];
    }

    std::vector<std::vector<double>> gram(rows, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            gram[i][j] = gram[j][i] = dot(x[i], x[j]);
        }
    }

    // Scores of the leading component of g, plus the component itself as a
    // unit vector in prediction space (empty when the component degenerates).
    auto component_scores = [&](const std::vector<std::vector<double>>& g,
                                const std::vector<double>* orthogonal_to,
                                std::vector<double>& pc_out)
        -> std::vector<double> {
        std::vector<double> scores(rows, 0.0);
        pc_out.clear();
        std::vector<double> eigvec(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            eigvec[i] = 1.0 + static_cast<double>(i) * 1e-3;
        }
        if (!power_iterate(g, eigvec, 1e-9)) return scores;
        std::vector<double> pc(dim, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) pc[i] += eigvec[r] * x[r][i];
        }
        if (orthogonal_to && !orthogonal_to->empty()) {
            const double along = dot(pc, *orthogonal_to);
            for (std::size_t i = 0; i < dim; ++i) pc[i] -= along * (*orthogonal_to)[i];
        }
        const double norm = std::sqrt(dot(pc, pc));
        if (norm < 1e-12) return scores;
        for (double& c : pc) c /= norm;
        std::size_t peak = 0;
        for (std::size_t i = 1; i < dim; ++i) {
            if (std::fabs(pc[i]) > std::fabs(pc[peak])) peak = i;
        }
        if (pc[peak] < 0.0) {
            for (double& c : pc) c = -c;
        }
        for (std::size_t r = 0; r < rows; ++r) scores[r] = dot(x[r], pc);
        pc_out = std::move(pc);
        return scores;
    };

    std::vector<double> pc1, pc2;
    std::vector<double> scores1 = component_scores(gram, nullptr, pc1);

    // Deflate the Gram matrix by the first component's scores: for unit pc1,
    // G - s1 s1^T is the Gram of the residual data.
    std::vector<std::vector<double>> deflated = gram;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < rows; ++j) {
            deflated[i][j] -= scores1[i] * scores1[j];
        }
    }
    std::vector<double> scores2 = component_scores(deflated, &pc1, pc2);

    std::vector<ProjectedPoint> points;
    points.reserve(rows);
    for (std::size_t s = 0; s < snapshots; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
            points.push_back({h, log.steps[s], scores1[s * heads + h],
                              scores2[s * heads + h]});
        }
    }
    return points;
}

} // namespace mimo
