#pragma once

#include <cstddef>
#include <vector>

#include "mimo/analysis.hpp"
#include "mimo/data.hpp"
#include "mimo/model.hpp"
#include "mimo/train.hpp"

namespace mimo {

// The parameters exclusive to one subnetwork: its input slot's first-layer
// weight rows (mimo only; a naive multihead shares the whole first layer)
// followed by its head's output-weight columns and output-bias entries.
struct SubnetworkSlice {
    std::size_t slot = 0;
    std::vector<double> values;
};

SubnetworkSlice extract_slice(const Network& net, std::size_t m);

// Write the slice back into its slot; every other parameter is untouched.
Network install_slice(Network net, const SubnetworkSlice& slice);

// The slice as a standalone standard network: the slice's input rows feed
// the shared body (bias included), and the slice's head reads it out. The
// companion slots contribute nothing, so a subnetwork's own slice reproduces
// its predictions exactly, and the zero slice outputs uniform probabilities.
Network subnetwork_model(const Network& net, const SubnetworkSlice& slice);

struct GridCell {
    double u = 0.0;
    double v = 0.0;
    double accuracy = 0.0;
    std::vector<double> disagreement; // vs each trained subnetwork
};

struct GridReport {
    std::size_t resolution = 0;
    double margin = 0.0;
    std::vector<GridCell> cells;   // resolution x resolution, row-major in v
    std::vector<GridCell> anchors; // the M trained subnetworks
    double origin_distance = 0.0;  // out-of-plane distance of the zero slice
};

// Accuracy/disagreement over the affine plane through the three subnetwork
// slices: u along slice_b - slice_a, v its Gram-Schmidt complement through
// slice_c, lattice covering the anchors' bounding box expanded by `margin`.
// Evaluation uses the first eval_limit dataset rows.
GridReport plane_section(const Network& net, const Dataset& data,
                         std::size_t resolution, double margin,
                         std::size_t eval_limit = 1000);

struct ProjectedPoint {
    std::size_t head = 0;
    std::size_t step = 0;
    double c1 = 0.0;
    double c2 = 0.0;
};

// Centered snapshot prediction vectors projected onto their top two principal
// components (power iteration on the Gram matrix, tolerance 1e-9).
std::vector<ProjectedPoint> project_trajectories(const TrajectoryLog& log);

} // namespace mimo
