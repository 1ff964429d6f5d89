#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "rgbds/geometry.hpp"

namespace rgbds {

/// Relative-pose constraint between two keyframe nodes. `measured` maps
/// points in node `to`'s camera frame into node `from`'s frame; zero residual
/// means measured == nodes[from]^-1 * nodes[to].
struct PoseGraphEdge {
  int from = 0;
  int to = 0;
  Pose measured;
  Eigen::Matrix<double, 6, 6> information =
      Eigen::Matrix<double, 6, 6>::Identity();
};

struct PoseGraph {
  std::vector<Pose> nodes;  // camera-to-world keyframe poses
  std::vector<PoseGraphEdge> edges;
  int fixed_node = 0;
};

struct PoseGraphReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

/// 6-vector edge residual: SO(3) log of the rotation part of
/// measured * T_to^-1 * T_from and the translation part as-is.
Twist pose_graph_residual(const PoseGraph& graph, const PoseGraphEdge& edge);

double pose_graph_cost(const PoseGraph& graph);

/// Damped Gauss-Newton with right-multiplied increments on the free nodes;
/// the fixed node stays bit-identical. Steps that would raise the cost are
/// rejected and retried with more damping, so the cost never increases.
/// Stops when the per-iteration cost decrease drops below epsilon or after
/// max_iterations. Throws std::invalid_argument on a disconnected graph.
PoseGraphReport optimize_pose_graph(PoseGraph& graph, int max_iterations = 50,
                                    double epsilon = 1e-9);

/// Text dump in the g2o vertex/edge format (VERTEX_SE3:QUAT, EDGE_SE3:QUAT
/// with the upper-triangular information) for cross-checks with external
/// solvers.
void write_pose_graph(const std::string& path, const PoseGraph& graph);

}  // namespace rgbds
