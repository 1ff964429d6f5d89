#include "rgbds/pose_graph.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "rgbds/dataset.hpp"

namespace rgbds {

Twist pose_graph_residual(const PoseGraph& graph, const PoseGraphEdge& edge) {
  const Pose err = edge.measured * graph.nodes[edge.to].inverse() *
                   graph.nodes[edge.from];
  return err.log();
}

double pose_graph_cost(const PoseGraph& graph) {
  double cost = 0.0;
  for (const PoseGraphEdge& e : graph.edges) {
    const Eigen::Matrix<double, 6, 1> r = pose_graph_residual(graph, e).vector();
    cost += r.dot(e.information * r);
  }
  return cost;
}

namespace {

void check_connected(const PoseGraph& graph) {
  const size_t n = graph.nodes.size();
  std::vector<char> seen(n, 0);
  std::vector<int> stack{graph.fixed_node};
  seen[graph.fixed_node] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const PoseGraphEdge& e : graph.edges) {
      for (const int w : {e.from == v ? e.to : -1, e.to == v ? e.from : -1}) {
        if (w >= 0 && !seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      throw std::invalid_argument("pose graph is disconnected from the fixed node");
    }
  }
}

}  // namespace

PoseGraphReport optimize_pose_graph(PoseGraph& graph, int max_iterations,
                                    double epsilon) {
  check_connected(graph);
  const int n = static_cast<int>(graph.nodes.size());

  // State indexing that skips the fixed node.
  std::vector<int> index(n, -1);
  int dim = 0;
  for (int i = 0; i < n; ++i) {
    if (i != graph.fixed_node) index[i] = 6 * dim++;
  }
  const int state_dim = 6 * dim;

  PoseGraphReport report;
  report.initial_cost = pose_graph_cost(graph);
  report.final_cost = report.initial_cost;
  if (state_dim == 0 || report.initial_cost < epsilon) return report;

  const auto apply = [&](const PoseGraph& base,
                         const Eigen::VectorXd& delta) {
    PoseGraph out = base;
    for (int i = 0; i < n; ++i) {
      if (index[i] < 0) continue;
      const Eigen::Matrix<double, 6, 1> xi = delta.segment<6>(index[i]);
      out.nodes[i] = base.nodes[i] * Pose::exp(Twist::from_vector(xi));
    }
    return out;
  };

  // Numeric edge jacobians: the graphs here are small (tens of keyframes)
  // and the residual is cheap, so central differences on the 6 increment
  // components of each endpoint are plenty fast and always consistent with
  // the residual definition.
  const double h = 1e-6;
  const auto edge_jacobian = [&](const PoseGraphEdge& e, int node,
                                 Eigen::Matrix<double, 6, 6>& J) {
    PoseGraph work = graph;
    for (int c = 0; c < 6; ++c) {
      Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
      xi(c) = h;
      work.nodes[node] = graph.nodes[node] * Pose::exp(Twist::from_vector(xi));
      const Eigen::Matrix<double, 6, 1> rp =
          pose_graph_residual(work, e).vector();
      xi(c) = -h;
      work.nodes[node] = graph.nodes[node] * Pose::exp(Twist::from_vector(xi));
      const Eigen::Matrix<double, 6, 1> rm =
          pose_graph_residual(work, e).vector();
      work.nodes[node] = graph.nodes[node];
      J.col(c) = (rp - rm) / (2.0 * h);
    }
  };

  double cost = report.initial_cost;
  double mu = 1e-8;
  for (int iter = 0; iter < max_iterations; ++iter) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(state_dim, state_dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(state_dim);
    for (const PoseGraphEdge& e : graph.edges) {
      const Eigen::Matrix<double, 6, 1> r =
          pose_graph_residual(graph, e).vector();
      Eigen::Matrix<double, 6, 6> Jf = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 6> Jt = Eigen::Matrix<double, 6, 6>::Zero();
      if (index[e.from] >= 0) edge_jacobian(e, e.from, Jf);
      if (index[e.to] >= 0) edge_jacobian(e, e.to, Jt);
      if (index[e.from] >= 0) {
        H.block<6, 6>(index[e.from], index[e.from]) +=
            Jf.transpose() * e.information * Jf;
        b.segment<6>(index[e.from]) += Jf.transpose() * e.information * r;
      }
      if (index[e.to] >= 0) {
        H.block<6, 6>(index[e.to], index[e.to]) +=
            Jt.transpose() * e.information * Jt;
        b.segment<6>(index[e.to]) += Jt.transpose() * e.information * r;
      }
      if (index[e.from] >= 0 && index[e.to] >= 0) {
        const Eigen::Matrix<double, 6, 6> off =
            Jf.transpose() * e.information * Jt;
        H.block<6, 6>(index[e.from], index[e.to]) += off;
        H.block<6, 6>(index[e.to], index[e.from]) += off.transpose();
      }
    }

    bool accepted = false;
    const double diag_scale = std::max(1.0, H.diagonal().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd damped = H;
      damped.diagonal().array() += mu * diag_scale;
      const Eigen::VectorXd delta = damped.ldlt().solve(-b);
      if (!delta.allFinite()) {
        mu *= 10.0;
        continue;
      }
      const PoseGraph candidate = apply(graph, delta);
      const double new_cost = pose_graph_cost(candidate);
      if (new_cost <= cost) {
        const double decrease = cost - new_cost;
        graph = candidate;
        cost = new_cost;
        mu = std::max(1e-12, mu / 3.0);
        accepted = true;
        ++report.iterations;
        if (decrease < epsilon) {
          report.final_cost = cost;
          return report;
        }
        break;
      }
      mu *= 10.0;
    }
    if (!accepted) break;  // damping exhausted without improvement
  }
  report.final_cost = cost;
  return report;
}

void write_pose_graph(const std::string& path, const PoseGraph& graph) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose graph: " + path);
  char line[512];
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const TrajectoryRecord rec =
        TrajectoryRecord::from_pose(0.0, graph.nodes[i]);
    std::snprintf(line, sizeof(line),
                  "VERTEX_SE3:QUAT %zu %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n",
                  i, rec.translation.x(), rec.translation.y(),
                  rec.translation.z(), rec.rotation.x(), rec.rotation.y(),
                  rec.rotation.z(), rec.rotation.w());
    out << line;
  }
  for (const PoseGraphEdge& e : graph.edges) {
    const TrajectoryRecord rec = TrajectoryRecord::from_pose(0.0, e.measured);
    std::snprintf(line, sizeof(line),
                  "EDGE_SE3:QUAT %d %d %.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                  e.from, e.to, rec.translation.x(), rec.translation.y(),
                  rec.translation.z(), rec.rotation.x(), rec.rotation.y(),
                  rec.rotation.z(), rec.rotation.w());
    out << line;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        std::snprintf(line, sizeof(line), " %.9f", e.information(r, c));
        out << line;
      }
    }
    out << "\n";
  }
}

}  // namespace rgbds
