#include "rigcn/graph.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include "rigcn/errors.hpp"

namespace rigcn {

WeightedGraph build_knn_graph(std::span<const Vec3> points, int khat) {
  const std::size_t n = points.size();
  if (n < 2) throw InvalidArgumentError("build_knn_graph: need at least 2 nodes");
  if (khat < 1 || static_cast<std::size_t>(khat) >= n) {
    throw InvalidArgumentError("build_knn_graph: khat=" + std::to_string(khat) +
                               " must lie in [1, " + std::to_string(n - 1) + "]");
  }

  std::vector<NeighborSet> neighbors;
  neighbors.reserve(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    neighbors.push_back(dilated_knn(points, i, {khat, 1}));
    for (auto j : neighbors.back().members) total += (points[i] - points[j]).norm();
  }
  const double sigma = total / static_cast<double>(n * static_cast<std::size_t>(khat));
  const double denom = 2.0 * sigma * sigma;

  WeightedGraph g;
  g.weights = nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : neighbors[i].members) {
      const double d2 = (points[i] - points[j]).squaredNorm();
      const double w = denom > 0.0 ? std::exp(-d2 / denom) : 1.0;
      const auto a = static_cast<Eigen::Index>(i);
      const auto b = static_cast<Eigen::Index>(j);
      g.weights(a, b) = std::max(g.weights(a, b), w);
      g.weights(b, a) = std::max(g.weights(b, a), w);
    }
  }
  return g;
}

WeightedGraph build_knn_graph(std::span<const Vec3> points, const GraphParams& params,
                              Rng& rng) {
  return build_knn_graph(points, params.resolve(rng));
}

NormalizedAdjacency renormalize(const WeightedGraph& graph) {
  const auto n = graph.weights.rows();
  nn::Matrix tilde = graph.weights;
  tilde.diagonal().array() += 1.0;
  const Eigen::VectorXd inv_sqrt_degree = tilde.rowwise().sum().array().rsqrt();
  NormalizedAdjacency out;
  out.entries.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.entries(i, j) = inv_sqrt_degree[i] * tilde(i, j) * inv_sqrt_degree[j];
    }
  }
  return out;
}

void write_graph_nodes(std::ostream& os, std::span<const Vec3> points) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < points.size(); ++i) {
    os << i << ' ' << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z() << '\n';
  }
}

void write_graph_edges(std::ostream& os, const WeightedGraph& graph) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto n = graph.weights.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (graph.weights(i, j) > 0.0) os << i << ' ' << j << ' ' << graph.weights(i, j) << '\n';
    }
  }
}

}  // namespace rigcn
