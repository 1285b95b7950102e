#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>

#include "rigcn/geom.hpp"
#include "rigcn/nn.hpp"

namespace rigcn {

/// Symmetric, zero-diagonal adjacency with weights in [0, 1].
struct WeightedGraph {
  nn::Matrix weights;

  std::size_t size() const { return static_cast<std::size_t>(weights.rows()); }
};

/// D^-1/2 (A + I) D^-1/2.
struct NormalizedAdjacency {
  nn::Matrix entries;
};

struct GraphParams {
  IntInterval khat{6, 12};
  bool stochastic = false;

  /// Sampled edge count when stochastic, midpoint otherwise.
  int resolve(Rng& rng) const { return sample_interval(rng, khat, stochastic); }
};

/// Directed k-NN edges weighted by exp(-d^2 / (2 sigma^2)), where sigma is the
/// mean length of all selected edges, then symmetrized with max(w_ij, w_ji).
WeightedGraph build_knn_graph(std::span<const Vec3> points, int khat);
WeightedGraph build_knn_graph(std::span<const Vec3> points, const GraphParams& params,
                              Rng& rng);

NormalizedAdjacency renormalize(const WeightedGraph& graph);

/// Plain-text export: `i x y z` per node and `i j weight` per undirected edge (i < j).
void write_graph_nodes(std::ostream& os, std::span<const Vec3> points);
void write_graph_edges(std::ostream& os, const WeightedGraph& graph);

}  // namespace rigcn
