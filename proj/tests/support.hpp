#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rigcn/geom.hpp"

namespace testing_support {

/// Generic-position cloud: Gaussian blob with anisotropic scale so local PCA
/// eigenvalues are well separated.
inline rigcn::PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool normalize = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  rigcn::PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(1.0 * g(rng), 0.7 * g(rng), 0.45 * g(rng));
  return normalize ? rigcn::normalize_unit_sphere(c) : c;
}

inline std::vector<oracle::P3> to_p3(const std::vector<rigcn::Vec3>& pts) {
  std::vector<oracle::P3> out;
  for (const auto& p : pts) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

}  // namespace testing_support
