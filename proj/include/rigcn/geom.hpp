#pragma once

// Geometric primitives: normalization, sampling, neighbor search, local
// reference frames, rotations and corruption.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rigcn/random.hpp"

namespace rigcn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// Row-major k x 3 block of coordinates.
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Throws InvalidInputError when the cloud is empty or holds a non-finite value.
void validate_cloud(const PointCloud& cloud);

/// Shift to zero centroid and scale so the farthest point has unit norm.
/// A cloud whose points all coincide collapses to the origin.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

/// Strict lexicographic order on (x, y, z); used for every tie-break.
bool lex_less(const Vec3& a, const Vec3& b);

/// Greedy max-min selection of `count` indices under Euclidean distance.
/// Starts from the point farthest from the centroid. Ties go to the
/// lexicographically smallest coordinates, then to the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points,
                                                 std::size_t count);

struct NeighborParams {
  int k = 1;
  int d = 1;
};

struct NeighborSet {
  std::size_t anchor = 0;
  std::vector<std::size_t> members;  // nearest-first
  bool padded = false;
};

/// Dilated k-NN: candidates (all points but the anchor) sorted by distance,
/// then positions 0, d, ..., (k-1)d. When the list is too short, d is clamped
/// to floor((N-1)/k) (at least 1) and missing slots repeat the nearest one.
NeighborSet dilated_knn(std::span<const Vec3> points, std::size_t anchor,
                        NeighborParams params);

struct IntInterval {
  int lo = 1;
  int hi = 1;

  int midpoint() const { return (lo + hi) / 2; }
};

/// Uniform draw from [lo, hi] when `stochastic`, else the midpoint.
/// The generator is only advanced on stochastic draws.
int sample_interval(Rng& rng, IntInterval range, bool stochastic);

NeighborParams sample_neighbor_params(Rng& rng, IntInterval k_range,
                                      IntInterval d_range, bool stochastic);
NeighborParams sample_neighbor_params(Rng& rng, IntInterval k_range,
                                      IntInterval d_range, bool stochastic_k,
                                      bool stochastic_d);

struct LocalFrame {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();       // columns, descending eigenvalue
  Vec3 eigenvalues = Vec3::Zero();    // descending
  bool degenerate = false;            // a basis completion was needed

  double min_eigen_gap() const;
};

/// PCA frame over `patch`, with signs fixed by the third central moment along
/// each axis (fallback: direction from `reference` to the patch mean, then +).
/// Third axis = first x second.
LocalFrame estimate_frame(std::span<const Vec3> patch, const Vec3& reference);

/// LRF at `points[anchor]` from the points of `neighbors`.
LocalFrame estimate_lrf(std::span<const Vec3> points, std::size_t anchor,
                        const NeighborSet& neighbors);

/// Rows are axes^T (p - origin).
Coords project_to_lrf(const LocalFrame& frame, std::span<const Vec3> points);
Coords project_to_lrf(const LocalFrame& frame, std::span<const Vec3> points,
                      std::span<const std::size_t> indices);

enum class RotationMode { none, z, so3 };

RotationMode parse_rotation_mode(const std::string& name);
const char* to_string(RotationMode mode);

Mat3 rotation_about_z(double angle);
/// Rotation of a (not necessarily unit) quaternion (w, x, y, z).
Mat3 rotation_from_quaternion(double w, double x, double y, double z);
/// none: identity; z: uniform azimuth; so3: Haar-uniform via Gaussian quaternion.
Mat3 random_rotation(Rng& rng, RotationMode mode);

PointCloud rotate(const PointCloud& cloud, const Mat3& rotation);

struct CorruptionSpec {
  double noise_sigma = 0.0;
  std::size_t outlier_count = 0;
};

/// Per-coordinate Gaussian jitter, then `outlier_count` points drawn uniformly
/// from the unit ball appended at the end.
PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec, Rng& rng);

}  // namespace rigcn
