#include "rigcn/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "rigcn/errors.hpp"

namespace rigcn {

namespace {

constexpr double kSignEpsilon = 1e-12;
constexpr double kRelativeGapTolerance = 1e-10;

// Strict "a is preferred over b" for a maximization with the shared
// coordinate/index tie-break.
bool prefer_farther(double da, const Vec3& pa, std::size_t ia, double db,
                    const Vec3& pb, std::size_t ib) {
  if (da != db) return da > db;
  if (lex_less(pa, pb)) return true;
  if (lex_less(pb, pa)) return false;
  return ia < ib;
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void validate_cloud(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidInputError("point cloud is empty");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.points[i].allFinite()) {
      throw InvalidInputError("point " + std::to_string(i) +
                              " has a non-finite coordinate");
    }
  }
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  validate_cloud(cloud);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());

  PointCloud out;
  out.points.reserve(cloud.size());
  double max_norm = 0.0;
  for (const auto& p : cloud.points) {
    out.points.push_back(p - centroid);
    max_norm = std::max(max_norm, out.points.back().norm());
  }
  if (max_norm == 0.0) {
    for (auto& p : out.points) p.setZero();
    return out;
  }
  for (auto& p : out.points) p /= max_norm;
  return out;
}

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points,
                                                 std::size_t count) {
  const std::size_t n = points.size();
  if (count == 0) throw InvalidArgumentError("farthest_point_sampling: count must be >= 1");
  if (count > n) {
    throw InvalidArgumentError("farthest_point_sampling: requested " +
                               std::to_string(count) + " of " + std::to_string(n) +
                               " points");
  }

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(n);

  std::size_t start = 0;
  double start_dist = (points[0] - centroid).squaredNorm();
  for (std::size_t i = 1; i < n; ++i) {
    const double di = (points[i] - centroid).squaredNorm();
    if (prefer_farther(di, points[i], i, start_dist, points[start], start)) {
      start = i;
      start_dist = di;
    }
  }

  std::vector<std::size_t> selected;
  selected.reserve(count);
  std::vector<char> taken(n, 0);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());

  std::size_t current = start;
  for (;;) {
    selected.push_back(current);
    taken[current] = 1;
    if (selected.size() == count) break;

    const Vec3& c = points[current];
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], (points[i] - c).squaredNorm());
      if (best == n ||
          prefer_farther(min_dist[i], points[i], i, min_dist[best], points[best], best)) {
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

NeighborSet dilated_knn(std::span<const Vec3> points, std::size_t anchor,
                        NeighborParams params) {
  const std::size_t n = points.size();
  if (anchor >= n) throw InvalidArgumentError("dilated_knn: anchor index out of range");
  if (params.k < 1 || params.d < 1) {
    throw InvalidArgumentError("dilated_knn: k and d must be >= 1");
  }
  const std::size_t available = n - 1;
  if (available == 0) throw InvalidArgumentError("dilated_knn: no candidate points");

  const auto k = static_cast<std::size_t>(params.k);
  auto d = static_cast<std::size_t>(params.d);
  if ((k - 1) * d >= available) d = std::max<std::size_t>(1, available / k);
  const std::size_t needed = std::min(available, (k - 1) * d + 1);

  const Vec3& q = points[anchor];
  std::vector<std::size_t> candidates;
  candidates.reserve(available);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == anchor) continue;
    dist[i] = (points[i] - q).squaredNorm();
    candidates.push_back(i);
  }
  auto closer = [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    if (lex_less(points[a], points[b])) return true;
    if (lex_less(points[b], points[a])) return false;
    return a < b;
  };
  std::partial_sort(candidates.begin(),
                    candidates.begin() + static_cast<std::ptrdiff_t>(needed),
                    candidates.end(), closer);

  NeighborSet out;
  out.anchor = anchor;
  out.members.reserve(k);
  for (std::size_t pos = 0; pos < needed && out.members.size() < k; pos += d) {
    out.members.push_back(candidates[pos]);
  }
  while (out.members.size() < k) {
    out.members.push_back(candidates[0]);
    out.padded = true;
  }
  return out;
}

int sample_interval(Rng& rng, IntInterval range, bool stochastic) {
  if (range.lo > range.hi) {
    throw InvalidArgumentError("empty interval [" + std::to_string(range.lo) + ", " +
                               std::to_string(range.hi) + "]");
  }
  if (!stochastic) return range.midpoint();
  return std::uniform_int_distribution<int>(range.lo, range.hi)(rng);
}

NeighborParams sample_neighbor_params(Rng& rng, IntInterval k_range,
                                      IntInterval d_range, bool stochastic) {
  return sample_neighbor_params(rng, k_range, d_range, stochastic, stochastic);
}

NeighborParams sample_neighbor_params(Rng& rng, IntInterval k_range,
                                      IntInterval d_range, bool stochastic_k,
                                      bool stochastic_d) {
  if (k_range.lo < 1 || d_range.lo < 1) {
    throw InvalidArgumentError("neighbor intervals must start at >= 1");
  }
  NeighborParams p;
  p.k = sample_interval(rng, k_range, stochastic_k);
  p.d = sample_interval(rng, d_range, stochastic_d);
  return p;
}

double LocalFrame::min_eigen_gap() const {
  return std::min(eigenvalues[0] - eigenvalues[1], eigenvalues[1] - eigenvalues[2]);
}

LocalFrame estimate_frame(std::span<const Vec3> patch, const Vec3& reference) {
  if (patch.size() < 3) {
    throw DegeneratePatchError("local frame needs >= 3 points, got " +
                               std::to_string(patch.size()));
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : patch) mean += p;
  mean /= static_cast<double>(patch.size());

  Mat3 cov = Mat3::Zero();
  for (const auto& p : patch) {
    const Vec3 c = p - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(patch.size());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  LocalFrame frame;
  frame.origin = reference;
  // Eigen returns ascending order.
  for (int i = 0; i < 3; ++i) {
    frame.eigenvalues[i] = solver.eigenvalues()[2 - i];
    frame.axes.col(i) = solver.eigenvectors().col(2 - i);
  }

  // Eigenvectors inside a degenerate eigenspace are arbitrary; replace them by
  // coordinate axes projected into that eigenspace (Gram-Schmidt, x, y, z order).
  const double tol =
      kRelativeGapTolerance * std::max(std::abs(frame.eigenvalues[0]), 1e-300);
  const bool top_tied = frame.eigenvalues[0] - frame.eigenvalues[1] <= tol;
  const bool bottom_tied = frame.eigenvalues[1] - frame.eigenvalues[2] <= tol;
  if (top_tied || bottom_tied) {
    frame.degenerate = true;
    int first = 0;
    int last = 2;
    if (!top_tied) first = 1;
    if (!bottom_tied) last = 1;
    Eigen::Matrix<double, 3, Eigen::Dynamic> space = frame.axes.middleCols(first, last - first + 1);
    const Mat3 projector = space * space.transpose();
    int slot = first;
    for (int e = 0; e < 3 && slot <= last; ++e) {
      Vec3 u = projector.col(e);
      for (int s = 0; s < slot; ++s) u -= frame.axes.col(s).dot(u) * frame.axes.col(s);
      const double norm = u.norm();
      if (norm > 1e-6) frame.axes.col(slot++) = u / norm;
    }
  }

  for (int a = 0; a < 2; ++a) {
    const Vec3 axis = frame.axes.col(a);
    double moment = 0.0;
    for (const auto& p : patch) {
      const double t = (p - mean).dot(axis);
      moment += t * t * t;
    }
    double s = std::abs(moment) < kSignEpsilon ? 0.0 : sign_or_zero(moment);
    if (s == 0.0) {
      const double toward = (mean - reference).dot(axis);
      s = std::abs(toward) < kSignEpsilon ? 1.0 : sign_or_zero(toward);
    }
    frame.axes.col(a) = s * axis;
  }
  frame.axes.col(2) = frame.axes.col(0).cross(frame.axes.col(1));
  return frame;
}

LocalFrame estimate_lrf(std::span<const Vec3> points, std::size_t anchor,
                        const NeighborSet& neighbors) {
  if (anchor >= points.size()) throw InvalidArgumentError("estimate_lrf: anchor out of range");
  std::vector<Vec3> patch;
  patch.reserve(neighbors.members.size());
  for (auto idx : neighbors.members) patch.push_back(points[idx]);
  return estimate_frame(patch, points[anchor]);
}

Coords project_to_lrf(const LocalFrame& frame, std::span<const Vec3> points) {
  Coords out(static_cast<Eigen::Index>(points.size()), 3);
  const Mat3 to_local = frame.axes.transpose();
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = (to_local * (points[i] - frame.origin)).transpose();
  }
  return out;
}

Coords project_to_lrf(const LocalFrame& frame, std::span<const Vec3> points,
                      std::span<const std::size_t> indices) {
  Coords out(static_cast<Eigen::Index>(indices.size()), 3);
  const Mat3 to_local = frame.axes.transpose();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        (to_local * (points[indices[i]] - frame.origin)).transpose();
  }
  return out;
}

RotationMode parse_rotation_mode(const std::string& name) {
  if (name == "none") return RotationMode::none;
  if (name == "z") return RotationMode::z;
  if (name == "so3" || name == "SO3" || name == "SO(3)") return RotationMode::so3;
  throw InvalidArgumentError("unknown rotation mode '" + name + "' (expected none|z|so3)");
}

const char* to_string(RotationMode mode) {
  switch (mode) {
    case RotationMode::none: return "none";
    case RotationMode::z: return "z";
    case RotationMode::so3: return "so3";
  }
  return "none";
}

Mat3 rotation_about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
  return Eigen::Quaterniond(w, x, y, z).normalized().toRotationMatrix();
}

Mat3 random_rotation(Rng& rng, RotationMode mode) {
  switch (mode) {
    case RotationMode::none:
      return Mat3::Identity();
    case RotationMode::z: {
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      return rotation_about_z(angle(rng));
    }
    case RotationMode::so3: {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (;;) {
        const double w = gauss(rng), x = gauss(rng), y = gauss(rng), z = gauss(rng);
        if (w * w + x * x + y * y + z * z > 1e-12) return rotation_from_quaternion(w, x, y, z);
      }
    }
  }
  return Mat3::Identity();
}

PointCloud rotate(const PointCloud& cloud, const Mat3& rotation) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(rotation * p);
  return out;
}

PointCloud corrupt(const PointCloud& cloud, const CorruptionSpec& spec, Rng& rng) {
  if (!(spec.noise_sigma >= 0.0)) throw InvalidArgumentError("noise sigma must be >= 0");
  PointCloud out = cloud;
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& p : out.points) {
      p.x() += noise(rng);
      p.y() += noise(rng);
      p.z() += noise(rng);
    }
  }
  std::uniform_real_distribution<double> cube(-1.0, 1.0);
  for (std::size_t i = 0; i < spec.outlier_count; ++i) {
    Vec3 p;
    do {
      p = Vec3(cube(rng), cube(rng), cube(rng));
    } while (p.squaredNorm() > 1.0);
    out.points.push_back(p);
  }
  return out;
}

}  // namespace rigcn
