#pragma once

// Independent reference implementations used only by tests. They share no
// code with the library: plain arrays, naive loops, cyclic Jacobi.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using P3 = std::array<double, 3>;
using Dense = std::vector<std::vector<double>>;

inline double dist2(const P3& a, const P3& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline bool lex(const P3& a, const P3& b) { return a < b; }

/// Greedy max-min selection written from the definition: every step recomputes
/// the min distance of each candidate to the whole selected set.
inline std::vector<std::size_t> greedy_fps(const std::vector<P3>& pts, std::size_t m) {
  const std::size_t n = pts.size();
  P3 c{0, 0, 0};
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i) c[i] += p[i] / static_cast<double>(n);
  auto better = [&](double da, std::size_t a, double db, std::size_t b) {
    if (da != db) return da > db;
    if (pts[a] != pts[b]) return lex(pts[a], pts[b]);
    return a < b;
  };
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (better(dist2(pts[i], c), i, dist2(pts[start], c), start)) start = i;
  }
  std::vector<std::size_t> sel{start};
  while (sel.size() < m) {
    std::size_t best = n;
    double best_d = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto s : sel) d = std::min(d, dist2(pts[i], pts[s]));
      if (best == n || better(d, i, best_d, best)) {
        best = i;
        best_d = d;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

inline double min_pairwise(const std::vector<P3>& pts, const std::vector<std::size_t>& sel) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < sel.size(); ++a)
    for (std::size_t b = a + 1; b < sel.size(); ++b)
      best = std::min(best, std::sqrt(dist2(pts[sel[a]], pts[sel[b]])));
  return best;
}

/// Exhaustive optimum of the max-min dispersion over all m-subsets.
inline double best_dispersion(const std::vector<P3>& pts, std::size_t m) {
  const std::size_t n = pts.size();
  double best = 0;
  std::vector<std::size_t> idx(m);
  auto rec = [&](auto&& self, std::size_t pos, std::size_t from) -> void {
    if (pos == m) {
      best = std::max(best, min_pairwise(pts, idx));
      return;
    }
    for (std::size_t i = from; i < n; ++i) {
      idx[pos] = i;
      self(self, pos + 1, i + 1);
    }
  };
  rec(rec, 0, 0);
  return best;
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Returns
/// eigenvalues in descending order and eigenvectors as columns of `vecs`.
inline void jacobi3(std::array<std::array<double, 3>, 3> a, std::array<double, 3>& vals,
                    std::array<std::array<double, 3>, 3>& vecs) {
  std::array<std::array<double, 3>, 3> v{};
  for (int i = 0; i < 3; ++i) v[i][i] = 1;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a[x][x] > a[y][y]; });
  for (int i = 0; i < 3; ++i) {
    vals[i] = a[order[i]][order[i]];
    for (int k = 0; k < 3; ++k) vecs[k][i] = v[k][order[i]];
  }
}

/// Population covariance about the mean.
inline std::array<std::array<double, 3>, 3> covariance(const std::vector<P3>& pts) {
  P3 mu{0, 0, 0};
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i) mu[i] += p[i] / static_cast<double>(pts.size());
  std::array<std::array<double, 3>, 3> c{};
  for (const auto& p : pts)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c[i][j] += (p[i] - mu[i]) * (p[j] - mu[j]) / static_cast<double>(pts.size());
  return c;
}

/// D^-1/2 (A + I) D^-1/2 by explicit dense products.
inline Dense renormalize(const Dense& a) {
  const std::size_t n = a.size();
  Dense at = a;
  for (std::size_t i = 0; i < n; ++i) at[i][i] += 1;
  Dense dinv(n, std::vector<double>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += at[i][j];
    dinv[i][i] = 1 / std::sqrt(deg);
  }
  auto mul = [n](const Dense& x, const Dense& y) {
    Dense z(n, std::vector<double>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) z[i][j] += x[i][k] * y[k][j];
    return z;
  };
  return mul(mul(dinv, at), dinv);
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
inline double spectral_radius(const Dense& a, int iterations = 2000) {
  const std::size_t n = a.size();
  std::vector<double> x(n);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (auto& v : x) v = g(rng);
  double lambda = 0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> y(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i] += a[i][j] * x[j];
    double norm = 0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0) return 0;
    lambda = norm;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
  }
  return lambda;
}

}  // namespace oracle
