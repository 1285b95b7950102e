#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "rigcn/errors.hpp"
#include "rigcn/graph.hpp"
#include "support.hpp"

using namespace rigcn;

namespace {

oracle::Dense to_dense(const nn::Matrix& m) {
  oracle::Dense out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

WeightedGraph random_graph(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  WeightedGraph g{nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < 0.4) {
        const double w = u(rng);
        g.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
        g.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
      }
  return g;
}

}  // namespace

TEST_CASE("two-point graph") {
  std::vector<Vec3> pts{{0, 0, 0}, {0.3, 0.4, 0}};
  auto g = build_knn_graph(pts, 1);
  CHECK(g.weights(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(g.weights(1, 0) == g.weights(0, 1));
  CHECK(g.weights(0, 0) == 0.0);
  CHECK(std::exp(-0.5) == doctest::Approx(0.6065).epsilon(1e-4));
}

TEST_CASE("coincident points get weight one") {
  std::vector<Vec3> pts{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}, {1.5, 0.2, 0}};
  auto g = build_knn_graph(pts, 1);
  CHECK(g.weights(0, 1) == 1.0);
}

TEST_CASE("knn graph invariants") {
  Rng rng(3);
  for (std::uint64_t t = 0; t < 20; ++t) {
    auto c = testing_support::random_cloud(40, 10 + t);
    const int khat = 1 + static_cast<int>(t % 10);
    auto g = build_knn_graph(c.points, khat);
    CHECK((g.weights - g.weights.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(g.weights.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.weights.minCoeff() >= 0.0);
    CHECK(g.weights.maxCoeff() <= 1.0);
    for (Eigen::Index i = 0; i < g.weights.rows(); ++i) {
      CHECK((g.weights.row(i).array() > 0).count() >= khat);
    }
    auto r = rotate(c, random_rotation(rng, RotationMode::so3));
    auto gr = build_knn_graph(r.points, khat);
    CHECK((gr.weights - g.weights).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("knn graph bandwidth is the mean selected distance") {
  // anchors on a line: 0, 1, 3; k=1 picks 0->1 (1), 1->0 (1), 3->1 (2): sigma = 4/3
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  auto g = build_knn_graph(pts, 1);
  const double sigma = 4.0 / 3.0;
  CHECK(g.weights(0, 1) == doctest::Approx(std::exp(-1.0 / (2 * sigma * sigma))));
  CHECK(g.weights(1, 2) == doctest::Approx(std::exp(-4.0 / (2 * sigma * sigma))));
  CHECK(g.weights(0, 2) == 0.0);
}

TEST_CASE("knn graph argument checks") {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  CHECK_THROWS_AS(build_knn_graph(pts, 3), InvalidArgumentError);
  CHECK_THROWS_AS(build_knn_graph(pts, 0), InvalidArgumentError);
  std::vector<Vec3> one{{0, 0, 0}};
  CHECK_THROWS_AS(build_knn_graph(one, 1), InvalidArgumentError);

  Rng a(1), b(1);
  GraphParams p{{1, 2}, true};
  CHECK(build_knn_graph(pts, p, a).weights == build_knn_graph(pts, p, b).weights);
  GraphParams mid{{1, 2}, false};
  CHECK(mid.resolve(a) == 1);
}

TEST_CASE("renormalize examples") {
  WeightedGraph empty{nn::Matrix::Zero(4, 4)};
  CHECK(renormalize(empty).entries == nn::Matrix::Identity(4, 4));

  WeightedGraph pair{nn::Matrix::Ones(2, 2) - nn::Matrix::Identity(2, 2)};
  const nn::Matrix half = nn::Matrix::Constant(2, 2, 0.5);
  CHECK((renormalize(pair).entries - half).cwiseAbs().maxCoeff() < 1e-15);

  nn::Matrix path = nn::Matrix::Zero(3, 3);
  path(0, 1) = path(1, 0) = path(1, 2) = path(2, 1) = 1;
  const nn::Matrix a_hat = renormalize(WeightedGraph{path}).entries;
  const auto dense = oracle::renormalize(to_dense(path));
  // 1/2 + 1/sqrt(6) and 2/sqrt(6) + 1/3
  const double expect[3] = {0.908248290463863, 1.149829914261059, 0.908248290463863};
  for (int i = 0; i < 3; ++i) {
    double row = 0, oracle_row = 0;
    for (int j = 0; j < 3; ++j) {
      row += a_hat(i, j);
      oracle_row += dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    CHECK(row == doctest::Approx(oracle_row).epsilon(1e-14));
    CHECK(row == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("renormalized adjacency on random graphs") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 19);
    auto g = random_graph(n, rng);
    const nn::Matrix a = renormalize(g).entries;
    const auto dense = oracle::renormalize(to_dense(g.weights));
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a.minCoeff() >= 0.0);
    double diff = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        diff = std::max(diff, std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - dense[i][j]));
    CHECK(diff <= 1e-14);
    CHECK(oracle::spectral_radius(to_dense(a)) <= 1 + 1e-9);
  }
}

TEST_CASE("renormalized adjacency is permutation equivariant") {
  auto c = testing_support::random_cloud(30, 4);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(9);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> shuffled(30);
  for (std::size_t i = 0; i < 30; ++i) shuffled[i] = c.points[perm[i]];
  const nn::Matrix a = renormalize(build_knn_graph(c.points, 5)).entries;
  const nn::Matrix b = renormalize(build_knn_graph(shuffled, 5)).entries;
  double diff = 0;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j)
      diff = std::max(diff, std::abs(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                     a(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]))));
  CHECK(diff <= 1e-12);
}

TEST_CASE("graph export format") {
  std::vector<Vec3> pts{{0, 0, 0}, {0.3, 0.4, 0}, {5, 5, 5}};
  auto g = build_knn_graph(pts, 1);
  std::ostringstream nodes, edges;
  write_graph_nodes(nodes, pts);
  write_graph_edges(edges, g);
  std::istringstream nin(nodes.str());
  int rows = 0;
  std::size_t i;
  double x, y, z;
  while (nin >> i >> x >> y >> z) CHECK(i == static_cast<std::size_t>(rows++));
  CHECK(rows == 3);
  std::istringstream ein(edges.str());
  std::size_t a, b;
  double w;
  int count = 0;
  while (ein >> a >> b >> w) {
    CHECK(a < b);
    CHECK(b < 3);
    CHECK(w == g.weights(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    ++count;
  }
  CHECK(count == 2);
}
