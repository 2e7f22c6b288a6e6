#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fmsync/geometry.h"
#include "support.h"

using namespace fmsync;

namespace {

// Exhaustive scan with (distance, index) ordering.
KnnResult brute_knn(const Points& cloud, const Eigen::MatrixXd& q, int k) {
  KnnResult r{Eigen::MatrixXi(q.rows(), k), Eigen::MatrixXd(q.rows(), k)};
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, int>> all;
    for (Eigen::Index j = 0; j < cloud.rows(); ++j) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) d2 += (cloud(j, c) - q(i, c)) * (cloud(j, c) - q(i, c));
      all.emplace_back(d2, static_cast<int>(j));
    }
    std::sort(all.begin(), all.end());
    for (int t = 0; t < k; ++t) {
      r.indices(i, t) = all[t].second;
      r.distances(i, t) = std::sqrt(all[t].first);
    }
  }
  return r;
}

}  // namespace

TEST_CASE("knn_query finds the nearest point by inspection") {
  Points p(2, 3);
  p << 0, 0, 0, 1, 0, 0;
  Eigen::MatrixXd q(1, 3);
  q << 0.1, 0, 0;
  KnnResult r = knn_query(p, q, 1);
  CHECK(r.indices(0, 0) == 0);
  CHECK(r.distances(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("knn_query returns an existing point at distance zero") {
  std::mt19937_64 rng(1);
  Points p = test::random_points(rng, 30);
  KnnResult r = knn_query(p, p.row(17), 1);
  CHECK(r.indices(0, 0) == 17);
  CHECK(r.distances(0, 0) == 0.0);
}

TEST_CASE("knn_query matches an exhaustive scan") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index n = 20 + 24 * static_cast<Eigen::Index>(seed);
    Points p = test::random_points(rng, n);
    Eigen::MatrixXd q = test::random_points(rng, 40);
    KnnResult got = knn_query(p, q, 5);
    KnnResult want = brute_knn(p, q, 5);
    CHECK(got.indices == want.indices);
    CHECK((got.distances - want.distances).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("knn_query breaks ties toward the lowest index") {
  Points grid(5, 3);
  grid << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1;
  Eigen::MatrixXd origin = Eigen::MatrixXd::Zero(1, 3);
  KnnResult r = knn_query(grid, origin, 3);
  CHECK(r.indices(0, 0) == 0);
  CHECK(r.indices(0, 1) == 1);
  CHECK(r.indices(0, 2) == 2);
}

TEST_CASE("knn_query rejects k larger than the cloud") {
  Points p = Points::Zero(3, 3);
  CHECK_THROWS_AS(knn_query(p, Eigen::MatrixXd::Zero(1, 3), 4), DataError);
}

TEST_CASE("knn graph on three collinear points") {
  Points p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 2, 0, 0;
  KnnGraph g = build_knn_graph(PointCloud::make(p, 0), 1, 1.0);
  Eigen::MatrixXd w = g.weight_matrix();
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(3, 3);
  want(0, 1) = want(1, 0) = want(1, 2) = want(2, 1) = std::exp(-1.0);
  CHECK((w - want).norm() < 1e-15);
}

TEST_CASE("k = N-1 yields the complete graph") {
  std::mt19937_64 rng(3);
  KnnGraph g = build_knn_graph(PointCloud::make(test::random_points(rng, 9), 0), 8);
  for (const auto& nb : g.neighbors) CHECK(nb.size() == 8);
}

TEST_CASE("automatic bandwidth equals the grid spacing for k = 1") {
  Points p(12, 3);
  for (int i = 0; i < 12; ++i) p.row(i) << 0.25 * (i % 4), 0.25 * (i / 4), 0.0;
  KnnGraph g = build_knn_graph(PointCloud::make(p, 0), 1);
  CHECK(g.sigma == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("automatic bandwidth is the mean distance to the k-th neighbour") {
  std::mt19937_64 rng(4);
  Points p = test::random_points(rng, 60);
  KnnResult r = brute_knn(p, p, 5);
  KnnGraph g = build_knn_graph(PointCloud::make(p, 0), 4);
  CHECK(g.sigma == doctest::Approx(r.distances.col(4).mean()).epsilon(1e-12));
}

TEST_CASE("degenerate graphs are rejected") {
  Points same = Points::Zero(4, 3);
  CHECK_THROWS_AS(build_knn_graph(PointCloud::make(same, 0), 2), DataError);
  std::mt19937_64 rng(5);
  Points p = test::random_points(rng, 4);
  CHECK_THROWS_AS(build_knn_graph(PointCloud::make(p, 0), 4), DataError);
  CHECK_THROWS_AS(build_knn_graph(PointCloud::make(p, 0), 0), DataError);
}

TEST_CASE("graph Laplacian of a single edge") {
  Points p(2, 3);
  p << 0, 0, 0, 1, 0, 0;
  KnnGraph g = build_knn_graph(PointCloud::make(p, 0), 1, 1e6);
  Eigen::MatrixXd l = graph_laplacian(g).matrix;
  Eigen::Matrix2d want;
  want << 1, -1, -1, 1;
  CHECK((l - want).norm() < 1e-11);
}

TEST_CASE("graph Laplacian is symmetric, PSD and annihilates constants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    KnnGraph g = build_knn_graph(PointCloud::make(test::random_points(rng, 20), 0), 4);
    Eigen::MatrixXd l = graph_laplacian(g).matrix;
    CHECK((l - l.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((l * Eigen::VectorXd::Ones(20)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues();
    CHECK(ev.minCoeff() >= -1e-10);
    CHECK(ev.minCoeff() >= -1e-9 * ev.maxCoeff());
  }
}

TEST_CASE("knn graph is invariant to point order") {
  std::mt19937_64 rng(9);
  Points p = test::random_points(rng, 40);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Points q(40, 3);
  for (int i = 0; i < 40; ++i) q.row(i) = p.row(perm[i]);
  Eigen::MatrixXd wp = build_knn_graph(PointCloud::make(p, 0), 5).weight_matrix();
  Eigen::MatrixXd wq = build_knn_graph(PointCloud::make(q, 0), 5).weight_matrix();
  double worst = 0.0;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) worst = std::max(worst, std::abs(wq(i, j) - wp(perm[i], perm[j])));
  CHECK(worst < 1e-14);
}

TEST_CASE("point clouds reject non-finite coordinates") {
  Points p = Points::Zero(2, 3);
  p(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PointCloud::make(p, 0), DataError);
}
