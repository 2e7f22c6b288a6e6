#include <doctest.h>

#include "fmsync/error.h"
#include "fmsync/fmap.h"
#include "fmsync/linalg.h"
#include "support.h"

using namespace fmsync;

namespace {

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

// Collects warnings for the duration of a test.
struct CaptureWarnings {
  std::vector<std::string> seen;
  WarningSink previous;
  CaptureWarnings() : previous(set_warning_sink([this](const std::string& m) { seen.push_back(m); })) {}
  ~CaptureWarnings() { set_warning_sink(previous); }
};

}  // namespace

TEST_CASE("Huber weights") {
  CHECK(huber_weight(0.0, 0.05) == 1.0);
  CHECK(huber_weight(0.1, 0.05) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(huber_weight(0.05, 0.05) == doctest::Approx(1.0));
  CHECK(kDefaultHuberScale == 0.05);
  CHECK(kDefaultPairwiseIters == 2);
  CHECK(kDefaultTemperature == 0.1);
  // rho is continuous at kappa and its derivative matches 2 w r
  const double k = 0.05, r = 0.3, h = 1e-6;
  CHECK(huber_rho(k - 1e-12, k) == doctest::Approx(huber_rho(k + 1e-12, k)));
  CHECK((huber_rho(r + h, k) - huber_rho(r - h, k)) / (2 * h) == doctest::Approx(2 * huber_weight(r, k) * r));
}

TEST_CASE("identical rows give the identity map") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd a = test::random_matrix(rng, 40, 6);
  FunctionalMap fm = estimate_fmap({a, a});
  CHECK((fm.c - Eigen::MatrixXd::Identity(6, 6)).norm() < 1e-8);
}

TEST_CASE("noise-free estimation matches the pseudo-inverse solution") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(seed % 7);
    Eigen::MatrixXd a = test::random_matrix(rng, 50, m);
    Eigen::MatrixXd c_gt = Eigen::MatrixXd::Identity(m, m) + test::random_matrix(rng, m, m, 0.3);
    Eigen::MatrixXd b = a * c_gt;
    FunctionalMap fm = estimate_fmap({a, b});
    CHECK(rel_err(fm.c, c_gt) < 1e-6);
    CHECK((fm.c - pinv(a) * b).norm() < 1e-8);
  }
}

TEST_CASE("IRLS beats plain least squares under gross outliers") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    test::OutlierProblem p = test::outlier_problem(seed);
    Eigen::MatrixXd ls = pinv(p.rows.source) * p.rows.target;
    FunctionalMap fm = estimate_fmap(p.rows);
    if ((fm.c - p.c_gt).norm() < (ls - p.c_gt).norm()) ++wins;
  }
  CHECK(wins >= 19);
}

TEST_CASE("warm start skips the unweighted first pass") {
  test::OutlierProblem p = test::outlier_problem(3);
  FunctionalMap cold = estimate_fmap(p.rows, {.iters = 1});
  FunctionalMap warm = estimate_fmap(p.rows, {.iters = 1}, p.c_gt);
  CHECK(rel_err(warm.c, p.c_gt) < rel_err(cold.c, p.c_gt));
}

TEST_CASE("IRLS does not increase the robust energy") {
  test::OutlierProblem p = test::outlier_problem(5);
  double prev = estimate_fmap(p.rows, {.iters = 1}).residual;
  for (int t = 2; t <= 6; ++t) {
    double e = estimate_fmap(p.rows, {.iters = t}).residual;
    CHECK(e <= prev * (1 + 1e-12));
    prev = e;
  }
}

TEST_CASE("underdetermined systems fall back to a ridge with a warning") {
  CaptureWarnings w;
  std::mt19937_64 rng(4);
  Eigen::MatrixXd a = test::random_matrix(rng, 3, 6);
  FunctionalMap fm = estimate_fmap({a, a});
  CHECK(fm.c.allFinite());
  CHECK(!w.seen.empty());
  CHECK((a * fm.c - a).norm() < 1e-6);
}

TEST_CASE("estimation input validation") {
  CHECK_THROWS_AS(estimate_fmap({Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)}), DataError);
  CHECK_THROWS_AS(estimate_fmap({Eigen::MatrixXd::Zero(5, 3), Eigen::MatrixXd::Ones(5, 3)}), DataError);
  CHECK_THROWS_AS(estimate_fmap({Eigen::MatrixXd::Ones(5, 3), Eigen::MatrixXd::Ones(4, 3)}), DataError);
  CHECK_THROWS_AS(IrlsConfig{.kappa = 0.0}.validate(), DataError);
  CHECK_THROWS_AS(IrlsConfig{.iters = 0}.validate(), DataError);
}

TEST_CASE("soft permutation concentrates on the diagonal for small t") {
  std::mt19937_64 rng(6);
  Points x = test::random_points(rng, 30);
  Eigen::MatrixXd phi = test::random_matrix(rng, 30, 5);
  double min_gap = 1e300;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < i; ++j) min_gap = std::min(min_gap, (phi.row(i) - phi.row(j)).norm());
  BasisMatrix b{phi, 0, BasisKind::External};
  PointCloud xk = PointCloud::make(x, 0), xl = PointCloud::make(x, 1);
  FlowField f = flow_nn(b, Eigen::MatrixXd::Identity(5, 5), b, xl, xk, 0.01 * min_gap);
  const double diam = (x.colwise().maxCoeff() - x.colwise().minCoeff()).norm();
  CHECK(f.flow.cwiseAbs().maxCoeff() < 1e-6 * diam);
}

TEST_CASE("soft permutation is row stochastic and warps into the hull") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd pk = test::random_matrix(rng, 40, 6), pl = test::random_matrix(rng, 35, 6);
    Eigen::MatrixXd c = test::random_matrix(rng, 6, 6);
    for (double t : {1e-4, 0.1, 10.0}) {
      Eigen::MatrixXd pi = soft_permutation(pk, c, pl, t);
      CHECK(pi.allFinite());
      CHECK((pi.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      CHECK(pi.minCoeff() >= 0.0);
      CHECK(pi.maxCoeff() <= 1.0);
      // row-stochastic weights keep warped points in the bounding box of X_l
      Points xl = test::random_points(rng, 35);
      Points warped = pi * xl;
      for (int d = 0; d < 3; ++d) {
        CHECK(warped.col(d).minCoeff() >= xl.col(d).minCoeff() - 1e-12);
        CHECK(warped.col(d).maxCoeff() <= xl.col(d).maxCoeff() + 1e-12);
      }
    }
  }
}

TEST_CASE("soft permutation matches a direct softmax") {
  std::mt19937_64 rng(8);
  Eigen::MatrixXd pk = test::random_matrix(rng, 6, 3), pl = test::random_matrix(rng, 5, 3);
  Eigen::MatrixXd c = test::random_matrix(rng, 3, 3);
  Eigen::MatrixXd pi = soft_permutation(pk, c, pl, 0.7);
  Eigen::MatrixXd mapped = pk * c;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd e(5);
    for (int j = 0; j < 5; ++j) e(j) = std::exp(-(mapped.row(i) - pl.row(j)).norm() / 0.7);
    e /= e.sum();
    CHECK((pi.row(i).transpose() - e).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("basis-space flow is exact for affine motion under affinity bases") {
  std::mt19937_64 rng(9);
  Points x = test::random_points(rng, 50);
  RigidSegmentation seg{Eigen::VectorXi::Zero(50), 1};
  Eigen::Matrix4d t = test::random_rigid(rng, 0.5, 0.3);
  t.topLeftCorner<3, 3>() *= 0.8;
  PointCloud xk = PointCloud::make(x, 0);
  Points y = test::apply(t, x);
  // target cloud sees a shuffled, partial view; flow_bs does not need correspondences
  Points partial = y.topRows(20).colwise().reverse();
  PointCloud xl = PointCloud::make(partial, 1);
  RigidSegmentation seg_l{Eigen::VectorXi::Zero(20), 1};
  FlowField f = flow_bs(affinity_bases(xk, seg), t.transpose(), affinity_bases(xl, seg_l), xl, xk);
  CHECK((f.flow - (y - x)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(f.flow.allFinite());

  // identity map between identical clouds gives zero flow
  FlowField z = flow_bs(affinity_bases(xk, seg), Eigen::MatrixXd::Identity(4, 4), affinity_bases(xk, seg), xk, xk);
  CHECK(z.flow.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("blending flows") {
  std::mt19937_64 rng(10);
  FlowField a{test::random_points(rng, 12), 0, 1, FlowVariant::NN};
  FlowField b{test::random_points(rng, 12), 0, 1, FlowVariant::BS};
  CHECK(blend_flows(a, b, Eigen::VectorXd::Ones(12)).flow == a.flow);
  CHECK(blend_flows(a, b, Eigen::VectorXd::Zero(12)).flow == b.flow);
  FlowField half = blend_flows(a, b, Eigen::VectorXd::Constant(12, 0.5));
  for (int i = 0; i < 12; ++i)
    for (int d = 0; d < 3; ++d) CHECK(half.flow(i, d) == doctest::Approx(0.5 * (a.flow(i, d) + b.flow(i, d))));
  CHECK_THROWS_AS(blend_flows(a, b, Eigen::VectorXd::Ones(3)), DataError);
}

TEST_CASE("confidence is one for a hard assignment and zero for a uniform one") {
  Eigen::MatrixXd pi = Eigen::MatrixXd::Identity(4, 4);
  CHECK((permutation_confidence(pi).array() - 1.0).abs().maxCoeff() < 1e-12);
  Eigen::MatrixXd uni = Eigen::MatrixXd::Constant(4, 4, 0.25);
  CHECK(permutation_confidence(uni).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flow variant names") {
  CHECK(flow_variant_from_string("nn") == FlowVariant::NN);
  CHECK(std::string(to_string(FlowVariant::Blend)) == "blend");
  CHECK_THROWS_AS(flow_variant_from_string("refined"), DataError);
}
