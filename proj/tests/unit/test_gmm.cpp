#include "doctest.h"

#include "caplf/error.hpp"
#include "caplf/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace caplf;

namespace {

Eigen::VectorXd v3(double a, double b, double c) { return Eigen::Vector3d(a, b, c); }

/// Mixture used for the conditioning oracle (scripts/oracles.py).
Gmm oracle_gmm() {
  Eigen::Matrix3d A;
  A << 0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.05;
  Gmm g;
  g.weights = Eigen::Vector2d(0.3, 0.7);
  g.means = {v3(0.1, 0.2, 0.3), v3(0.6, 0.4, 0.5)};
  g.covs = {A, 0.5 * A + 0.01 * Eigen::Matrix3d::Identity()};
  return g;
}

Eigen::VectorXd column_mean(const Eigen::MatrixXd& X) { return X.colwise().mean().transpose(); }

Eigen::MatrixXd column_cov(const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd c = X.rowwise() - X.colwise().mean();
  return c.transpose() * c / static_cast<double>(X.rows());
}

double ks_distance(const Gmm& g, int k, const Eigen::MatrixXd& X) {
  std::vector<double> s(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) s[i] = X(i, k);
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = marginal_cdf(g, k, s[i]);
    d = std::max({d, std::abs(F - static_cast<double>(i + 1) / n), std::abs(F - static_cast<double>(i) / n)});
  }
  return d;
}

}  // namespace

TEST_SUITE("gmm") {

TEST_CASE("validation") {
  Gmm g = oracle_gmm();
  CHECK_NOTHROW(g.validate());
  g.weights[0] = 0.4;
  CHECK_THROWS_AS(g.validate(), ValidationError);
  g = oracle_gmm();
  g.covs[0](0, 1) += 1e-3;
  CHECK_THROWS_AS(g.validate(), ValidationError);
}

TEST_CASE("PSD enforcement") {
  Eigen::Matrix2d m;
  m << 1.0, 1.0, 1.0, 1.0 - 1e-13;
  Eigen::MatrixXd a = m;
  enforce_psd(a);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff() >= -1e-15);
  Eigen::MatrixXd b = Eigen::Matrix2d(Eigen::Vector2d(1.0, -0.5).asDiagonal());
  CHECK_THROWS_AS(enforce_psd(b), NumericalError);
}

TEST_CASE("conditioning matches the reference computation") {
  const Gmm c = condition_on_sum(oracle_gmm(), Eigen::VectorXd::Ones(3), 1.0);
  REQUIRE(c.size() == 2);
  CHECK(std::abs(c.weights[0] - 0.3584036103157474) <= 1e-12);
  CHECK(std::abs(c.weights[1] - 0.6415963896842527) <= 1e-12);
  CHECK((c.means[0] - v3(0.18333333333333332, 0.39999999999999997, 0.41666666666666663)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((c.means[1] - v3(0.48333333333333334, 0.1666666666666667, 0.35)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(c.covs[0](0, 0) - 0.02958333333333333) <= 1e-12);
  CHECK(std::abs(c.covs[0](0, 1) + 0.015000000000000001) <= 1e-12);
  CHECK(std::abs(c.covs[0](0, 2) + 0.014583333333333335) <= 1e-12);
    for (int j = 0; j < 2; ++j) {
    CHECK(c.means[j].sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Eigen::VectorXd e = Eigen::VectorXd::Ones(3);
    CHECK(std::abs(e.dot(c.covs[j] * e)) <= 1e-12);
  }
}

TEST_CASE("marginal CDF matches the reference computation") {
  CHECK(std::abs(marginal_cdf(oracle_gmm(), 1, 0.35) - 0.49834838172182067) <= 1e-12);
}

TEST_CASE("conditioning a standard normal on one coordinate") {
  const Gmm g = Gmm::single(Eigen::Vector2d(0.3, -1.0), Eigen::Matrix2d::Identity());
  const Gmm c = condition_on_sum(g, Eigen::Vector2d(1.0, 0.0), 2.5);
  CHECK(c.means[0][0] == doctest::Approx(2.5));
  CHECK(c.means[0][1] == doctest::Approx(-1.0));
  CHECK(std::abs(c.covs[0](0, 0)) <= 1e-15);
  CHECK(c.covs[0](1, 1) == doctest::Approx(1.0));
}

TEST_CASE("degenerate components are dropped when conditioning") {
  Gmm g = oracle_gmm();
  g.covs[0].setZero();
  const Gmm c = condition_on_sum(g, Eigen::VectorXd::Ones(3), 1.0);
  CHECK(c.size() == 1);
  CHECK(c.weights[0] == doctest::Approx(1.0));
  g.covs[1].setZero();
  CHECK_THROWS_AS(condition_on_sum(g, Eigen::VectorXd::Ones(3), 1.0), NumericalError);
}

TEST_CASE("conditional moments agree with rejection sampling") {
  const Gmm g = oracle_gmm();
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(3);
  const double z = 1.2;
  const Moments an = moments(condition_on_sum(g, e, z));
  const Moments full = moments(g);
  const double delta = 1e-2 * std::sqrt(e.dot(full.cov * e));
  const Eigen::MatrixXd X = sample(g, 400000, 5);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (std::abs(X.row(i).sum() - z) < delta) keep.push_back(i);
  }
  REQUIRE(keep.size() > 1000);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t i = 0; i < keep.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = X.row(keep[i]);
  const Eigen::VectorXd mu = column_mean(A);
  const Eigen::MatrixXd S = column_cov(A);
  const double n = static_cast<double>(A.rows());
  for (int k = 0; k < 3; ++k) {
    const double se = std::sqrt(an.cov(k, k) / n);
    CHECK(std::abs(mu[k] - an.mean[k]) <= 3.0 * se + 1e-3);
    CHECK(std::abs(S(k, k) - an.cov(k, k)) <= 0.1 * an.cov(k, k));
  }
}

TEST_CASE("EM with one component reproduces the sample moments") {
  const Eigen::MatrixXd X = sample(Gmm::single(Eigen::Vector2d(1.0, 2.0), Eigen::Matrix2d(Eigen::Vector2d(0.5, 2.0).asDiagonal())), 2000, 3);
  const Gmm g = em_fit(X, 1, 1);
  CHECK((g.means[0] - column_mean(X)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((g.covs[0] - column_cov(X)).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("EM recovers a separated two-component mixture") {
  Gmm truth;
  truth.weights = Eigen::Vector2d(0.4, 0.6);
  truth.means = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(5.0, 3.0)};
  truth.covs = {Eigen::Matrix2d::Identity(), 0.5 * Eigen::Matrix2d::Identity()};
  const Eigen::MatrixXd X = sample(truth, 5000, 17);
  const EmReport rep = em_fit_report(X, 2, 2);
  const Gmm& g = rep.gmm;
  const int a = g.means[0][0] < g.means[1][0] ? 0 : 1;
  const int b = 1 - a;
  const double se0 = std::sqrt(1.0 / (0.4 * 5000)), se1 = std::sqrt(0.5 / (0.6 * 5000));
  CHECK((g.means[a] - truth.means[0]).cwiseAbs().maxCoeff() <= 3 * se0);
  CHECK((g.means[b] - truth.means[1]).cwiseAbs().maxCoeff() <= 3 * se1);
  CHECK(std::abs(g.weights[a] - 0.4) <= 3 * std::sqrt(0.24 / 5000));
  for (std::size_t i = 1; i < rep.log_likelihood.size(); ++i) {
    CHECK(rep.log_likelihood[i] >= rep.log_likelihood[i - 1] - 1e-9);
  }
}

TEST_CASE("EM log-likelihood never decreases on overlapping data") {
  const Eigen::MatrixXd X = sample(oracle_gmm(), 3000, 23);
  const EmReport rep = em_fit_report(X, 4, 7);
  REQUIRE(rep.log_likelihood.size() >= 2);
  for (std::size_t i = 1; i < rep.log_likelihood.size(); ++i) {
    CHECK(rep.log_likelihood[i] >= rep.log_likelihood[i - 1] - 1e-9);
  }
  CHECK(em_fit(X, 4, 7).means[0] == rep.gmm.means[0]);
}

TEST_CASE("EM preconditions") {
  CHECK_THROWS_AS(em_fit(Eigen::MatrixXd::Random(5, 2), 2, 1), ValidationError);
  CHECK_THROWS_AS(em_fit(Eigen::MatrixXd::Ones(50, 2), 1, 1), ValidationError);
}

TEST_CASE("sampling") {
  SUBCASE("zero covariance gives the mean") {
    const Eigen::MatrixXd X = sample(Gmm::single(Eigen::Vector2d(1.5, -2.0), Eigen::Matrix2d::Zero()), 100, 1);
    CHECK((X.rowwise() - Eigen::RowVector2d(1.5, -2.0)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("deterministic under the seed") {
    CHECK(sample(oracle_gmm(), 500, 9) == sample(oracle_gmm(), 500, 9));
    CHECK(sample(oracle_gmm(), 500, 9) != sample(oracle_gmm(), 500, 10));
  }
  SUBCASE("component frequencies follow the weights") {
    Gmm g;
    g.weights = Eigen::Vector3d(0.2, 0.5, 0.3);
    g.means = {Eigen::VectorXd::Constant(1, -100.0), Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 100.0)};
    g.covs = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
    const int n = 10000;
    const Eigen::MatrixXd X = sample(g, n, 4);
    std::array<int, 3> c{0, 0, 0};
    for (int i = 0; i < n; ++i) ++c[X(i, 0) < -50 ? 0 : (X(i, 0) > 50 ? 2 : 1)];
    for (int j = 0; j < 3; ++j) {
      const double p = g.weights[j];
      CHECK(std::abs(c[j] / double(n) - p) <= 3 * std::sqrt(p * (1 - p) / n));
    }
  }
  SUBCASE("singular covariance") {
    Eigen::Matrix2d S;
    S << 1, 1, 1, 1;
    const Eigen::MatrixXd X = sample(Gmm::single(Eigen::Vector2d::Zero(), S), 200, 2);
    CHECK((X.col(0) - X.col(1)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("affine maps") {
  const Gmm g = oracle_gmm();
  const Gmm same = affine_map(g, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
  for (int j = 0; j < 2; ++j) {
    CHECK(same.means[j] == g.means[j]);
    CHECK(same.covs[j] == g.covs[j]);
  }
  Eigen::MatrixXd A(2, 3), A2(2, 2);
  A << 1, -2, 0.5, 0, 1, 3;
  A2 << 0.3, 1, -1, 2;
  const Eigen::Vector2d b(0.1, -0.4), b2(2.0, 1.0);
  CHECK((moments(affine_map(g, A, b)).mean - (A * moments(g).mean + b)).cwiseAbs().maxCoeff() <= 1e-12);
  const Gmm two = affine_map(affine_map(g, A, b), A2, b2);
  const Gmm one = affine_map(g, A2 * A, A2 * b + b2);
  for (int j = 0; j < 2; ++j) {
    CHECK((two.means[j] - one.means[j]).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((two.covs[j] - one.covs[j]).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK_THROWS_AS(affine_map(g, A, Eigen::Vector3d::Zero()), ValidationError);
}

TEST_CASE("projection matches Monte Carlo") {
  Gmm g;
  g.weights = Eigen::Vector2d(0.5, 0.5);
  g.means = {Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 1)};
  g.covs = {Eigen::Matrix2d::Identity(), 0.3 * Eigen::Matrix2d::Identity()};
  Eigen::MatrixXd A(1, 2);
  A << 1.0, -0.5;
  const Gmm p = affine_map(g, A, Eigen::VectorXd::Zero(1));
  const Eigen::MatrixXd Y = sample(g, 50000, 8) * A.transpose();
  std::vector<double> s(Y.data(), Y.data() + Y.size());
  std::sort(s.begin(), s.end());
  double se = 0;
  const int grid = 200;
  for (int k = 0; k < grid; ++k) {
    const double t = s[static_cast<std::size_t>((k + 0.5) / grid * s.size())];
    const double emp = static_cast<double>(std::upper_bound(s.begin(), s.end(), t) - s.begin()) / s.size();
    se += std::pow(marginal_cdf(p, 0, t) - emp, 2);
  }
  CHECK(std::sqrt(se / grid) < 1e-2);
}

TEST_CASE("augmentation") {
  const Gmm g = oracle_gmm();
  const Eigen::Vector3d e(1.0, 2.0, -1.0);
  const Gmm a = augment(g, e);
  CHECK(a.dim() == 4);
  CHECK(moments(a).mean[3] == doctest::Approx(e.dot(moments(g).mean)).epsilon(1e-12));
  for (int j = 0; j < 2; ++j) {
    CHECK((a.covs[j].topRightCorner(3, 1) - g.covs[j] * e).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a.covs[j](3, 3) == doctest::Approx(e.dot(g.covs[j] * e)).epsilon(1e-12));
  }
  const Gmm z = augment(g, Eigen::Vector3d::Zero());
  for (int j = 0; j < 2; ++j) {
    CHECK(z.means[j][3] == 0.0);
    CHECK(z.covs[j](3, 3) == 0.0);
  }
}

TEST_CASE("moments") {
  const Gmm g = oracle_gmm();
  const Moments m1 = moments(Gmm::single(g.means[0], g.covs[0]));
  CHECK(m1.mean == g.means[0]);
  CHECK((m1.cov - g.covs[0]).cwiseAbs().maxCoeff() <= 1e-15);

  Gmm pm;
  const Eigen::Vector2d m(1.0, -2.0);
  pm.weights = Eigen::Vector2d(0.5, 0.5);
  pm.means = {m, -m};
  pm.covs = {Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};
  const Moments mm = moments(pm);
  CHECK(mm.mean.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((mm.cov - m * m.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  const Moments an = moments(g);
  const Eigen::MatrixXd X = sample(g, 100000, 12);
  const Eigen::VectorXd mu = column_mean(X);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mu[k] - an.mean[k]) <= 3 * std::sqrt(an.cov(k, k) / 1e5));
}

TEST_CASE("marginal CDF") {
  const Gmm std_normal = Gmm::single(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  CHECK(marginal_cdf(std_normal, 0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(marginal_cdf(std_normal, 0, -std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(marginal_cdf(std_normal, 0, std::numeric_limits<double>::infinity()) == 1.0);
  const Gmm point = Gmm::single(Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Zero(1, 1));
  CHECK(marginal_cdf(point, 0, 1.999) == 0.0);
  CHECK(marginal_cdf(point, 0, 2.0) == 1.0);

  const Gmm g = oracle_gmm();
  double prev = 0;
  for (double t = -1.0; t <= 2.0; t += 0.01) {
    const double F = marginal_cdf(g, 2, t);
    CHECK(F >= prev);
    prev = F;
  }
  const int n = 50000;
  const Eigen::MatrixXd X = sample(g, n, 31);
  std::vector<double> s(X.col(0).data(), X.col(0).data() + n);
  std::nth_element(s.begin(), s.begin() + n / 2, s.end());
  CHECK(std::abs(marginal_cdf(g, 0, s[n / 2]) - 0.5) <= 3 * std::sqrt(0.25 / n));
  CHECK_THROWS_AS(marginal_cdf(g, 3, 0.0), ValidationError);
}

TEST_CASE("KS distance against own samples") {
  const Gmm g = oracle_gmm();
  const Eigen::MatrixXd X = sample(g, 10000, 41);
  for (int k = 0; k < 3; ++k) CHECK(ks_distance(g, k, X) < 0.02);
  const Gmm m = merge({{0.25, g}, {0.75, condition_on_sum(g, Eigen::VectorXd::Ones(3), 1.0)}});
  const Eigen::MatrixXd Y = sample(m, 10000, 42);
  for (int k = 0; k < 3; ++k) CHECK(ks_distance(m, k, Y) < 0.02);
}

TEST_CASE("merge") {
  const Gmm g = oracle_gmm();
  const Gmm one = merge({{1.0, g}});
  CHECK(one.weights == g.weights);
  const Gmm twice = merge({{0.5, g}, {0.5, g}});
  CHECK(twice.size() == 4);
  for (double t : {-0.5, 0.1, 0.4, 0.9}) CHECK(marginal_cdf(twice, 1, t) == doctest::Approx(marginal_cdf(g, 1, t)).epsilon(1e-14));
  const Gmm h = Gmm::single(v3(1, 1, 1), Eigen::Matrix3d::Identity());
  const Moments a = moments(g), b = moments(h), c = moments(merge({{0.3, g}, {0.7, h}}));
  const Eigen::VectorXd mu = 0.3 * a.mean + 0.7 * b.mean;
  const Eigen::MatrixXd second = 0.3 * (a.cov + a.mean * a.mean.transpose()) + 0.7 * (b.cov + b.mean * b.mean.transpose());
  CHECK((c.mean - mu).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((c.cov - (second - mu * mu.transpose())).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(merge({{0.3, g}, {0.3, h}}), ValidationError);
}

}
