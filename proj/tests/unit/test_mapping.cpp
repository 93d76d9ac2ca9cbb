#include "doctest.h"
#include "helpers.hpp"

#include "caplf/error.hpp"
#include "caplf/plf.hpp"

#include <algorithm>
#include <cmath>

using namespace caplf;

namespace {

double cdf_gap(const ScalarMixture& a, const ScalarMixture& b) {
  const double mu = a.mean(), sd = std::sqrt(std::max(a.variance(), 1e-30));
  double se = 0;
  for (int i = 0; i < 201; ++i) {
    const double t = mu + sd * (-4.0 + 8.0 * i / 200.0);
    se += std::pow(a.cdf(t) - b.cdf(t), 2);
  }
  return std::sqrt(se / 201);
}

}  // namespace

TEST_SUITE("mapping") {

TEST_CASE("segment statistics") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = testutil::synthetic_wind();
  const SegmentStats a = segment_stats(map, g, 20000, 1);
  CHECK(a.counts[0] + a.counts[1] + a.counts[2] == 20000);
  CHECK(a.probs[0] + a.probs[1] + a.probs[2] == doctest::Approx(1.0).epsilon(1e-12));
  for (int s = 0; s < 3; ++s) CHECK(a.counts[static_cast<std::size_t>(s)] > 0);
  const SegmentStats b = segment_stats(map, g, 200000, 2);
  for (std::size_t s = 0; s < 3; ++s) {
    const double p = b.probs[s];
    CHECK(std::abs(a.probs[s] - p) <= 3 * std::sqrt(p * (1 - p) / 20000) + 3 * std::sqrt(p * (1 - p) / 200000));
  }
  for (int l = 0; l < 20000; ++l) {
    CHECK(a.z[l] == doctest::Approx(a.samples.row(l).sum()).epsilon(1e-12));
  }
}

TEST_CASE("tiny wind variance keeps all mass in the dead band") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = Gmm::single(Eigen::VectorXd::Constant(9, 3.3 / 9), 1e-8 * Eigen::MatrixXd::Identity(9, 9));
  const SegmentStats st = segment_stats(map, g, 1000, 3);
  CHECK(st.probs[0] == 1.0);
  CHECK(st.probs[1] == 0.0);
  CHECK(st.probs[2] == 0.0);
}

TEST_CASE("exceed policy") {
  SegmentedMap map = testutil::synthetic_map();
  map.delta[3] = 3.0;
  const Gmm g = testutil::synthetic_wind();
  CHECK_THROWS_AS(segment_stats(map, g, 5000, 1), CapacityError);
  map.exceed_policy = ExceedPolicy::Clamp;
  const SegmentStats st = segment_stats(map, g, 5000, 1);
  CHECK(st.exceeded > 0);
  for (int l = 0; l < 5000; ++l) {
    if (st.regimes[static_cast<std::size_t>(l)] == Regime::Exceeded) CHECK(st.segment[static_cast<std::size_t>(l)] == 2);
  }
}

TEST_CASE("direct method weights") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = testutil::synthetic_wind();
  const int L = 300;
  const SegmentStats st = segment_stats(map, g, L, 4);
  const PlfResult r = direct_method(map, g, st);
  CHECK_NOTHROW(r.validate());
  CHECK(r.components.size() == static_cast<std::size_t>(L * g.size()));
  std::array<double, 3> seg{0, 0, 0};
  double total = 0;
  for (int l = 0; l < L; ++l) {
    double per = 0;
    for (int j = 0; j < g.size(); ++j) {
      const LatentComponent& c = r.components[static_cast<std::size_t>(l * g.size() + j)];
      per += c.weight;
      CHECK(c.segment == st.segment[static_cast<std::size_t>(l)]);
      // The latent mean sits on the sampled aggregate.
      CHECK(c.mean.sum() == doctest::Approx(st.z[l]).epsilon(1e-10));
    }
    CHECK(per == doctest::Approx(1.0 / L).epsilon(1e-12));
  }
  for (const auto& c : r.components) {
    seg[static_cast<std::size_t>(c.segment)] += c.weight;
    total += c.weight;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t s = 0; s < 3; ++s) CHECK(std::abs(seg[s] - st.probs[s]) <= 1e-12);
}

TEST_CASE("direct method with one sample and one component") {
  SegmentedMap map = testutil::synthetic_map();
  Eigen::MatrixXd S = 0.01 * Eigen::MatrixXd::Identity(9, 9);
  S(0, 1) = S(1, 0) = 0.005;
  const Gmm g = Gmm::single(Eigen::VectorXd::Constant(9, 0.37), S);
  const SegmentStats st = segment_stats(map, g, 1, 8);
  const PlfResult r = direct_method(map, g, st);
  REQUIRE(r.components.size() == 1);
  const Gmm cond = condition_on_sum(g, map.direction, st.z[0]);
  const auto s = static_cast<std::size_t>(st.segment[0]);
  const Gmm expect = affine_map(cond, map.maps[s], map.offsets[s]);
  const Gmm got = r.output_gmm([&] {
    std::vector<int> all(static_cast<std::size_t>(r.n_outputs()));
    for (int i = 0; i < r.n_outputs(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }());
  CHECK((got.means[0] - expect.means[0]).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((got.covs[0] - expect.covs[0]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical segment maps reduce to one affine map") {
  SegmentedMap map = testutil::synthetic_map();
  map.maps[0] = map.maps[2];
  map.maps[1] = map.maps[2];
  map.offsets[0] = map.offsets[2];
  map.offsets[1] = map.offsets[2];
  const Gmm g = testutil::synthetic_wind();
  const PlfResult r = direct_method(map, g, segment_stats(map, g, 1000, 6));
  const Gmm exact = affine_map(g, map.maps[0], map.offsets[0]);
  double sum = 0;
  for (int k = 0; k < map.n_outputs(); ++k) sum += cdf_gap(marginal(exact, k), r.marginal(k));
  CHECK(sum / map.n_outputs() < 1e-2);
}

TEST_CASE("indirect method on a single Gaussian segment") {
  SegmentedMap map = testutil::synthetic_map();
  map.delta = {0.0, 100.0, 200.0, 300.0};
  const Gmm g = Gmm::single(Eigen::VectorXd::Constant(9, 0.37), 0.01 * Eigen::MatrixXd::Identity(9, 9));
  const SegmentStats st = segment_stats(map, g, 20000, 2);
  REQUIRE(st.probs[0] == 1.0);
  const PlfResult r = indirect_method(map, g, st, 1, 3);
  REQUIRE(r.components.size() == 1);
  const Moments exact = moments(affine_map(g, map.maps[0], map.offsets[0]));
  const Eigen::VectorXd var = r.variance();
  for (int k = 0; k < map.n_outputs(); ++k) {
    const double sd = std::sqrt(exact.cov(k, k));
    CHECK(std::abs(r.mean()[k] - exact.mean[k]) <= 4 * sd / std::sqrt(20000.0));
    CHECK(std::abs(var[k] / exact.cov(k, k) - 1.0) <= 0.05);
  }
}

TEST_CASE("indirect method bookkeeping") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = testutil::synthetic_wind();
  const SegmentStats st = segment_stats(map, g, 10000, 9);
  const PlfResult r = indirect_method(map, g, st, 5, 4);
  CHECK_NOTHROW(r.validate());
  CHECK(r.components.size() <= 15);
  std::array<double, 3> seg{0, 0, 0};
  for (const auto& c : r.components) seg[static_cast<std::size_t>(c.segment)] += c.weight;
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(std::abs(seg[s] - st.probs[s]) <= 1e-12);
    CHECK(r.segment_J[s] == std::min(5, st.counts[s] / 10));
  }
  // Same inputs, same result.
  const PlfResult again = indirect_method(map, g, st, 5, 4, 3);
  CHECK(result_to_json(r) == result_to_json(again));
}

TEST_CASE("indirect method with a sparse segment falls back to direct components") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = testutil::synthetic_wind();
  const SegmentStats st = segment_stats(map, g, 100, 10);
  REQUIRE(st.counts[0] > 0);
  REQUIRE(st.counts[0] < 10);
  const PlfResult r = indirect_method(map, g, st, 5, 4);
  CHECK_NOTHROW(r.validate());
  CHECK(r.segment_J[0] == g.size());
  int seg0 = 0;
  for (const auto& c : r.components) seg0 += c.segment == 0;
  CHECK(seg0 == st.counts[0] * g.size());
}

TEST_CASE("result accessors agree with the dense mixture") {
  const SegmentedMap map = testutil::synthetic_map();
  const Gmm g = testutil::synthetic_wind();
  const PlfResult r = indirect_method(map, g, segment_stats(map, g, 5000, 12), 3, 1);
  const Gmm y = r.y_gmm();
  const Gmm f = r.flow_gmm();
  CHECK(y.dim() == map.n_states);
  CHECK(f.dim() == map.n_flows);
  const Moments my = moments(y), mf = moments(f);
  const Eigen::VectorXd mean = r.mean(), var = r.variance();
  CHECK((mean.head(map.n_states) - my.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((mean.tail(map.n_flows) - mf.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((var.head(map.n_states) - my.cov.diagonal()).cwiseAbs().maxCoeff() <= 1e-12);
  for (double t : {-1.0, 0.0, 0.5}) CHECK(r.marginal(2).cdf(t) == doctest::Approx(marginal_cdf(y, 2, t)).epsilon(1e-12));
  CHECK_THROWS_AS(r.marginal(r.n_outputs()), ValidationError);
}

TEST_CASE("method names") {
  CHECK(parse_method("direct") == Method::Direct);
  CHECK(parse_method("indirect") == Method::Indirect);
  CHECK_THROWS_AS(parse_method("sideways"), ValidationError);
  CHECK(std::string(method_name(Method::Indirect)) == "indirect");
}

}
