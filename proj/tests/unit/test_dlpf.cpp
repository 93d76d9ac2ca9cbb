#include "doctest.h"
#include "helpers.hpp"

#include "caplf/dlpf.hpp"
#include "caplf/plf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace caplf;

namespace {

InjectionSet jitter(const InjectionSet& base, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  InjectionSet out = base;
  for (Eigen::Index i = 0; i < out.P.size(); ++i) out.P[i] += n(rng);
  for (Eigen::Index i = 0; i < out.Q.size(); ++i) out.Q[i] += 0.5 * n(rng);
  return out;
}

}  // namespace

TEST_SUITE("dlpf") {

TEST_CASE("two-bus model by hand") {
  const NetworkCase net = parse_case(testutil::two_bus());
  const LinearPfModel m = build_dlpf(net, build_admittance(net));
  const Eigen::MatrixXd L = m.Lambda;
  const Eigen::MatrixXd C = m.C;
  CHECK(L.rows() == 2);
  CHECK(L(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(L(1, 1) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(L(0, 1) == 0.0);
  CHECK(L(1, 0) == 0.0);
  // Boundary is [theta_slack; V_slack]; the slack magnitude drives the V row.
  CHECK(C(1, 1) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(C(0, 1) == 0.0);
  Eigen::VectorXd inj(2);
  inj << -0.5, -0.2;
  const Eigen::VectorXd y = m.solve(inj);
  CHECK(y[0] == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.98).epsilon(1e-12));
}

TEST_CASE("IEEE 14-bus dimensions and block structure") {
  const NetworkCase net = load_case(testutil::case_path("case14"));
  const Admittance adm = build_admittance(net);
  const LinearPfModel m = build_dlpf(net, adm);
  CHECK(m.Lambda.rows() == 22);
  CHECK(m.Lambda.cols() == 22);
  CHECK(m.C.cols() == 1 + static_cast<Eigen::Index>(net.T.size()));

  // Rebuild the blocks straight from G and B.
  const Eigen::MatrixXd G = adm.G, B = adm.B, Bp = adm.B_noshunt;
  const int N = net.N(), M = net.M();
  Eigen::MatrixXd L(N + M, N + M), C(N + M, 1 + static_cast<int>(net.T.size()));
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) L(i, j) = -Bp(net.S[i], net.S[j]);
    for (int j = 0; j < M; ++j) L(i, N + j) = G(net.S[i], net.L[j]);
    C(i, 0) = Bp(net.S[i], net.slack);
    for (std::size_t j = 0; j < net.T.size(); ++j) C(i, 1 + static_cast<int>(j)) = -G(net.S[i], net.T[j]);
  }
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) L(N + i, j) = -G(net.L[i], net.S[j]);
    for (int j = 0; j < M; ++j) L(N + i, N + j) = -B(net.L[i], net.L[j]);
    C(N + i, 0) = G(net.L[i], net.slack);
    for (std::size_t j = 0; j < net.T.size(); ++j) C(N + i, 1 + static_cast<int>(j)) = B(net.L[i], net.T[j]);
  }
  CHECK((Eigen::MatrixXd(m.Lambda) - L).cwiseAbs().maxCoeff() == 0.0);
  CHECK((Eigen::MatrixXd(m.C) - C).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.Lambda_inv * L - Eigen::MatrixXd::Identity(N + M, N + M)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("zero conductance decouples angles and magnitudes") {
  const NetworkCase net = parse_case(testutil::two_bus(30, 10, 0.0, 0.2));
  const Eigen::MatrixXd L = build_dlpf(net, build_admittance(net)).Lambda;
  CHECK(L(0, 1) == 0.0);
  CHECK(L(1, 0) == 0.0);
}

TEST_CASE("the map is affine") {
  const NetworkCase net = load_case(testutil::case_path("case14"));
  const LinearPfModel m = build_dlpf(net, build_admittance(net));
  const Eigen::VectorXd cb = Eigen::MatrixXd(m.C) * m.boundary;
  CHECK(m.solve(-cb).cwiseAbs().maxCoeff() <= 1e-12);
  std::mt19937_64 rng(3);
  const InjectionSet base = base_injections(net);
  const Eigen::VectorXd a = stack_injections(jitter(base, rng, 0.1));
  const Eigen::VectorXd b = stack_injections(jitter(base, rng, 0.1));
  CHECK((m.solve(2 * a + cb) - 2 * m.solve(a)).cwiseAbs().maxCoeff() <= 1e-10);
  const double t = 0.3;
  CHECK((m.solve(t * a + (1 - t) * b) - (t * m.solve(a) + (1 - t) * m.solve(b))).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("118-bus voltages stay close to the AC solution") {
  const NetworkCase net = load_case(testutil::case_path("case118"));
  const AcSolver ac(net);
  const LinearPfModel m = build_dlpf(net, ac.admittance());
  std::mt19937_64 rng(7);
  const InjectionSet base = base_injections(net);
  for (int k = 0; k < 10; ++k) {
    const InjectionSet inj = jitter(base, rng, 0.05);
    const StateVector lin = solve_dlpf(net, m, inj);
    const StateVector exact = ac.solve(inj).state;
    CHECK((lin.V_L - exact.V_L).cwiseAbs().maxCoeff() <= 1e-2);
  }
}

TEST_CASE("flow map on small cases") {
  SUBCASE("lossless line between free buses") {
    const std::string text =
        "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 10 0 0 0 1 1 0 100 1 1.1 0.9;\n"
        "3 1 10 0 0 0 1 1 0 100 1 1.1 0.9;\n];\nmpc.gen = [\n1 0 0 300 -300 1 100 1 500 0;\n];\n"
        "mpc.branch = [\n1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n2 3 0 0.25 0 0 0 0 0 0 1 -360 360;\n];\n";
    const NetworkCase net = parse_case(text);
    const FlowMap fm = branch_flow_matrix(net, build_admittance(net));
    const Eigen::MatrixXd F = fm.F;
    // Y = [theta_2, theta_3, V_2, V_3]
    CHECK(F(1, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(F(1, 1) == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(F(1, 2) == 0.0);
    CHECK(F(1, 3) == 0.0);
    CHECK(fm.f0[1] == 0.0);
  }
  SUBCASE("slack angle enters the offset") {
    std::string text = testutil::two_bus();
    text.replace(text.find("1 3 0 0 0 0 1 1 0"), 17, "1 3 0 0 0 0 1 1 10");
    const NetworkCase net = parse_case(text);
    const FlowMap fm = branch_flow_matrix(net, build_admittance(net));
    CHECK(fm.f0[0] == doctest::Approx(10.0 * 10.0 * std::numbers::pi / 180.0).epsilon(1e-12));
  }
}

TEST_CASE("14-bus linear flows track AC flows before correction") {
  const NetworkCase net = load_case(testutil::case_path("case14"));
  const AcSolver ac(net);
  const LinearPfModel m = build_dlpf(net, ac.admittance());
  const FlowMap fm = branch_flow_matrix(net, ac.admittance());
  std::mt19937_64 rng(11);
  const InjectionSet base = base_injections(net);
  double err = 0.0;
  int count = 0;
  for (int k = 0; k < 100; ++k) {
    const InjectionSet inj = jitter(base, rng, 0.03);
    const Eigen::VectorXd lin = fm.F * m.solve(stack_injections(inj)) + fm.f0;
    const auto flows = branch_flows_ac(net, ac.solve(inj).state);
    for (std::size_t b = 0; b < flows.size(); ++b) {
      err += std::abs(lin[static_cast<Eigen::Index>(b)] - flows[b].P_from);
      ++count;
    }
  }
  CHECK(err / count < 5e-2);
}

TEST_CASE("118-bus AC minus DLPF varies far less than the state itself") {
  const Experiment ex = prepare_experiment(testutil::case_path("case118"), testutil::sidecar_path("case118"), std::nullopt);
  const PlfContext& ctx = ex.ctx;
  const Gmm g = fit_wind_gmm(ex.history, 3, 1);
  const Eigen::MatrixXd W = draw_segment_samples(ctx, g, 1, 100, 5);
  REQUIRE(W.rows() == 100);
  const Oracle orc = ac_oracle(ctx);
  Eigen::MatrixXd ac(ctx.n_states(), 100), dev(ctx.n_states(), 100);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd w = W.row(i).transpose();
    const Eigen::VectorXd y = orc(ctx.regulated_injections(w)).y;
    ac.col(i) = y;
    dev.col(i) = y - dlpf_prediction(ctx, 1, w).y;
  }
  auto sd = [](const Eigen::MatrixXd& X, Eigen::Index r) {
    const double mu = X.row(r).mean();
    return std::sqrt((X.row(r).array() - mu).square().mean());
  };
  // Voltage magnitudes move by 1e-5..1e-4 p.u. here and their deviation is
  // dominated by second-order loss terms, so the 10x bound is only asserted
  // for angles; the median over all varying states must still clear it.
  std::vector<double> ratios;
  int angles = 0, angles_ok = 0;
  for (Eigen::Index r = 0; r < ac.rows(); ++r) {
    if (sd(ac, r) < 1e-6) continue;
    const double q = sd(ac, r) / sd(dev, r);
    ratios.push_back(q);
    if (r < ctx.net.N()) {
      ++angles;
      angles_ok += q >= 10.0;
    }
  }
  REQUIRE(ratios.size() > 100);
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  CHECK(ratios[ratios.size() / 2] >= 10.0);
  CHECK(angles_ok >= 0.9 * angles);
}

}
