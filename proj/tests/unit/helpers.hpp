#pragma once

#include "caplf/experiment.hpp"
#include "caplf/netcase.hpp"
#include "caplf/plf.hpp"
#include "caplf/windgen.hpp"

#include <random>

#include <string>

namespace testutil {

inline std::string data(const std::string& rel) { return std::string(CAPLF_DATA_DIR) + "/" + rel; }

inline std::string case_path(const std::string& name) { return data("cases/" + name + ".m"); }
inline std::string sidecar_path(const std::string& name) { return data("sidecars/" + name + ".json"); }

/// Slack bus 1 and PQ bus 2 joined by one line; load and line values can be overridden.
inline std::string two_bus(double pd_mw = 0.0, double qd_mvar = 0.0, double r = 0.0, double x = 0.1, double b = 0.0) {
  return "function mpc = two_bus\nmpc.baseMVA = 100;\nmpc.bus = [\n"
         "1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n"
         "2 1 " + std::to_string(pd_mw) + " " + std::to_string(qd_mvar) + " 0 0 1 1 0 100 1 1.1 0.9;\n];\n"
         "mpc.gen = [\n1 0 0 300 -300 1 100 1 500 0;\n];\n"
         "mpc.branch = [\n1 2 " + std::to_string(r) + " " + std::to_string(x) + " " + std::to_string(b) +
         " 0 0 0 0 0 1 -360 360;\n];\n";
}

/// Three buses: slack 1, PV 2 (generator 100 MW, AGC) and PQ 3.
inline std::string three_bus() {
  return "mpc.baseMVA = 100;\nmpc.bus = [\n"
         "1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n"
         "2 2 50 10 0 0 1 1 0 100 1 1.1 0.9;\n"
         "3 1 50 20 0 0 1 1 0 100 1 1.1 0.9;\n];\n"
         "mpc.gen = [\n1 0 0 300 -300 1 100 1 500 0;\n2 100 0 300 -300 1.02 100 1 200 0;\n];\n"
         "mpc.branch = [\n1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;\n"
         "2 3 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;\n1 3 0.02 0.2 0.01 0 0 0 0 0 1 -360 360;\n];\n";
}

inline caplf::Experiment experiment14() {
  return caplf::prepare_experiment(case_path("case14"), sidecar_path("case14"), std::nullopt);
}

/// Nine-farm piecewise map with the structure of the control-aware model:
/// maps[s] = B + u_s 1^T and offsets[s] = b0 + u_s c, so every segment
/// carries its own participation direction u_s.
inline caplf::SegmentedMap synthetic_map(int n_states = 16, int n_flows = 6, std::uint64_t seed = 5) {
  constexpr int k = 9;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  auto rnd = [&](int r, int c, double s) { return Eigen::MatrixXd(Eigen::MatrixXd::NullaryExpr(r, c, [&] { return s * n01(rng); })); };
  caplf::SegmentedMap m;
  m.direction = Eigen::VectorXd::Ones(k);
  m.c_offset = -3.3;
  m.delta = {0.0, 0.25, 1.6, 12.0};
  m.exceed_policy = caplf::ExceedPolicy::Error;
  m.n_states = n_states;
  m.n_flows = n_flows;
  const int n = n_states + n_flows;
  const Eigen::MatrixXd B = rnd(n, k, 0.05);
  const Eigen::VectorXd b0 = rnd(n, 1, 1.0);
  for (std::size_t s = 0; s < 3; ++s) {
    const Eigen::VectorXd u = rnd(n, 1, 0.02);
    m.maps[s] = B + u * Eigen::RowVectorXd::Ones(k);
    m.offsets[s] = b0 + u * m.c_offset;
  }
  for (int i = 0; i < n; ++i) m.labels.push_back((i < n_states ? "V:" : "P:") + std::to_string(i));
  return m;
}

/// Farm-space input for synthetic_map: the nine-farm preset mixture.
inline caplf::Gmm synthetic_wind() { return caplf::wind_preset("nine-farm-maryland-like", 1.0).truth(); }

}  // namespace testutil
