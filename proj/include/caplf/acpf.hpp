#pragma once

#include "caplf/netcase.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace caplf {

/// Net injections at the free buses: P in S order (length N), Q in L order
/// (length M), both p.u.
struct InjectionSet {
  Eigen::VectorXd P;
  Eigen::VectorXd Q;
};

/// Solved or linearised operating point.
struct StateVector {
  Eigen::VectorXd theta_S;  // rad, S order
  Eigen::VectorXd V_L;      // p.u., L order
  double slack_theta = 0.0;
  Eigen::VectorXd V_T;  // p.u., T order

  /// Y = [theta_S; V_L].
  Eigen::VectorXd y() const;
  /// Complex voltage of every bus.
  Eigen::VectorXcd voltages(const NetworkCase& net) const;
};

/// Scheduled injections of the case: Pg - Pd on S, Qg - Qd on L.
InjectionSet base_injections(const NetworkCase& net);

/// Flat start (angles 0 and slack angle, PQ magnitudes 1) with T magnitudes at setpoint.
StateVector flat_start(const NetworkCase& net);

StateVector state_from_y(const NetworkCase& net, const Eigen::VectorXd& y);

struct AcOptions {
  int max_iterations = 30;
  double tolerance = 1e-8;
  /// Dense LU for systems with at most this many buses, sparse LU above.
  int dense_bus_limit = 200;
  std::optional<StateVector> warm_start;
};

struct AcSolution {
  StateVector state;
  int iterations = 0;
  double mismatch = 0.0;
  std::vector<double> mismatch_history;  // infinity norm before each update and at exit
};

/// Newton-Raphson in polar coordinates. Reactive limits are not enforced.
class AcSolver {
 public:
  explicit AcSolver(const NetworkCase& net);
  AcSolver(const NetworkCase& net, Admittance adm);

  AcSolution solve(const InjectionSet& inj, const AcOptions& opts = {}) const;

  /// Infinity norm of the nodal mismatch of `state` against `inj`.
  double mismatch(const StateVector& state, const InjectionSet& inj) const;

  /// Complex power injected at every bus by the network for voltages `v`.
  Eigen::VectorXcd bus_power(const Eigen::VectorXcd& v) const;

  const NetworkCase& network() const { return *net_; }
  const Admittance& admittance() const { return adm_; }

 private:
  const NetworkCase* net_;
  Admittance adm_;
};

AcSolution solve_ac(const NetworkCase& net, const InjectionSet& inj, const AcOptions& opts = {});

struct BranchFlow {
  double P_from = 0.0;
  double Q_from = 0.0;
  double P_to = 0.0;
  double Q_to = 0.0;
};

std::vector<BranchFlow> branch_flows_ac(const NetworkCase& net, const StateVector& state);

}  // namespace caplf
