#pragma once

#include "caplf/acpf.hpp"
#include "caplf/netcase.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace caplf {

/// Decoupled linearised power flow:
///   Lambda * [theta_S; V_L] = [P_S; Q_L] + C * [theta_R; V_T]
/// with
///   Lambda = [[-B'_SS,  G_SL], [-G_LS, -B_LL]]
///   C      = [[ B'_SR, -G_ST], [ G_LR,  B_LT]]
/// B' is the susceptance without shunts or line charging.
struct LinearPfModel {
  int N = 0;
  int M = 0;
  Eigen::SparseMatrix<double> Lambda;
  Eigen::SparseMatrix<double> C;  // (N+M) x (1 + |T|)
  Eigen::VectorXd boundary;       // [theta_R; V_T]
  Eigen::MatrixXd Lambda_inv;     // dense, cached once per case
  Eigen::VectorXd offset;         // Lambda_inv * C * boundary

  int dim() const { return N + M; }

  /// Y for a stacked injection vector [P_S; Q_L].
  Eigen::VectorXd solve(const Eigen::VectorXd& injections) const;
};

LinearPfModel build_dlpf(const NetworkCase& net, const Admittance& adm);

StateVector solve_dlpf(const NetworkCase& net, const LinearPfModel& model, const InjectionSet& inj);

/// Affine active-power flow map P_from ~ F * Y + f0. Each branch flow is
/// linearised at V = 1, theta = 0; boundary bus terms are folded into f0.
struct FlowMap {
  Eigen::SparseMatrix<double> F;  // n_branch x (N+M)
  Eigen::VectorXd f0;
};

FlowMap branch_flow_matrix(const NetworkCase& net, const Admittance& adm);

Eigen::VectorXd stack_injections(const InjectionSet& inj);

}  // namespace caplf
