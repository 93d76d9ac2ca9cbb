#pragma once

#include "caplf/dlpf.hpp"
#include "caplf/netcase.hpp"

#include <Eigen/Dense>

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace caplf {

enum class ExceedPolicy { Error, Clamp };

/// System-level regulation settings as they appear in a config file. Kd and
/// Kg are on the load / generator base; they are converted to system p.u.
/// per Hz by make_control_params.
struct ControlSettings {
  double f_D = 0.01;
  double f_A = 0.1;
  double f_N = 50.0;
  double Kg = 25.0;
  double Kd = 2.6;
  std::optional<double> P_delta_max;  // p.u.; default 2 * Delta_3
  ExceedPolicy exceed_policy = ExceedPolicy::Error;
  double power_factor = 0.85;
  /// AGC ramp rate per bus id (any consistent unit). Buses missing here use
  /// the AGC capacity at the bus.
  std::map<int, double> agc_ramp;
};

/// Per-bus regulation coefficients over S and the resulting thresholds.
struct ControlParams {
  Eigen::VectorXd Kd;  // p.u./Hz
  Eigen::VectorXd Kg;  // p.u./Hz
  Eigen::VectorXd Hg;
  double f_D = 0.01;
  double f_A = 0.1;
  double f_N = 50.0;
  double P_delta_max = 0.0;
  ExceedPolicy exceed_policy = ExceedPolicy::Error;

  double K_D() const { return Kd.sum(); }
  double K_U() const { return Kg.sum() + Kd.sum(); }
  double H_G() const { return Hg.sum(); }
  /// {0, K_D f_D, K_U f_A, P_delta_max}.
  std::array<double, 4> thresholds() const;

  /// Participation coefficients alpha_{n,i} for segment i in {0,1,2}.
  Eigen::VectorXd participation(int segment) const;

  void validate() const;
};

ControlParams make_control_params(const NetworkCase& net, const ControlSettings& settings);

/// Frequency deviation (Hz) for an imbalance P_delta (p.u.).
double frequency_deviation(const ControlParams& params, double P_delta);

enum class Regime { Balanced, DeadBand, Primary, Secondary, Exceeded };

const char* regime_name(Regime r);

/// Segment index 0..2 used by the piecewise model; Balanced maps to 0 and
/// Exceeded to -1.
int segment_of(Regime r);

Regime classify_imbalance(const ControlParams& params, double P_delta);

/// alpha_{n,i} * P_delta for the regime of P_delta; zero when balanced.
Eigen::VectorXd regulation_amounts(const ControlParams& params, double P_delta);

/// The (N x N) matrix alpha_i = I + a 1^T of the control-aware model.
Eigen::MatrixXd alpha_matrix(const ControlParams& params, int segment);

/// Maps farm active outputs (one column per farm) into X = [P_W; Q_W] over
/// S and L. Farms at PQ buses inject Q = P tan(acos(pf)).
Eigen::MatrixXd wind_injection_map(const NetworkCase& net, double power_factor);

/// Half-open interval on the aggregate wind axis z = eps^T X.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double z) const;
};

struct Segment {
  Regime regime = Regime::DeadBand;
  Eigen::VectorXd a;      // participation coefficients, length N
  Eigen::VectorXd u;      // Lambda_inv * [a; 0]
  Eigen::VectorXd rho;    // row scaling (ones when uncorrected)
  Eigen::VectorXd b_raw;  // uncorrected offset
  Eigen::VectorXd b;      // rho .* b_raw + varsigma
  double lo = 0.0;        // |P_delta| in (lo, hi]
  double hi = 0.0;
};

/// Control-aware piecewise linear model Y = A_i X + b_i for eps^T X in Omega_i.
/// A_i = diag(rho_i) Lambda^{-1} E_i is kept implicit: E_i = I + [a_i; 0] eps^T.
struct PiecewiseLinearModel {
  std::shared_ptr<const LinearPfModel> lin;
  std::array<Segment, 3> segments;
  Eigen::VectorXd epsilon;
  double c_offset = 0.0;
  std::array<double, 4> delta{};
  ExceedPolicy exceed_policy = ExceedPolicy::Error;

  int dim() const { return static_cast<int>(epsilon.size()); }
  int N() const { return lin->N; }

  Eigen::MatrixXd A(int i) const;
  /// A_i without the row correction.
  Eigen::MatrixXd A_raw(int i) const;
  /// A_i * X for a block of columns X.
  Eigen::MatrixXd apply_A(int i, const Eigen::MatrixXd& X) const;
  Eigen::MatrixXd apply_A_raw(int i, const Eigen::MatrixXd& X) const;
  /// Y = A_i x + b_i for the segment that x falls in (Exceeded handled by policy).
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;

  /// Omega_i on the z axis: one or two intervals.
  std::vector<Interval> omega(int i) const;
};

PiecewiseLinearModel assemble_piecewise(const NetworkCase& net, const ControlParams& params,
                                        std::shared_ptr<const LinearPfModel> lin);

/// Regime of injection vector x (length N+M) under the model.
Regime classify_segment(const PiecewiseLinearModel& model, const Eigen::VectorXd& x);
Regime classify_z(const PiecewiseLinearModel& model, double z);

/// Segment index that samples of regime r are mapped with, honouring the
/// exceed policy (Clamp sends Exceeded to the secondary segment).
int mapped_segment(const PiecewiseLinearModel& model, Regime r);

}  // namespace caplf
