#include "caplf/control.hpp"

#include "caplf/acpf.hpp"
#include "caplf/error.hpp"

#include <cmath>
#include <sstream>

namespace caplf {

std::array<double, 4> ControlParams::thresholds() const {
  return {0.0, K_D() * f_D, K_U() * f_A, P_delta_max};
}

Eigen::VectorXd ControlParams::participation(int segment) const {
  switch (segment) {
    case 0:
      return -Kd / K_D();
    case 1:
      return -(Kg + Kd) / K_U();
    case 2:
      return -Hg / H_G();
    default:
      throw ValidationError("segment index out of range");
  }
}

void ControlParams::validate() const {
  if (Kd.size() != Kg.size() || Kd.size() != Hg.size()) throw ValidationError("control vectors differ in length");
  if ((Kd.array() < 0).any() || (Kg.array() < 0).any() || (Hg.array() < 0).any()) {
    throw ValidationError("Kd, Kg and Hg must be non-negative");
  }
  if (!(K_D() > 0)) throw ValidationError("K_D must be positive (no load frequency response on non-slack buses)");
  if (!(K_U() > 0)) throw ValidationError("K_U must be positive");
  if (!(H_G() > 0)) throw ValidationError("H_G must be positive (no AGC unit on a non-slack bus)");
  if (!(f_D > 0) || !(f_A > 0) || !(f_N > 0)) throw ValidationError("f_D, f_A and f_N must be positive");
  const auto d = thresholds();
  if (!(d[0] < d[1] && d[1] < d[2] && d[2] < d[3])) {
    std::ostringstream os;
    os << "regulation thresholds must increase strictly: " << d[0] << ", " << d[1] << ", " << d[2] << ", " << d[3];
    throw ValidationError(os.str());
  }
}

ControlParams make_control_params(const NetworkCase& net, const ControlSettings& s) {
  const int N = net.N();
  ControlParams p;
  p.f_D = s.f_D;
  p.f_A = s.f_A;
  p.f_N = s.f_N;
  p.exceed_policy = s.exceed_policy;
  p.Kd = Eigen::VectorXd::Zero(N);
  p.Kg = Eigen::VectorXd::Zero(N);
  p.Hg = Eigen::VectorXd::Zero(N);
  for (int k = 0; k < N; ++k) {
    p.Kd[k] = s.Kd * std::max(net.buses[net.S[k]].Pd, 0.0) / s.f_N;
  }
  Eigen::VectorXd agc_cap = Eigen::VectorXd::Zero(N);
  for (const auto& g : net.generators) {
    const int k = net.pos_S(g.bus);
    if (k < 0) continue;
    p.Kg[k] += s.Kg * g.capacity / s.f_N;
    if (g.is_agc) agc_cap[k] += g.capacity;
  }
  for (int k = 0; k < N; ++k) {
    if (agc_cap[k] <= 0) continue;
    const auto it = s.agc_ramp.find(net.buses[net.S[k]].id);
    p.Hg[k] = it != s.agc_ramp.end() ? it->second : agc_cap[k];
  }
  for (const auto& [id, ramp] : s.agc_ramp) {
    const int k = net.pos_S(net.bus_index(id));
    if (k < 0 || agc_cap[k] <= 0) {
      throw ValidationError("AGC ramp given for bus " + std::to_string(id) + " which has no non-slack AGC unit");
    }
    if (!(ramp > 0)) throw ValidationError("AGC ramp at bus " + std::to_string(id) + " must be positive");
  }
  p.P_delta_max = s.P_delta_max ? *s.P_delta_max : 2.0 * p.K_U() * p.f_A;
  p.validate();
  return p;
}

double frequency_deviation(const ControlParams& params, double P_delta) {
  const double mag = std::abs(P_delta);
  if (mag > params.P_delta_max) {
    std::ostringstream os;
    os << "imbalance " << P_delta << " p.u. exceeds the regulation capacity " << params.P_delta_max << " p.u.";
    throw CapacityError(os.str());
  }
  if (mag <= params.K_D() * params.f_D) return P_delta / params.K_D();
  return P_delta / params.K_U();
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::Balanced:
      return "balanced";
    case Regime::DeadBand:
      return "dead-band";
    case Regime::Primary:
      return "primary";
    case Regime::Secondary:
      return "secondary";
    case Regime::Exceeded:
      return "exceeded";
  }
  return "?";
}

int segment_of(Regime r) {
  switch (r) {
    case Regime::Balanced:
    case Regime::DeadBand:
      return 0;
    case Regime::Primary:
      return 1;
    case Regime::Secondary:
      return 2;
    case Regime::Exceeded:
      return -1;
  }
  return -1;
}

namespace {

Regime classify_abs(const std::array<double, 4>& d, double P_delta) {
  const double mag = std::abs(P_delta);
  if (mag == 0.0) return Regime::Balanced;
  if (mag <= d[1]) return Regime::DeadBand;
  if (mag <= d[2]) return Regime::Primary;
  if (mag <= d[3]) return Regime::Secondary;
  return Regime::Exceeded;
}

}  // namespace

Regime classify_imbalance(const ControlParams& params, double P_delta) {
  return classify_abs(params.thresholds(), P_delta);
}

Eigen::VectorXd regulation_amounts(const ControlParams& params, double P_delta) {
  const Regime r = classify_imbalance(params, P_delta);
  if (r == Regime::Exceeded) {
    std::ostringstream os;
    os << "imbalance " << P_delta << " p.u. exceeds the regulation capacity " << params.P_delta_max << " p.u.";
    throw CapacityError(os.str());
  }
  if (r == Regime::Balanced) return Eigen::VectorXd::Zero(params.Kd.size());
  return params.participation(segment_of(r)) * P_delta;
}

Eigen::MatrixXd alpha_matrix(const ControlParams& params, int segment) {
  const Eigen::VectorXd a = params.participation(segment);
  const auto n = a.size();
  return Eigen::MatrixXd::Identity(n, n) + a * Eigen::RowVectorXd::Ones(n);
}

Eigen::MatrixXd wind_injection_map(const NetworkCase& net, double power_factor) {
  if (!(power_factor > 0 && power_factor <= 1)) throw ValidationError("power factor must be in (0, 1]");
  const double q_ratio = std::tan(std::acos(power_factor));
  const int N = net.N();
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(N + net.M(), static_cast<Eigen::Index>(net.wind_farms.size()));
  for (std::size_t f = 0; f < net.wind_farms.size(); ++f) {
    const int bus = net.wind_farms[f].bus;
    const int s = net.pos_S(bus);
    if (s < 0) throw ValidationError("wind farm '" + net.wind_farms[f].name + "' is attached to the slack bus");
    T(s, static_cast<Eigen::Index>(f)) = 1.0;
    if (const int l = net.pos_L(bus); l >= 0) T(N + l, static_cast<Eigen::Index>(f)) = q_ratio;
  }
  return T;
}

bool Interval::contains(double z) const {
  const bool above = lo_closed ? z >= lo : z > lo;
  const bool below = hi_closed ? z <= hi : z < hi;
  return above && below;
}

Eigen::MatrixXd PiecewiseLinearModel::apply_A_raw(int i, const Eigen::MatrixXd& X) const {
  const Segment& s = segments.at(static_cast<std::size_t>(i));
  const Eigen::RowVectorXd z = X.topRows(N()).colwise().sum();
  Eigen::MatrixXd out = lin->Lambda_inv * X;
  out.noalias() += s.u * z;
  return out;
}

Eigen::MatrixXd PiecewiseLinearModel::apply_A(int i, const Eigen::MatrixXd& X) const {
  return segments.at(static_cast<std::size_t>(i)).rho.asDiagonal() * apply_A_raw(i, X);
}

Eigen::MatrixXd PiecewiseLinearModel::A_raw(int i) const {
  const Segment& s = segments.at(static_cast<std::size_t>(i));
  Eigen::MatrixXd A = lin->Lambda_inv;
  A.leftCols(N()).colwise() += s.u;
  return A;
}

Eigen::MatrixXd PiecewiseLinearModel::A(int i) const {
  return segments.at(static_cast<std::size_t>(i)).rho.asDiagonal() * A_raw(i);
}

Eigen::VectorXd PiecewiseLinearModel::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw ValidationError("injection vector has wrong dimension");
  const Regime r = classify_segment(*this, x);
  const int i = mapped_segment(*this, r);
  return apply_A(i, x) + segments[static_cast<std::size_t>(i)].b;
}

std::vector<Interval> PiecewiseLinearModel::omega(int i) const {
  const double lo = delta.at(static_cast<std::size_t>(i));
  const double hi = delta.at(static_cast<std::size_t>(i) + 1);
  const double c = c_offset;
  if (i == 0) return {Interval{-hi - c, hi - c, true, true}};
  return {Interval{-hi - c, -lo - c, true, false}, Interval{lo - c, hi - c, false, true}};
}

Regime classify_z(const PiecewiseLinearModel& model, double z) { return classify_abs(model.delta, z + model.c_offset); }

Regime classify_segment(const PiecewiseLinearModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dim()) throw ValidationError("injection vector has wrong dimension");
  return classify_z(model, model.epsilon.dot(x));
}

int mapped_segment(const PiecewiseLinearModel& model, Regime r) {
  if (r != Regime::Exceeded) return segment_of(r);
  if (model.exceed_policy == ExceedPolicy::Clamp) return 2;
  throw CapacityError("injection imbalance exceeds the regulation capacity");
}

PiecewiseLinearModel assemble_piecewise(const NetworkCase& net, const ControlParams& params,
                                        std::shared_ptr<const LinearPfModel> lin) {
  if (!lin) throw ValidationError("missing linear model");
  params.validate();
  const int N = net.N();
  const int M = net.M();
  if (lin->N != N || lin->M != M || params.Kd.size() != N) {
    throw ValidationError("control parameters, linear model and case disagree in dimension");
  }
  PiecewiseLinearModel pm;
  pm.lin = lin;
  pm.epsilon = Eigen::VectorXd::Zero(N + M);
  pm.epsilon.head(N).setOnes();
  pm.delta = params.thresholds();
  pm.exceed_policy = params.exceed_policy;

  const InjectionSet base = base_injections(net);
  pm.c_offset = base.P.sum();
  const Eigen::VectorXd cb = lin->C * lin->boundary;
  static constexpr Regime kRegimes[3] = {Regime::DeadBand, Regime::Primary, Regime::Secondary};
  for (int i = 0; i < 3; ++i) {
    Segment& s = pm.segments[static_cast<std::size_t>(i)];
    s.regime = kRegimes[i];
    s.a = params.participation(i);
    Eigen::VectorXd a_full = Eigen::VectorXd::Zero(N + M);
    a_full.head(N) = s.a;
    s.u = lin->Lambda_inv * a_full;
    Eigen::VectorXd D(N + M);
    D << base.P + s.a * pm.c_offset, base.Q;
    s.b_raw = lin->Lambda_inv * (D + cb);
    s.b = s.b_raw;
    s.rho = Eigen::VectorXd::Ones(N + M);
    s.lo = pm.delta[static_cast<std::size_t>(i)];
    s.hi = pm.delta[static_cast<std::size_t>(i) + 1];
  }
  return pm;
}

}  // namespace caplf
