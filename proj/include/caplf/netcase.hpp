#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace caplf {

enum class BusType { PQ = 1, PV = 2, Slack = 3 };

/// Bus data in per-unit on the case base. `id` is the number used in the file.
struct Bus {
  int id = 0;
  BusType type = BusType::PQ;
  double Pd = 0.0;
  double Qd = 0.0;
  double Gs = 0.0;
  double Bs = 0.0;
  double Vm_init = 1.0;
  double Va_init = 0.0;  // rad
  double base_kv = 0.0;

  bool operator==(const Bus&) const = default;
};

/// Branch endpoints are dense internal bus indices.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap_ratio = 1.0;
  double phase_shift = 0.0;  // rad
  bool status = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;  // internal index
  double Pg = 0.0;
  double Qg = 0.0;
  double Vset = 1.0;
  bool is_agc = false;
  double capacity = 0.0;  // p.u., from Pmax (mBase when Pmax is not positive)

  bool operator==(const Generator&) const = default;
};

/// A wind farm attached to `bus` whose history lives in column `column`.
struct WindFarm {
  int bus = 0;  // internal index
  int column = 0;
  std::string name;

  bool operator==(const WindFarm&) const = default;
};

/// Validated per-unit network. Index sets follow the linear power-flow
/// partition: S = PV u PQ (the N free angles), L = PQ (the M free
/// magnitudes), R = {slack}, T = PV u {slack} (fixed magnitudes). All index
/// vectors hold internal bus indices in ascending order.
struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<WindFarm> wind_farms;

  int slack = -1;
  std::vector<int> S, L, T;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int N() const { return static_cast<int>(S.size()); }
  int M() const { return static_cast<int>(L.size()); }

  /// Position of a bus inside S / L / T, or -1.
  int pos_S(int bus) const { return pos_s_[bus]; }
  int pos_L(int bus) const { return pos_l_[bus]; }
  int pos_T(int bus) const { return pos_t_[bus]; }

  int bus_index(int id) const;  // throws when unknown

  /// Net scheduled generation at each bus (sum over in-service generators).
  Eigen::VectorXd scheduled_pg() const;
  Eigen::VectorXd scheduled_qg() const;

  /// Voltage magnitude setpoint of every bus in T, in T order.
  Eigen::VectorXd fixed_magnitudes() const;

  /// Recomputes S, L, T, slack and the position maps; validates invariants.
  void finalize();

  bool operator==(const NetworkCase& o) const {
    return name == o.name && base_mva == o.base_mva && buses == o.buses && branches == o.branches &&
           generators == o.generators && wind_farms == o.wind_farms;
  }

 private:
  std::vector<int> pos_s_, pos_l_, pos_t_;
};

/// Bus admittance split into real and imaginary parts.
struct Admittance {
  Eigen::SparseMatrix<double> G;
  Eigen::SparseMatrix<double> B;
  /// Series susceptances only (no shunts, no line charging), built so each
  /// row sums to zero: taps scale the series term, phase shifts are ignored.
  Eigen::SparseMatrix<double> B_noshunt;
  Eigen::SparseMatrix<std::complex<double>> Y;
};

/// Branch admittance terms of the standard pi model with off-nominal tap.
struct BranchAdmittance {
  std::complex<double> ff, ft, tf, tt;
};
BranchAdmittance branch_admittance(const Branch& br);

NetworkCase parse_case(std::string_view text, std::string name = {});
NetworkCase load_case(const std::filesystem::path& path);

/// Writes a MATPOWER-style case that parses back to the same NetworkCase.
std::string write_case(const NetworkCase& net);

Admittance build_admittance(const NetworkCase& net);

}  // namespace caplf
