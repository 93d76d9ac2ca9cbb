#pragma once

#include "caplf/control.hpp"
#include "caplf/netcase.hpp"
#include "caplf/plf.hpp"
#include "caplf/windgen.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace caplf {

struct FarmPlacement {
  int bus_id = 0;
  std::string column;  // history column name
  std::string name;
};

/// Experiment description that MATPOWER files do not carry: AGC units, wind
/// placement, regulation settings, dispatch adjustment and a default wind
/// source. Power quantities are in MW in the file and p.u. here.
struct Sidecar {
  std::string case_id;
  std::vector<int> agc_buses;  // every generator at these bus ids is AGC
  std::vector<FarmPlacement> wind_farms;
  ControlSettings control;
  bool balance = true;
  double imbalance_shift_mw = 0.0;
  std::optional<std::string> wind_preset;
  double wind_capacity_mw = 100.0;
  int wind_samples = 20000;
  std::uint64_t wind_seed = 1;
};

Sidecar parse_sidecar(const std::string& text);
Sidecar load_sidecar(const std::filesystem::path& path);

/// Marks AGC generators and attaches the wind farms (column = farm order).
void apply_sidecar(NetworkCase& net, const Sidecar& sc);

/// Farm columns of `h` in placement order. Throws when a column is missing.
Eigen::MatrixXd select_farm_columns(const Sidecar& sc, const WindHistory& h);

/// History drawn from the sidecar preset, one column per placement.
WindHistory preset_history(const Sidecar& sc, double base_mva);

/// Shifts non-slack scheduled generation, in proportion to capacity, so the
/// non-slack imbalance at mean wind equals `target` (p.u.).
void rebalance_dispatch(NetworkCase& net, double mean_wind, double target);

struct Experiment {
  PlfContext ctx;
  Sidecar sidecar;
  Eigen::MatrixXd history;  // farm order
  std::vector<std::string> farm_names;
};

/// Loads the case, applies the sidecar, reads the wind history (or draws it
/// from the sidecar preset when `wind_csv` is empty) and rebalances dispatch.
Experiment prepare_experiment(const std::filesystem::path& case_path, const std::filesystem::path& sidecar_path,
                              const std::optional<std::filesystem::path>& wind_csv);

}  // namespace caplf
