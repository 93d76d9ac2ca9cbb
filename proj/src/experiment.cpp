#include "caplf/experiment.hpp"

#include "caplf/error.hpp"
#include "caplf/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>

namespace caplf {

using nlohmann::json;

Sidecar parse_sidecar(const std::string& text) {
  Sidecar sc;
  try {
    const json j = json::parse(text);
    sc.case_id = j.value("case_id", std::string{});
    sc.control.power_factor = j.value("power_factor", sc.control.power_factor);
    if (j.contains("agc_generators")) sc.agc_buses = j.at("agc_generators").get<std::vector<int>>();
    if (j.contains("agc_ramp_mw_per_min")) {
      for (const auto& [k, v] : j.at("agc_ramp_mw_per_min").items()) {
        int id = 0;
        try {
          id = std::stoi(k);
        } catch (const std::exception&) {
          throw ValidationError("agc_ramp_mw_per_min key '" + k + "' is not a bus number");
        }
        sc.control.agc_ramp[id] = v.get<double>();
      }
    }
    for (const auto& f : j.at("wind_farms")) {
      FarmPlacement p;
      p.bus_id = f.at("bus").get<int>();
      p.column = f.at("column").get<std::string>();
      p.name = f.value("name", p.column);
      sc.wind_farms.push_back(p);
    }
    if (j.contains("control")) {
      const json& c = j.at("control");
      auto& s = sc.control;
      s.f_D = c.value("f_D", s.f_D);
      s.f_A = c.value("f_A", s.f_A);
      s.f_N = c.value("f_N", s.f_N);
      s.Kg = c.value("Kg", s.Kg);
      s.Kd = c.value("Kd", s.Kd);
      if (c.contains("P_delta_max_mw")) s.P_delta_max = c.at("P_delta_max_mw").get<double>();
      const std::string pol = c.value("exceed_policy", std::string("error"));
      if (pol == "error") {
        s.exceed_policy = ExceedPolicy::Error;
      } else if (pol == "clamp") {
        s.exceed_policy = ExceedPolicy::Clamp;
      } else {
        throw ValidationError("exceed_policy must be 'error' or 'clamp', got '" + pol + "'");
      }
    }
    if (j.contains("dispatch")) {
      sc.balance = j.at("dispatch").value("balance", sc.balance);
      sc.imbalance_shift_mw = j.at("dispatch").value("imbalance_shift_mw", 0.0);
    }
    if (j.contains("wind")) {
      const json& w = j.at("wind");
      if (w.contains("preset")) sc.wind_preset = w.at("preset").get<std::string>();
      sc.wind_capacity_mw = w.value("capacity_mw", sc.wind_capacity_mw);
      sc.wind_samples = w.value("samples", sc.wind_samples);
      sc.wind_seed = w.value("seed", sc.wind_seed);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("sidecar: ") + e.what());
  }
  if (sc.wind_farms.empty()) throw ValidationError("sidecar lists no wind farms");
  std::set<std::string> cols;
  for (const auto& f : sc.wind_farms) {
    if (!cols.insert(f.column).second) throw ValidationError("wind column '" + f.column + "' is used twice");
  }
  return sc;
}

Sidecar load_sidecar(const std::filesystem::path& path) { return parse_sidecar(read_file(path)); }

void apply_sidecar(NetworkCase& net, const Sidecar& sc) {
  for (auto& g : net.generators) g.is_agc = false;
  for (int id : sc.agc_buses) {
    const int b = net.bus_index(id);
    bool any = false;
    for (auto& g : net.generators) {
      if (g.bus == b) {
        g.is_agc = true;
        any = true;
      }
    }
    if (!any) throw ValidationError("AGC bus " + std::to_string(id) + " has no online generator");
  }
  net.wind_farms.clear();
  for (std::size_t i = 0; i < sc.wind_farms.size(); ++i) {
    const auto& p = sc.wind_farms[i];
    net.wind_farms.push_back({net.bus_index(p.bus_id), static_cast<int>(i), p.name});
  }
  net.finalize();
}

Eigen::MatrixXd select_farm_columns(const Sidecar& sc, const WindHistory& h) {
  Eigen::MatrixXd out(h.values.rows(), static_cast<Eigen::Index>(sc.wind_farms.size()));
  for (std::size_t i = 0; i < sc.wind_farms.size(); ++i) {
    const auto it = std::find(h.names.begin(), h.names.end(), sc.wind_farms[i].column);
    if (it == h.names.end()) throw ValidationError("wind history has no column '" + sc.wind_farms[i].column + "'");
    out.col(static_cast<Eigen::Index>(i)) = h.values.col(it - h.names.begin());
  }
  return out;
}

WindHistory preset_history(const Sidecar& sc, double base_mva) {
  if (!sc.wind_preset) throw ValidationError("no wind history given and the sidecar names no wind preset");
  WindSpec spec = wind_preset(*sc.wind_preset, sc.wind_capacity_mw / base_mva, sc.wind_samples, sc.wind_seed);
  if (spec.farms() != static_cast<int>(sc.wind_farms.size())) {
    throw ValidationError("wind preset '" + *sc.wind_preset + "' has " + std::to_string(spec.farms()) +
                          " farms but the sidecar places " + std::to_string(sc.wind_farms.size()));
  }
  for (std::size_t i = 0; i < sc.wind_farms.size(); ++i) spec.names[i] = sc.wind_farms[i].column;
  return generate(spec);
}

void rebalance_dispatch(NetworkCase& net, double mean_wind, double target) {
  double c = 0.0;
  for (int b : net.S) c -= net.buses[b].Pd;
  double cap = 0.0;
  for (const auto& g : net.generators) {
    if (net.pos_S(g.bus) < 0) continue;
    c += g.Pg;
    cap += g.capacity;
  }
  if (!(cap > 0)) throw ValidationError("cannot rebalance dispatch: no non-slack generation capacity");
  const double delta = target - mean_wind - c;
  for (auto& g : net.generators) {
    if (net.pos_S(g.bus) >= 0) g.Pg += delta * g.capacity / cap;
  }
}

Experiment prepare_experiment(const std::filesystem::path& case_path, const std::filesystem::path& sidecar_path,
                              const std::optional<std::filesystem::path>& wind_csv) {
  NetworkCase net = load_case(case_path);
  Experiment ex;
  ex.sidecar = load_sidecar(sidecar_path);
  apply_sidecar(net, ex.sidecar);
  const WindHistory h = wind_csv ? read_wind_csv(*wind_csv) : preset_history(ex.sidecar, net.base_mva);
  ex.history = select_farm_columns(ex.sidecar, h);
  for (const auto& f : ex.sidecar.wind_farms) ex.farm_names.push_back(f.name);
  ControlSettings settings = ex.sidecar.control;
  if (settings.P_delta_max) settings.P_delta_max = *settings.P_delta_max / net.base_mva;
  for (auto& [id, ramp] : settings.agc_ramp) ramp /= net.base_mva;
  if (ex.sidecar.balance) {
    rebalance_dispatch(net, ex.history.colwise().mean().sum(), ex.sidecar.imbalance_shift_mw / net.base_mva);
  }
  ex.ctx = make_context(std::move(net), settings);
  return ex;
}

}  // namespace caplf
