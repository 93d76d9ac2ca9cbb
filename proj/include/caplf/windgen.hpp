#pragma once

#include "caplf/gmm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace caplf {

/// Ground truth for synthetic wind histories. Component means and standard
/// deviations are fractions of farm capacity; every component shares the
/// correlation matrix, so component j has covariance D_j R D_j.
struct WindSpec {
  std::vector<std::string> names;
  Eigen::VectorXd capacity;  // p.u. per farm
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::VectorXd> stds;
  Eigen::MatrixXd correlation;
  int n_samples = 20000;
  std::uint64_t seed = 1;

  int farms() const { return static_cast<int>(names.size()); }
  void validate() const;
  /// Mixture over farm outputs in p.u. (before clipping).
  Gmm truth() const;
};

/// Names of the built-in presets.
std::vector<std::string> wind_presets();

/// Built-in spec. `capacity` is the p.u. rating of every farm.
WindSpec wind_preset(const std::string& name, double capacity = 1.0, int n_samples = 20000, std::uint64_t seed = 1);

/// Farm output history: one row per snapshot, one column per farm (p.u.).
struct WindHistory {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
  double clipped_fraction = 0.0;
};

/// Draws from the spec and clips to [0, capacity]. Warns on stderr when more
/// than 5% of the values are clipped.
WindHistory generate(const WindSpec& spec);

/// Reads a history CSV: optional '#' comment lines, a header of farm names,
/// then numeric rows.
WindHistory read_wind_csv(const std::filesystem::path& path);
WindHistory parse_wind_csv(const std::string& text);
std::string format_wind_csv(const WindHistory& h, const std::string& comment = {});

std::string wind_spec_to_json(const WindSpec& spec);
WindSpec wind_spec_from_json(const std::string& text);

}  // namespace caplf
