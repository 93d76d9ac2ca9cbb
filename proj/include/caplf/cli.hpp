#pragma once

#include "caplf/plf.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace caplf {

struct RunConfig {
  std::filesystem::path case_path;
  std::filesystem::path sidecar_path;
  std::optional<std::filesystem::path> wind_path;  // else the sidecar preset
  PlfOptions options;
  std::uint64_t seed_benchmark = 4;
  int benchmark_n = 20000;
  std::optional<std::filesystem::path> result_path;  // prior result for metrics
  std::filesystem::path out_dir = ".";
};

/// Hash of the inputs and options that determine the outputs. Thread count
/// and output location are excluded.
std::string config_hash(const RunConfig& cfg);

/// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_benchmark(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct WindgenConfig {
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> spec_path;
  double capacity = 1.0;  // p.u. per farm, presets only
  int samples = 20000;
  std::uint64_t seed = 1;
  std::filesystem::path out = "wind.csv";
};
int cmd_windgen(const WindgenConfig& cfg, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace caplf
