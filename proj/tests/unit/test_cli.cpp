#include "doctest.h"
#include "helpers.hpp"

#include "caplf/cli.hpp"
#include "caplf/util.hpp"

#include "json.hpp"

#include <filesystem>
#include <sstream>

using namespace caplf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("caplf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig config14(const fs::path& out) {
  RunConfig cfg;
  cfg.case_path = testutil::case_path("case14");
  cfg.sidecar_path = testutil::sidecar_path("case14");
  cfg.out_dir = out;
  cfg.options.L = 2000;
  return cfg;
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "caplf");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string first_line(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run writes every artifact with the config hash") {
  const fs::path out = scratch("run");
  const RunConfig cfg = config14(out);
  std::ostringstream o, e;
  REQUIRE(cmd_run(cfg, o, e) == 0);
  const std::string hash = config_hash(cfg);
  for (const char* f : {"result.json", "moments.csv", "cdf_grid.csv", "provenance.json"}) CHECK(fs::exists(out / f));
  CHECK(first_line(out / "moments.csv") == "# config_hash=" + hash);
  CHECK(first_line(out / "cdf_grid.csv") == "# config_hash=" + hash);
  const auto result = nlohmann::json::parse(read_file(out / "result.json"));
  CHECK(result["info"]["config_hash"] == hash);
  CHECK(nlohmann::json::parse(read_file(out / "provenance.json"))["config_hash"] == hash);

  // Same configuration, byte-identical result.
  const fs::path out2 = scratch("run2");
  RunConfig again = config14(out2);
  again.options.threads = 2;
  REQUIRE(cmd_run(again, o, e) == 0);
  CHECK(read_file(out / "result.json") == read_file(out2 / "result.json"));
  CHECK(config_hash(again) == hash);
  again.options.J = 4;
  CHECK(config_hash(again) != hash);
}

TEST_CASE("benchmark checks its inputs") {
  const fs::path out = scratch("bench");
  RunConfig cfg = config14(out);
  std::ostringstream o, e;
  CHECK(cmd_benchmark(cfg, o, e) == 2);
  CHECK(e.str().find("--result") != std::string::npos);
  REQUIRE(cmd_run(cfg, o, e) == 0);
  cfg.result_path = out / "result.json";
  cfg.benchmark_n = 500;
  std::ostringstream e2;
  CHECK(cmd_benchmark(cfg, o, e2) == 2);
  CHECK(e2.str().find("1000") != std::string::npos);

  cfg.benchmark_n = 1000;
  cfg.out_dir = out / "bench";
  REQUIRE(cmd_benchmark(cfg, o, e) == 0);
  const auto metrics = nlohmann::json::parse(read_file(out / "bench" / "metrics.json"));
  CHECK(metrics.contains("voltage"));
  CHECK(metrics.contains("flow"));
  CHECK(metrics["voltage"]["cdf_rmse"].get<double>() < 0.05);
  CHECK(metrics["runtime"]["plf_s"].is_number());
  const auto bench = nlohmann::json::parse(read_file(out / "bench" / "benchmark.json"));
  CHECK(bench["quantiles"].size() == bench["labels"].size());

  RunConfig other = cfg;
  other.sidecar_path = testutil::sidecar_path("case39");
  other.case_path = testutil::case_path("case39");
  std::ostringstream e3;
  CHECK(cmd_benchmark(other, o, e3) == 2);
}

TEST_CASE("missing case file") {
  RunConfig cfg = config14(scratch("missing"));
  cfg.case_path = "/nonexistent/case99.m";
  std::ostringstream o, e;
  CHECK(cmd_run(cfg, o, e) == 2);
  CHECK(e.str().find("/nonexistent/case99.m") != std::string::npos);
}

TEST_CASE("command line parsing") {
  const fs::path out = scratch("argv");
  CHECK(invoke({"run", "--case", testutil::case_path("case14"), "--sidecar", testutil::sidecar_path("case14"), "--method",
                "sideways"}) == 2);
  CHECK(invoke({"run", "--sidecar", testutil::sidecar_path("case14")}) == 2);
  CHECK(invoke({"bogus"}) == 2);
  CHECK(invoke({"windgen", "--preset", "gusty", "--out", (out / "w.csv").string()}) == 2);
  CHECK(invoke({"benchmark", "--case", testutil::case_path("case14"), "--sidecar", testutil::sidecar_path("case14"),
                "--result", (out / "none.json").string()}) == 2);
}

TEST_CASE("windgen") {
  const fs::path out = scratch("windgen");
  WindgenConfig wg;
  wg.preset = "bimodal";
  wg.samples = 300;
  wg.out = out / "wind.csv";
  std::ostringstream o, e;
  REQUIRE(cmd_windgen(wg, o, e) == 0);
  const WindHistory h = read_wind_csv(wg.out);
  CHECK(h.names == std::vector<std::string>{"wf1", "wf2"});
  CHECK(h.values.rows() == 300);
  CHECK(first_line(wg.out).rfind("# config_hash=", 0) == 0);
  const auto truth = nlohmann::json::parse(read_file(out / "wind.truth.json"));
  CHECK(truth.contains("mixture"));

  WindgenConfig neither;
  CHECK(cmd_windgen(neither, o, e) == 2);

  const fs::path spec = out / "bad.json";
  WindSpec s = wind_preset("bimodal");
  s.correlation << 1.0, 1.2, 1.2, 1.0;
  std::string text = wind_spec_to_json(s);
  write_file(spec, text);
  WindgenConfig bad;
  bad.spec_path = spec;
  bad.out = out / "bad.csv";
  std::ostringstream e2;
  CHECK(cmd_windgen(bad, o, e2) == 2);
  CHECK(e2.str().find("1.2") != std::string::npos);
}

TEST_CASE("a generated history drives a run") {
  const fs::path out = scratch("wind_run");
  WindgenConfig wg;
  wg.preset = "unimodal-skewed";
  wg.capacity = 0.4;
  wg.samples = 5000;
  wg.seed = 3;
  wg.out = out / "wind.csv";
  std::ostringstream o, e;
  REQUIRE(cmd_windgen(wg, o, e) == 0);
  RunConfig cfg = config14(out / "run");
  cfg.wind_path = wg.out;
  CHECK(cmd_run(cfg, o, e) == 0);
  CHECK(config_hash(cfg) != config_hash(config14(out / "run")));
}

}
