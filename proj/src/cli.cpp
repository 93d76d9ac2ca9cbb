#include "caplf/cli.hpp"

#include "caplf/error.hpp"
#include "caplf/experiment.hpp"
#include "caplf/util.hpp"
#include "caplf/windgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

namespace caplf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::string input_hash(const RunConfig& cfg) {
  std::uint64_t h = fnv1a(read_file(cfg.case_path));
  h = fnv1a("|sidecar|", h);
  h = fnv1a(read_file(cfg.sidecar_path), h);
  h = fnv1a("|wind|", h);
  if (cfg.wind_path) h = fnv1a(read_file(*cfg.wind_path), h);
  return hex64(h);
}

void check_inputs(const RunConfig& cfg) {
  if (!fs::exists(cfg.case_path)) throw ValidationError("case file not found: " + cfg.case_path.string());
  if (!fs::exists(cfg.sidecar_path)) throw ValidationError("sidecar file not found: " + cfg.sidecar_path.string());
  if (cfg.wind_path && !fs::exists(*cfg.wind_path)) {
    throw ValidationError("wind history not found: " + cfg.wind_path->string());
  }
  const auto& o = cfg.options;
  if (o.L < 0) throw ValidationError("--L must be positive");
  if (o.J < 1) throw ValidationError("--J must be at least 1");
  if (o.H < 0) throw ValidationError("--H must not be negative");
}

json timings_json(const PlfTimings& t) {
  return {{"gmm_s", t.gmm}, {"correction_s", t.correction}, {"sampling_s", t.sampling}, {"mapping_s", t.mapping},
          {"total_s", t.total}};
}

json config_json(const RunConfig& cfg) {
  const auto& o = cfg.options;
  json j;
  j["case"] = cfg.case_path.string();
  j["sidecar"] = cfg.sidecar_path.string();
  j["wind"] = cfg.wind_path ? json(cfg.wind_path->string()) : json(nullptr);
  j["method"] = method_name(o.method);
  j["L"] = o.effective_L();
  j["J"] = o.J;
  j["H"] = o.H;
  j["correction"] = correction_name(o.correction);
  j["seeds"] = {{"gmm", o.seed_gmm},
                {"sampling", o.seed_sampling},
                {"correction", o.seed_correction},
                {"benchmark", cfg.seed_benchmark}};
  j["threads"] = resolve_threads(o.threads);
  return j;
}

std::string moments_csv(const PlfResult& r, const std::string& hash) {
  std::string s = "# config_hash=" + hash + "\nlabel,mean,variance\n";
  const Eigen::VectorXd m = r.mean();
  for (int i = 0; i < r.n_outputs(); ++i) {
    s += r.labels[static_cast<std::size_t>(i)] + "," + format_double(m[i]) + "," +
         format_double(r.marginal(i).variance()) + "\n";
  }
  return s;
}

std::string cdf_grid_csv(const PlfResult& r, const std::string& hash, int points = 51) {
  std::string s = "# config_hash=" + hash + "\nlabel,x,cdf\n";
  for (int i = 0; i < r.n_outputs(); ++i) {
    const ScalarMixture m = r.marginal(i);
    const double mu = m.mean();
    const double sd = std::sqrt(std::max(0.0, m.variance()));
    const auto& label = r.labels[static_cast<std::size_t>(i)];
    if (sd == 0.0) {
      s += label + "," + format_double(mu) + ",1\n";
      continue;
    }
    for (int k = 0; k < points; ++k) {
      const double x = mu - 4 * sd + 8 * sd * k / (points - 1);
      s += label + "," + format_double(x) + "," + format_double(m.cdf(x)) + "\n";
    }
  }
  return s;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace

std::string config_hash(const RunConfig& cfg) {
  const auto& o = cfg.options;
  std::ostringstream os;
  os << input_hash(cfg) << "|" << method_name(o.method) << "|" << o.effective_L() << "|" << o.J << "|" << o.H << "|"
     << correction_name(o.correction) << "|" << o.seed_gmm << "|" << o.seed_sampling << "|" << o.seed_correction;
  return hex64(fnv1a(os.str()));
}

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    check_inputs(cfg);
    const std::string hash = config_hash(cfg);
    const Experiment ex = prepare_experiment(cfg.case_path, cfg.sidecar_path, cfg.wind_path);
    PlfTimings tm;
    PlfResult r = run_algorithm1(ex.ctx, ex.history, cfg.options, &tm);
    r.info["case_id"] = ex.sidecar.case_id.empty() ? cfg.case_path.stem().string() : ex.sidecar.case_id;
    r.info["config_hash"] = hash;
    r.info["input_hash"] = input_hash(cfg);

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir / "result.json", result_to_json(r));
    write_file(cfg.out_dir / "moments.csv", moments_csv(r, hash));
    write_file(cfg.out_dir / "cdf_grid.csv", cdf_grid_csv(r, hash));
    json prov;
    prov["config_hash"] = hash;
    prov["config"] = config_json(cfg);
    prov["timings"] = timings_json(tm);
    prov["segment_probs"] = r.segment_probs;
    prov["segment_J"] = r.segment_J;
    prov["correction_samples"] = r.correction.samples;
    prov["ac_failures"] = r.correction.ac_failures;
    write_file(cfg.out_dir / "provenance.json", prov.dump(2) + "\n");

    out << "case " << r.info["case_id"] << ": " << ex.ctx.net.n_buses() << " buses, " << ex.ctx.n_farms()
        << " wind farms\n";
    out << "segments p = [" << r.segment_probs[0] << ", " << r.segment_probs[1] << ", " << r.segment_probs[2]
        << "], components " << r.components.size() << "\n";
    out << "time " << tm.total << " s; results in " << cfg.out_dir.string() << "\n";
    return kOk;
  });
}

int cmd_benchmark(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    check_inputs(cfg);
    if (!cfg.result_path) throw ValidationError("benchmark needs --result (a result.json from 'run')");
    if (!fs::exists(*cfg.result_path)) throw ValidationError("result file not found: " + cfg.result_path->string());
    if (cfg.benchmark_n < 1000) {
      throw ValidationError("benchmark needs at least 1000 samples for stable metrics (got " +
                            std::to_string(cfg.benchmark_n) + ")");
    }
    const PlfResult r = result_from_json(read_file(*cfg.result_path));
    const auto it = r.info.find("input_hash");
    if (it != r.info.end() && it->second != input_hash(cfg)) {
      throw ValidationError("result was produced from different case, sidecar or wind inputs");
    }
    const Experiment ex = prepare_experiment(cfg.case_path, cfg.sidecar_path, cfg.wind_path);
    const Benchmark b = acmc_benchmark(ex.ctx, r.wind_gmm, cfg.benchmark_n, cfg.seed_benchmark, cfg.options.threads);
    const Metrics m = metrics_cdf_rmse(r, b, cfg.options.threads);
    const std::string hash = config_hash(cfg);

    json bj;
    bj["config_hash"] = hash;
    bj["n"] = cfg.benchmark_n;
    bj["seed"] = cfg.seed_benchmark;
    bj["failures"] = b.failures;
    bj["exceeded"] = b.exceeded;
    bj["seconds"] = b.seconds;
    bj["labels"] = r.labels;
    bj["quantile_levels"] = kCdfGrid;
    json means = json::array(), vars = json::array(), quants = json::array();
    for (int row = 0; row < r.n_outputs(); ++row) {
      const Eigen::VectorXd col = row < r.n_states ? Eigen::VectorXd(b.states.col(row))
                                                   : Eigen::VectorXd(b.flows.col(row - r.n_states));
      const double mu = col.mean();
      means.push_back(mu);
      vars.push_back((col.array() - mu).square().mean());
      std::vector<double> s(col.data(), col.data() + col.size());
      std::sort(s.begin(), s.end());
      std::vector<double> q(kCdfGrid);
      for (int k = 0; k < kCdfGrid; ++k) {
        q[static_cast<std::size_t>(k)] = s[std::min(s.size() - 1, static_cast<std::size_t>((k + 0.5) / kCdfGrid *
                                                                                           static_cast<double>(s.size())))];
      }
      quants.push_back(q);
    }
    bj["mean"] = means;
    bj["variance"] = vars;
    bj["quantiles"] = quants;

    auto group = [](const GroupMetrics& g) {
      return json{{"cdf_rmse", g.cdf_rmse},
                  {"mean_rel_error", g.mean_rel_error},
                  {"var_rel_error", g.var_rel_error},
                  {"included", g.included},
                  {"skipped", g.skipped}};
    };
    json mj;
    mj["config_hash"] = hash;
    mj["result"] = cfg.result_path->string();
    mj["n"] = cfg.benchmark_n;
    mj["angle"] = group(m.angle);
    mj["voltage"] = group(m.voltage);
    mj["flow"] = group(m.flow);
    json rt;
    rt["acmc_s"] = b.seconds;
    rt["plf_s"] = nullptr;
    const fs::path prov = cfg.result_path->parent_path() / "provenance.json";
    if (fs::exists(prov)) {
      const json pj = json::parse(read_file(prov), nullptr, false);
      if (!pj.is_discarded() && pj.contains("timings")) rt["plf_s"] = pj["timings"].value("total_s", 0.0);
    }
    mj["runtime"] = rt;

    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir / "benchmark.json", bj.dump(1) + "\n");
    write_file(cfg.out_dir / "metrics.json", mj.dump(2) + "\n");
    out << "ACMC n=" << cfg.benchmark_n << " in " << b.seconds << " s (" << b.failures << " resampled)\n";
    out << "CDF RMSE  angle " << m.angle.cdf_rmse << "  voltage " << m.voltage.cdf_rmse << "  flow " << m.flow.cdf_rmse
        << "\n";
    out << "mean rel  angle " << m.angle.mean_rel_error << "  voltage " << m.voltage.mean_rel_error << "  flow "
        << m.flow.mean_rel_error << "\n";
    out << "var rel   angle " << m.angle.var_rel_error << "  voltage " << m.voltage.var_rel_error << "  flow "
        << m.flow.var_rel_error << "\n";
    return kOk;
  });
}

int cmd_windgen(const WindgenConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.preset.has_value() == cfg.spec_path.has_value()) {
      throw ValidationError("windgen needs exactly one of --preset or --spec");
    }
    WindSpec spec;
    if (cfg.preset) {
      spec = wind_preset(*cfg.preset, cfg.capacity, cfg.samples, cfg.seed);
    } else {
      if (!fs::exists(*cfg.spec_path)) throw ValidationError("spec file not found: " + cfg.spec_path->string());
      spec = wind_spec_from_json(read_file(*cfg.spec_path));
      spec.validate();
    }
    const WindHistory h = generate(spec);
    std::string src = cfg.preset ? "preset=" + *cfg.preset : "spec=" + cfg.spec_path->filename().string();
    const std::string spec_text = wind_spec_to_json(spec);
    const std::string hash = hex64(fnv1a(spec_text));
    if (cfg.out.has_parent_path()) fs::create_directories(cfg.out.parent_path());
    write_file(cfg.out, format_wind_csv(h, "config_hash=" + hash + " " + src));
    json truth;
    truth["config_hash"] = hash;
    truth["spec"] = json::parse(spec_text);
    truth["mixture"] = json::parse(gmm_to_json(spec.truth()));
    truth["clipped_fraction"] = h.clipped_fraction;
    fs::path tpath = cfg.out;
    tpath.replace_extension(".truth.json");
    write_file(tpath, truth.dump(2) + "\n");
    out << "wrote " << h.values.rows() << " x " << h.values.cols() << " to " << cfg.out.string() << " and "
        << tpath.string() << "\n";
    return kOk;
  });
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Control-aware analytical probabilistic load flow"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string method = "indirect";
  std::string correction = "polynomial";
  std::string case_path, sidecar_path, wind_path, out_dir = ".", result_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--case", case_path, "MATPOWER case file")->required();
    sub->add_option("--sidecar", sidecar_path, "experiment sidecar (JSON)")->required();
    sub->add_option("--wind", wind_path, "wind history CSV (default: sidecar preset)");
    sub->add_option("--method", method, "direct or indirect")->check(CLI::IsMember({"direct", "indirect"}));
    sub->add_option("--L", cfg.options.L, "samples of the aggregate wind (0: method default)");
    sub->add_option("--J", cfg.options.J, "mixture components");
    sub->add_option("--H", cfg.options.H, "AC samples per segment for the correction");
    sub->add_option("--correction", correction, "none, constant or polynomial")
        ->check(CLI::IsMember({"none", "constant", "polynomial"}));
    sub->add_option("--seed-gmm", cfg.options.seed_gmm);
    sub->add_option("--seed-sampling", cfg.options.seed_sampling);
    sub->add_option("--seed-correction", cfg.options.seed_correction);
    sub->add_option("--seed-benchmark", cfg.seed_benchmark);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", cfg.options.threads, "worker threads (0: all cores)");
  };
  CLI::App* run = app.add_subcommand("run", "fit the input mixture and compute the state distribution");
  add_common(run);
  CLI::App* bench = app.add_subcommand("benchmark", "AC Monte Carlo benchmark and metrics against a result");
  add_common(bench);
  bench->add_option("--result", result_path, "result.json from 'run'")->required();
  bench->add_option("--n", cfg.benchmark_n, "ACMC sample count");

  WindgenConfig wg;
  std::string preset, spec_path, wg_out = "wind.csv";
  CLI::App* windgen = app.add_subcommand("windgen", "synthetic wind history");
  auto* po = windgen->add_option("--preset", preset, "built-in preset");
  windgen->add_option("--spec", spec_path, "spec JSON")->excludes(po);
  windgen->add_option("--capacity", wg.capacity, "farm rating in p.u. (presets)");
  windgen->add_option("--samples", wg.samples);
  windgen->add_option("--seed", wg.seed);
  windgen->add_option("--out", wg_out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* sub = nullptr;
    for (CLI::App* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kUsage;
  }

  if (windgen->parsed()) {
    if (!preset.empty()) wg.preset = preset;
    if (!spec_path.empty()) wg.spec_path = spec_path;
    wg.out = wg_out;
    return cmd_windgen(wg, std::cout, std::cerr);
  }
  cfg.case_path = case_path;
  cfg.sidecar_path = sidecar_path;
  if (!wind_path.empty()) cfg.wind_path = wind_path;
  if (!result_path.empty()) cfg.result_path = result_path;
  cfg.out_dir = out_dir;
  cfg.options.method = parse_method(method);
  cfg.options.correction = parse_correction(correction);
  if (run->parsed()) return cmd_run(cfg, std::cout, std::cerr);
  return cmd_benchmark(cfg, std::cout, std::cerr);
}

}  // namespace caplf
