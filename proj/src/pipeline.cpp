#include "caplf/error.hpp"
#include "caplf/plf.hpp"

#include <chrono>

namespace caplf {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class Fn>
auto stage(const char* name, double* seconds, Fn&& fn) {
  const auto t0 = Clock::now();
  try {
    auto out = fn();
    if (seconds) *seconds = since(t0);
    return out;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

Gmm fit_wind_gmm(const Eigen::MatrixXd& history, int J, std::uint64_t seed) {
  if (history.rows() < 1 || history.cols() < 1) throw ValidationError("wind history is empty");
  if (J < 1) throw ValidationError("J must be at least 1");
  if (!history.allFinite()) throw ValidationError("wind history has non-finite values");
  const Eigen::RowVectorXd first = history.row(0);
  if ((history.rowwise() - first).cwiseAbs().maxCoeff() == 0.0) {
    return Gmm::single(first.transpose(), Eigen::MatrixXd::Zero(history.cols(), history.cols()));
  }
  const auto n = static_cast<int>(history.rows());
  const auto d = static_cast<int>(history.cols());
  const int Jf = std::max(1, std::min(J, n / (d + 1)));
  return em_fit(history, Jf, seed);
}

PlfResult run_algorithm1_gmm(const PlfContext& ctx, const Gmm& w_gmm, const PlfOptions& opts, PlfTimings* timings,
                             const Oracle* oracle) {
  const auto t0 = Clock::now();
  PlfTimings local;
  PlfTimings& tm = timings ? *timings : local;
  if (opts.J < 1) throw ValidationError("J must be at least 1");
  const int L = opts.effective_L();

  const CorrectionCoeffs coeffs = stage("correction", &tm.correction, [&] {
    w_gmm.validate();
    if (w_gmm.dim() != ctx.n_farms()) throw ValidationError("wind mixture dimension differs from the farm count");
    if (oracle) return fit_correction(ctx, w_gmm, opts.H, opts.correction, opts.seed_correction, *oracle);
    std::optional<StateVector> warm;
    try {
      warm = AcSolver(ctx.net).solve(ctx.regulated_injections(moments(w_gmm).mean)).state;
    } catch (const ConvergenceError&) {
    }
    return fit_correction(ctx, w_gmm, opts.H, opts.correction, opts.seed_correction, ac_oracle(ctx, warm));
  });

  const SegmentedMap map = stage("mapping", nullptr, [&] {
    return segmented_map(ctx, apply_correction(ctx.model, coeffs), coeffs);
  });

  const SegmentStats stats =
      stage("sampling", &tm.sampling, [&] { return segment_stats(map, w_gmm, L, opts.seed_sampling); });

  PlfResult r = stage("mapping", &tm.mapping, [&] {
    return opts.method == Method::Direct ? direct_method(map, w_gmm, stats)
                                         : indirect_method(map, w_gmm, stats, opts.J, opts.seed_gmm, opts.threads);
  });
  r.correction = coeffs;
  r.info["method"] = method_name(opts.method);
  r.info["L"] = std::to_string(L);
  r.info["J"] = std::to_string(opts.J);
  r.info["H"] = std::to_string(opts.H);
  r.info["correction"] = correction_name(opts.correction);
  r.info["seed_gmm"] = std::to_string(opts.seed_gmm);
  r.info["seed_sampling"] = std::to_string(opts.seed_sampling);
  r.info["seed_correction"] = std::to_string(opts.seed_correction);
  r.info["n_farms"] = std::to_string(ctx.n_farms());
  tm.total = since(t0) + tm.gmm;
  return r;
}

PlfResult run_algorithm1(const PlfContext& ctx, const Eigen::MatrixXd& wind_history, const PlfOptions& opts,
                         PlfTimings* timings) {
  PlfTimings local;
  PlfTimings& tm = timings ? *timings : local;
  const Gmm w_gmm = stage("gmm", &tm.gmm, [&] {
    if (wind_history.cols() != ctx.n_farms()) {
      throw ValidationError("wind history has " + std::to_string(wind_history.cols()) + " columns but the case has " +
                            std::to_string(ctx.n_farms()) + " wind farms");
    }
    return fit_wind_gmm(wind_history, opts.J, opts.seed_gmm);
  });
  return run_algorithm1_gmm(ctx, w_gmm, opts, &tm);
}

}  // namespace caplf
