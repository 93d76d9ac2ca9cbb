#include "caplf/error.hpp"
#include "caplf/plf.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace caplf {

Benchmark acmc_benchmark(const PlfContext& ctx, const Gmm& w_gmm, int n, std::uint64_t seed, int threads) {
  if (n < 1000) throw ValidationError("ACMC needs at least 1000 samples (got " + std::to_string(n) + ")");
  w_gmm.validate();
  if (w_gmm.dim() != ctx.n_farms()) throw ValidationError("wind mixture dimension differs from the farm count");
  const auto t0 = std::chrono::steady_clock::now();

  const AcSolver solver(ctx.net);
  const GmmSampler sampler(w_gmm);
  std::optional<StateVector> warm;
  try {
    warm = solver.solve(ctx.regulated_injections(moments(w_gmm).mean)).state;
  } catch (const Error&) {
    warm.reset();
  }

  Benchmark b;
  b.states.resize(n, ctx.n_states());
  b.flows.resize(n, ctx.n_flows());
  std::vector<unsigned char> exceeded(static_cast<std::size_t>(n), 0);
  std::atomic<int> failures{0};
  const int max_failures = static_cast<int>(std::floor(1e-3 * n));

  detail::parallel_for(n, resolve_threads(threads), [&](int i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      auto rng = stream_rng(seed, 0xac, static_cast<std::uint64_t>(i), attempt);
      const Eigen::VectorXd w = sampler.draw(rng);
      const Regime r = classify_z(ctx.model, ctx.farm_direction.dot(w));
      const InjectionSet inj = ctx.regulated_injections(w);
      std::optional<AcSolution> sol;
      AcOptions opts;
      opts.warm_start = warm;
      try {
        sol = solver.solve(inj, opts);
      } catch (const ConvergenceError&) {
        if (warm) {
          try {
            sol = solver.solve(inj);
          } catch (const ConvergenceError&) {
          }
        }
      }
      if (!sol) {
        if (++failures > max_failures) {
          std::ostringstream os;
          os << "ACMC: more than " << max_failures << " non-converged samples out of " << n;
          throw ConvergenceError(os.str(), 0, std::numeric_limits<double>::quiet_NaN());
        }
        continue;
      }
      exceeded[static_cast<std::size_t>(i)] = r == Regime::Exceeded ? 1 : 0;
      b.states.row(i) = sol->state.y().transpose();
      const auto flows = branch_flows_ac(ctx.net, sol->state);
      for (std::size_t k = 0; k < flows.size(); ++k) b.flows(i, static_cast<Eigen::Index>(k)) = flows[k].P_from;
      return;
    }
  });
  b.failures = failures.load();
  for (auto e : exceeded) b.exceeded += e;
  const double frac = static_cast<double>(b.exceeded) / n;
  if (ctx.params.exceed_policy == ExceedPolicy::Error && frac > 1e-4) {
    std::ostringstream os;
    os << "ACMC: probability mass beyond P_delta_max is " << frac << "; raise P_delta_max or use the clamp policy";
    throw CapacityError(os.str());
  }
  if (b.failures > 0) std::cerr << "ACMC: resampled " << b.failures << " non-converged draws\n";
  b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return b;
}

namespace {

double cdf_rmse_sorted(const ScalarMixture& m, const std::vector<double>& s, int grid) {
  const auto n = s.size();
  double acc = 0.0;
  for (int k = 0; k < grid; ++k) {
    const auto idx = std::min(n - 1, static_cast<std::size_t>(std::floor((k + 0.5) / grid * static_cast<double>(n))));
    const double t = s[idx];
    const double emp =
        static_cast<double>(std::upper_bound(s.begin(), s.end(), t) - s.begin()) / static_cast<double>(n);
    const double d = m.cdf(t) - emp;
    acc += d * d;
  }
  return std::sqrt(acc / grid);
}

std::vector<double> sorted_column(const Eigen::MatrixXd& M, Eigen::Index c) {
  std::vector<double> v(static_cast<std::size_t>(M.rows()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) v[static_cast<std::size_t>(i)] = M(i, c);
  std::sort(v.begin(), v.end());
  return v;
}

// Column `row` of the benchmark output (states then flows).
const Eigen::MatrixXd& bench_block(const Benchmark& b, int n_states, int row, Eigen::Index& col) {
  if (row < n_states) {
    col = row;
    return b.states;
  }
  col = row - n_states;
  return b.flows;
}

void check_shapes(const PlfResult& r, const Benchmark& b) {
  if (b.states.cols() != r.n_states || b.flows.cols() != r.n_flows || b.states.rows() != b.flows.rows() ||
      b.states.rows() < 1) {
    throw ValidationError("benchmark does not match the result dimensions");
  }
}

GroupMetrics& group_of(Metrics& m, const PlfResult& r, int row, int n_angle) {
  if (row < n_angle) return m.angle;
  if (row < r.n_states) return m.voltage;
  return m.flow;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

double cdf_rmse(const ScalarMixture& m, const Eigen::VectorXd& samples, int grid) {
  if (samples.size() < 1) throw ValidationError("cdf_rmse needs samples");
  if (grid < 1) throw ValidationError("cdf_rmse grid must be positive");
  std::vector<double> s(samples.data(), samples.data() + samples.size());
  std::sort(s.begin(), s.end());
  return cdf_rmse_sorted(m, s, grid);
}

// The angle block is the first N rows; N is recovered from the labels.
static int angle_rows(const PlfResult& r) {
  int n = 0;
  while (n < r.n_states && r.labels[static_cast<std::size_t>(n)].rfind("theta:", 0) == 0) ++n;
  return n;
}

Metrics metrics_moments(const PlfResult& result, const Benchmark& bench) {
  check_shapes(result, bench);
  const int R = result.n_outputs();
  const int na = angle_rows(result);
  Metrics m;
  m.rmse = Eigen::VectorXd::Zero(R);
  m.mean_rel = Eigen::VectorXd::Constant(R, nan());
  m.var_rel = Eigen::VectorXd::Constant(R, nan());
  const Eigen::VectorXd amean = result.mean();
  std::array<int, 3> mean_count{0, 0, 0};
  for (int row = 0; row < R; ++row) {
    Eigen::Index col = 0;
    const Eigen::MatrixXd& M = bench_block(bench, result.n_states, row, col);
    const double bm = M.col(col).mean();
    const double bv = (M.col(col).array() - bm).square().mean();
    GroupMetrics& g = group_of(m, result, row, na);
    const int gi = &g == &m.angle ? 0 : (&g == &m.voltage ? 1 : 2);
    if (bv < kVarianceFloor) {
      ++g.skipped;
      continue;
    }
    ++g.included;
    const double av = result.marginal(row).variance();
    m.var_rel[row] = std::abs(av - bv) / bv;
    g.var_rel_error += m.var_rel[row];
    if (std::abs(bm) >= 1e-12) {
      m.mean_rel[row] = std::abs(amean[row] - bm) / std::abs(bm);
      g.mean_rel_error += m.mean_rel[row];
      ++mean_count[static_cast<std::size_t>(gi)];
    }
  }
  std::array<GroupMetrics*, 3> gs{&m.angle, &m.voltage, &m.flow};
  for (std::size_t i = 0; i < 3; ++i) {
    if (gs[i]->included > 0) gs[i]->var_rel_error /= gs[i]->included;
    if (mean_count[i] > 0) gs[i]->mean_rel_error /= mean_count[i];
  }
  return m;
}

Metrics metrics_cdf_rmse(const PlfResult& result, const Benchmark& bench, int threads) {
  Metrics m = metrics_moments(result, bench);
  const int R = result.n_outputs();
  const int na = angle_rows(result);
  m.rmse = Eigen::VectorXd::Constant(R, nan());
  detail::parallel_for(R, resolve_threads(threads), [&](int row) {
    if (std::isnan(m.var_rel[row])) return;
    Eigen::Index col = 0;
    const Eigen::MatrixXd& M = bench_block(bench, result.n_states, row, col);
    m.rmse[row] = cdf_rmse_sorted(result.marginal(row), sorted_column(M, col), kCdfGrid);
  });
  for (int row = 0; row < R; ++row) {
    if (!std::isnan(m.rmse[row])) group_of(m, result, row, na).cdf_rmse += m.rmse[row];
  }
  for (GroupMetrics* g : {&m.angle, &m.voltage, &m.flow}) {
    if (g->included > 0) g->cdf_rmse /= g->included;
  }
  return m;
}

}  // namespace caplf
