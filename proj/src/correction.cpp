#include "caplf/error.hpp"
#include "caplf/plf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace caplf {

PlfContext make_context(NetworkCase net, const ControlSettings& settings) {
  if (net.wind_farms.empty()) throw ValidationError("case has no wind farms attached");
  PlfContext ctx;
  ctx.params = make_control_params(net, settings);
  const Admittance adm = build_admittance(net);
  ctx.lin = std::make_shared<const LinearPfModel>(build_dlpf(net, adm));
  ctx.model = assemble_piecewise(net, ctx.params, ctx.lin);
  ctx.flows = branch_flow_matrix(net, adm);
  ctx.T = wind_injection_map(net, settings.power_factor);
  ctx.base = base_injections(net);
  ctx.farm_direction = ctx.T.topRows(net.N()).colwise().sum().transpose();
  ctx.net = std::move(net);
  return ctx;
}

int PlfContext::segment_for(const Eigen::VectorXd& w) const {
  return SegmentedMap::segment(classify_z(model, farm_direction.dot(w)));
}

InjectionSet PlfContext::regulated_injections(const Eigen::VectorXd& w) const {
  if (w.size() != n_farms()) throw ValidationError("farm output vector has wrong length");
  const Eigen::VectorXd x = T * w;
  const double z = farm_direction.dot(w);
  const Regime r = classify_z(model, z);
  InjectionSet inj{base.P + x.head(net.N()), base.Q + x.tail(net.M())};
  if (r != Regime::Balanced) {
    const int seg = SegmentedMap::segment(r);
    inj.P += model.segments[static_cast<std::size_t>(seg)].a * (z + model.c_offset);
  }
  return inj;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffU); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(a), hi(a), lo(b), hi(b), lo(c), hi(c)};
  return std::mt19937_64(seq);
}

const char* correction_name(CorrectionMode m) {
  switch (m) {
    case CorrectionMode::None:
      return "none";
    case CorrectionMode::Constant:
      return "constant";
    case CorrectionMode::Polynomial:
      return "polynomial";
  }
  return "?";
}

CorrectionMode parse_correction(const std::string& s) {
  if (s == "none") return CorrectionMode::None;
  if (s == "constant") return CorrectionMode::Constant;
  if (s == "polynomial") return CorrectionMode::Polynomial;
  throw ValidationError("unknown correction mode '" + s + "' (expected none, constant or polynomial)");
}

CorrectionCoeffs CorrectionCoeffs::identity(int n_states, int n_flows) {
  CorrectionCoeffs c;
  for (std::size_t i = 0; i < 3; ++i) {
    c.rho[i] = Eigen::VectorXd::Ones(n_states);
    c.varsigma[i] = Eigen::VectorXd::Zero(n_states);
    c.rho_flow[i] = Eigen::VectorXd::Ones(n_flows);
    c.varsigma_flow[i] = Eigen::VectorXd::Zero(n_flows);
  }
  return c;
}

Oracle ac_oracle(const PlfContext& ctx, std::optional<StateVector> warm) {
  auto solver = std::make_shared<const AcSolver>(ctx.net);
  return [solver, warm, &ctx](const InjectionSet& inj) {
    AcOptions opts;
    opts.warm_start = warm;
    const AcSolution sol = solver->solve(inj, opts);
    const auto flows = branch_flows_ac(ctx.net, sol.state);
    OracleResult r;
    r.y = sol.state.y();
    r.flows.resize(static_cast<Eigen::Index>(flows.size()));
    for (std::size_t k = 0; k < flows.size(); ++k) r.flows[static_cast<Eigen::Index>(k)] = flows[k].P_from;
    return r;
  };
}

Oracle dlpf_oracle(const PlfContext& ctx) {
  return [&ctx](const InjectionSet& inj) {
    OracleResult r;
    r.y = ctx.lin->solve(stack_injections(inj));
    r.flows = ctx.flows.F * r.y + ctx.flows.f0;
    return r;
  };
}

OracleResult dlpf_prediction(const PlfContext& ctx, int seg, const Eigen::VectorXd& w) {
  const Eigen::VectorXd x = ctx.T * w;
  OracleResult r;
  r.y = ctx.model.apply_A_raw(seg, x) + ctx.model.segments.at(static_cast<std::size_t>(seg)).b_raw;
  r.flows = ctx.flows.F * r.y + ctx.flows.f0;
  return r;
}

Eigen::MatrixXd draw_segment_samples(const PlfContext& ctx, const Gmm& w_gmm, int seg, int count, std::uint64_t seed) {
  const int k = ctx.n_farms();
  if (w_gmm.dim() != k) throw ValidationError("wind mixture dimension differs from the farm count");
  Eigen::MatrixXd out(std::max(count, 0), k);
  if (count <= 0) return out;
  int got = 0;
  auto in_segment = [&](double z) {
    const Regime r = classify_z(ctx.model, z);
    return r != Regime::Exceeded && segment_of(r) == seg;
  };

  const GmmSampler sampler(w_gmm);
  auto rng = stream_rng(seed, 0x5e9, static_cast<std::uint64_t>(seg));
  const long budget = std::max(4000L, 400L * count);
  for (long t = 0; t < budget && got < count; ++t) {
    const Eigen::VectorXd w = sampler.draw(rng);
    if (in_segment(ctx.farm_direction.dot(w))) out.row(got++) = w.transpose();
  }
  if (got == count) return out;

  // Rare segment: spread aggregates over the reachable part of Omega_i and
  // draw the farm vector from the conditional mixture.
  const Eigen::VectorXd& e = ctx.farm_direction;
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -zmin;
  for (int j = 0; j < w_gmm.size(); ++j) {
    const double m = e.dot(w_gmm.means[static_cast<std::size_t>(j)]);
    const double s = std::sqrt(std::max(0.0, e.dot(w_gmm.covs[static_cast<std::size_t>(j)] * e)));
    zmin = std::min(zmin, m - 5 * s);
    zmax = std::max(zmax, m + 5 * s);
  }
  std::vector<std::pair<double, double>> spans;
  double total = 0.0;
  for (const Interval& iv : ctx.model.omega(seg)) {
    const double lo = std::max(iv.lo, zmin);
    const double hi = std::min(iv.hi, zmax);
    if (hi > lo) {
      spans.emplace_back(lo, hi);
      total += hi - lo;
    }
  }
  if (spans.empty()) {
    out.conservativeResize(got, k);
    return out;
  }
  std::uniform_real_distribution<double> u(0.0, total);
  for (int t = 0; t < 50 * count && got < count; ++t) {
    double r = u(rng);
    double z = spans.back().second;
    for (const auto& [lo, hi] : spans) {
      if (r <= hi - lo) {
        z = lo + r;
        break;
      }
      r -= hi - lo;
    }
    if (!in_segment(z)) continue;
    Gmm cond;
    try {
      cond = condition_on_sum(w_gmm, e, z);
    } catch (const NumericalError&) {
      continue;
    }
    Eigen::VectorXd w = GmmSampler(cond).draw(rng);
    if (in_segment(e.dot(w))) out.row(got++) = w.transpose();
  }
  out.conservativeResize(got, k);
  return out;
}

void fit_rows(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, CorrectionMode mode, Eigen::VectorXd& rho,
              Eigen::VectorXd& varsigma, int* constant_rows) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("fit_rows: prediction and target shapes differ");
  }
  const auto rows = pred.rows();
  const auto h = pred.cols();
  rho = Eigen::VectorXd::Ones(rows);
  varsigma = Eigen::VectorXd::Zero(rows);
  if (mode == CorrectionMode::None || h == 0) return;
  int flat = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mx = pred.row(r).mean();
    const double my = target.row(r).mean();
    const Eigen::ArrayXXd dx = pred.row(r).array() - mx;
    const double sxx = dx.square().sum();
    const bool constant_x = std::sqrt(sxx / static_cast<double>(h)) <= 1e-10 * std::max(1.0, std::abs(mx));
    if (mode == CorrectionMode::Constant || h < 2 || constant_x) {
      varsigma[r] = my - mx;
      if (mode == CorrectionMode::Polynomial) ++flat;
      continue;
    }
    const double sxy = (dx * (target.row(r).array() - my)).sum();
    rho[r] = sxy / sxx;
    varsigma[r] = my - rho[r] * mx;
  }
  if (constant_rows) *constant_rows = flat;
}

CorrectionCoeffs fit_correction(const PlfContext& ctx, const Gmm& w_gmm, int H, CorrectionMode mode,
                                std::uint64_t seed, const Oracle& oracle) {
  CorrectionCoeffs c = CorrectionCoeffs::identity(ctx.n_states(), ctx.n_flows());
  c.mode = mode;
  if (mode == CorrectionMode::None) return c;
  const int need = mode == CorrectionMode::Polynomial ? 2 : 1;
  if (H < need) {
    throw ValidationError("correction needs H >= " + std::to_string(need) + " samples per segment (got " +
                          std::to_string(H) + ")");
  }
  c.H = H;
  for (int seg = 0; seg < 3; ++seg) {
    Eigen::MatrixXd W = draw_segment_samples(ctx, w_gmm, seg, H, seed);
    const int h = static_cast<int>(W.rows());
    if (h == 0) continue;
    Eigen::MatrixXd pred_y(ctx.n_states(), h), true_y(ctx.n_states(), h);
    Eigen::MatrixXd pred_f(ctx.n_flows(), h), true_f(ctx.n_flows(), h);
    int used = 0;
    int spare_round = 0;
    int failures = 0;
    for (int col = 0; col < h; ++col) {
      Eigen::VectorXd w = W.row(col).transpose();
      while (true) {
        try {
          const OracleResult ac = oracle(ctx.regulated_injections(w));
          const OracleResult dl = dlpf_prediction(ctx, seg, w);
          pred_y.col(used) = dl.y;
          true_y.col(used) = ac.y;
          pred_f.col(used) = dl.flows;
          true_f.col(used) = ac.flows;
          ++used;
          break;
        } catch (const ConvergenceError&) {
          ++failures;
          ++c.ac_failures;
          if (failures > 3 * H) {
            throw ConvergenceError("too many AC failures while fitting the correction (segment " +
                                       std::to_string(seg + 1) + ")",
                                   0, 0.0);
          }
          const Eigen::MatrixXd spare = draw_segment_samples(ctx, w_gmm, seg, 1, seed + 7919ULL * ++spare_round);
          if (spare.rows() == 0) break;
          w = spare.row(0).transpose();
        }
      }
    }
    if (used == 0) continue;
    const CorrectionMode m = used < need ? CorrectionMode::Constant : mode;
    auto s = static_cast<std::size_t>(seg);
    fit_rows(pred_y.leftCols(used), true_y.leftCols(used), m, c.rho[s], c.varsigma[s], &c.constant_rows[s]);
    fit_rows(pred_f.leftCols(used), true_f.leftCols(used), m, c.rho_flow[s], c.varsigma_flow[s]);
    c.samples[s] = used;
  }
  return c;
}

PiecewiseLinearModel apply_correction(const PiecewiseLinearModel& model, const CorrectionCoeffs& coeffs) {
  PiecewiseLinearModel out = model;
  for (std::size_t i = 0; i < 3; ++i) {
    Segment& s = out.segments[i];
    if (coeffs.rho[i].size() != s.b_raw.size() || coeffs.varsigma[i].size() != s.b_raw.size()) {
      throw ValidationError("correction coefficients do not match the model dimension");
    }
    s.rho = coeffs.rho[i];
    s.b = coeffs.rho[i].cwiseProduct(s.b_raw) + coeffs.varsigma[i];
  }
  return out;
}

}  // namespace caplf
