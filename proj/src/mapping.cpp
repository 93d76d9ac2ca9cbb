#include "caplf/error.hpp"
#include "caplf/plf.hpp"
#include "parallel.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

namespace caplf {

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Regime SegmentedMap::classify(double z) const {
  const double mag = std::abs(z + c_offset);
  if (mag == 0.0) return Regime::Balanced;
  if (mag <= delta[1]) return Regime::DeadBand;
  if (mag <= delta[2]) return Regime::Primary;
  if (mag <= delta[3]) return Regime::Secondary;
  return Regime::Exceeded;
}

int SegmentedMap::segment(Regime r) { return r == Regime::Exceeded ? 2 : segment_of(r); }

Eigen::MatrixXd SegmentedMap::push(const Eigen::MatrixXd& W) const {
  if (W.cols() != n_farms()) throw ValidationError("farm sample matrix has wrong width");
  Eigen::MatrixXd Y(W.rows(), n_outputs());
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    const Eigen::VectorXd w = W.row(r).transpose();
    const auto s = static_cast<std::size_t>(segment(classify(direction.dot(w))));
    Y.row(r) = (maps[s] * w + offsets[s]).transpose();
  }
  return Y;
}

std::vector<std::string> output_labels(const NetworkCase& net) {
  std::vector<std::string> out;
  for (int b : net.S) out.push_back("theta:" + std::to_string(net.buses[b].id));
  for (int b : net.L) out.push_back("V:" + std::to_string(net.buses[b].id));
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    out.push_back("P:" + std::to_string(net.buses[br.from].id) + "-" + std::to_string(net.buses[br.to].id) + ":" +
                  std::to_string(k + 1));
  }
  return out;
}

SegmentedMap segmented_map(const PlfContext& ctx, const PiecewiseLinearModel& model, const CorrectionCoeffs& coeffs) {
  SegmentedMap m;
  m.direction = ctx.farm_direction;
  m.c_offset = model.c_offset;
  m.delta = model.delta;
  m.exceed_policy = model.exceed_policy;
  m.n_states = ctx.n_states();
  m.n_flows = ctx.n_flows();
  m.labels = output_labels(ctx.net);
  const auto& F = ctx.flows.F;
  for (std::size_t s = 0; s < 3; ++s) {
    const Segment& seg = model.segments[s];
    const Eigen::MatrixXd AT = model.apply_A_raw(static_cast<int>(s), ctx.T);
    const Eigen::MatrixXd FAT = F * AT;
    const Eigen::VectorXd fb = F * seg.b_raw + ctx.flows.f0;
    const auto& rf = coeffs.rho_flow[s];
    if (rf.size() != m.n_flows) throw ValidationError("flow correction has wrong length");
    m.maps[s].resize(m.n_outputs(), ctx.n_farms());
    m.maps[s].topRows(m.n_states) = seg.rho.asDiagonal() * AT;
    m.maps[s].bottomRows(m.n_flows) = rf.asDiagonal() * FAT;
    m.offsets[s].resize(m.n_outputs());
    m.offsets[s].head(m.n_states) = seg.b;
    m.offsets[s].tail(m.n_flows) = rf.cwiseProduct(fb) + coeffs.varsigma_flow[s];
  }
  return m;
}

SegmentStats segment_stats(const SegmentedMap& map, const Gmm& w_gmm, int L, std::uint64_t seed) {
  if (L < 1) throw ValidationError("L must be at least 1");
  if (w_gmm.dim() != map.n_farms()) throw ValidationError("wind mixture dimension differs from the farm count");
  SegmentStats st;
  st.samples = sample(w_gmm, L, seed);
  st.z = st.samples * map.direction;
  st.regimes.resize(static_cast<std::size_t>(L));
  st.segment.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const Regime r = map.classify(st.z[l]);
    st.regimes[static_cast<std::size_t>(l)] = r;
    if (r == Regime::Exceeded) ++st.exceeded;
    const int s = SegmentedMap::segment(r);
    st.segment[static_cast<std::size_t>(l)] = s;
    ++st.counts[static_cast<std::size_t>(s)];
  }
  const double frac = static_cast<double>(st.exceeded) / L;
  if (map.exceed_policy == ExceedPolicy::Error && frac > 1e-4) {
    std::ostringstream os;
    os << "probability mass beyond P_delta_max is " << frac << " (" << st.exceeded << " of " << L
       << " samples); raise P_delta_max or use the clamp policy";
    throw CapacityError(os.str());
  }
  for (std::size_t s = 0; s < 3; ++s) st.probs[s] = static_cast<double>(st.counts[s]) / L;

  // Analytic mass of each segment under the aggregate marginal.
  ScalarMixture zm;
  zm.w = w_gmm.weights;
  zm.mu.resize(w_gmm.size());
  zm.var.resize(w_gmm.size());
  for (int j = 0; j < w_gmm.size(); ++j) {
    zm.mu[j] = map.direction.dot(w_gmm.means[static_cast<std::size_t>(j)]);
    zm.var[j] = std::max(0.0, map.direction.dot(w_gmm.covs[static_cast<std::size_t>(j)] * map.direction));
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (st.counts[s] > 0) continue;
    const double c = map.c_offset;
    const double lo = map.delta[s];
    const double hi = map.delta[s + 1];
    const double mass = (zm.cdf(hi - c) - zm.cdf(lo - c)) + (zm.cdf(-lo - c) - zm.cdf(-hi - c));
    if (mass > 1e-3) {
      std::cerr << "warning: segment " << s + 1 << " has analytic mass " << mass << " but no samples (L=" << L
                << ")\n";
    }
  }
  return st;
}

const char* method_name(Method m) { return m == Method::Direct ? "direct" : "indirect"; }

Method parse_method(const std::string& s) {
  if (s == "direct") return Method::Direct;
  if (s == "indirect") return Method::Indirect;
  throw ValidationError("unknown method '" + s + "' (expected direct or indirect)");
}

namespace {

PlfResult result_shell(const SegmentedMap& map, const SegmentStats& stats, const Gmm& w_gmm, Method m) {
  PlfResult r;
  r.method = m;
  r.L = static_cast<int>(stats.samples.rows());
  r.n_states = map.n_states;
  r.n_flows = map.n_flows;
  r.labels = map.labels;
  r.maps = map.maps;
  r.offsets = map.offsets;
  r.segment_probs = stats.probs;
  r.segment_counts = stats.counts;
  r.exceeded = stats.exceeded;
  r.wind_gmm = w_gmm;
  return r;
}

// Pieces of w | e.w = z that do not depend on z.
struct Conditioner {
  std::vector<int> valid;  // usable components
  std::vector<double> logw, m, s;
  std::vector<Eigen::VectorXd> gain, mu;
  std::vector<Eigen::MatrixXd> theta;

  Conditioner(const Gmm& g, const Eigen::VectorXd& e) {
    for (int j = 0; j < g.size(); ++j) {
      const auto& sig = g.covs[static_cast<std::size_t>(j)];
      const Eigen::VectorXd se = sig * e;
      const double sj = e.dot(se);
      if (!(sj > 0) || !(g.weights[j] > 0)) continue;
      valid.push_back(j);
      logw.push_back(std::log(g.weights[j]));
      m.push_back(e.dot(g.means[static_cast<std::size_t>(j)]));
      s.push_back(sj);
      gain.push_back(se / sj);
      mu.push_back(g.means[static_cast<std::size_t>(j)]);
      Eigen::MatrixXd th = sig - se * se.transpose() / sj;
      enforce_psd(th);
      theta.push_back(std::move(th));
    }
  }
  bool usable() const { return !valid.empty(); }
  int size() const { return static_cast<int>(valid.size()); }

  /// Conditional weights lambda_j at z.
  Eigen::VectorXd weights(double z) const {
    Eigen::VectorXd lw(size());
    for (int q = 0; q < size(); ++q) {
      const double r = z - m[static_cast<std::size_t>(q)];
      const double sq = s[static_cast<std::size_t>(q)];
      lw[q] = logw[static_cast<std::size_t>(q)] - 0.5 * (std::log(2 * std::numbers::pi * sq) + r * r / sq);
    }
    const double mx = lw.maxCoeff();
    Eigen::VectorXd w = (lw.array() - mx).exp();
    return w / w.sum();
  }
  Eigen::VectorXd mean(int q, double z) const {
    return mu[static_cast<std::size_t>(q)] + gain[static_cast<std::size_t>(q)] * (z - m[static_cast<std::size_t>(q)]);
  }
};

// Direct-method components for samples `idx`; each sample gets weight
// `per_sample` split by the conditional weights.
void add_direct_components(PlfResult& r, const Conditioner& cond, int cov_base, int point_cov,
                           const SegmentStats& stats, const std::vector<int>& idx, double per_sample) {
  for (int l : idx) {
    const int seg = stats.segment[static_cast<std::size_t>(l)];
    const double z = stats.z[l];
    if (!cond.usable()) {
      r.components.push_back({per_sample, seg, point_cov, stats.samples.row(l).transpose()});
      continue;
    }
    const Eigen::VectorXd lam = cond.weights(z);
    for (int q = 0; q < cond.size(); ++q) {
      r.components.push_back({per_sample * lam[q], seg, cov_base + q, cond.mean(q, z)});
    }
  }
}

}  // namespace

PlfResult direct_method(const SegmentedMap& map, const Gmm& w_gmm, const SegmentStats& stats) {
  w_gmm.validate();
  if (w_gmm.dim() != map.n_farms()) throw ValidationError("wind mixture dimension differs from the farm count");
  PlfResult r = result_shell(map, stats, w_gmm, Method::Direct);
  r.J = w_gmm.size();
  const Conditioner cond(w_gmm, map.direction);
  for (const auto& th : cond.theta) r.latent_covs.push_back(th);
  int point_cov = -1;
  if (!cond.usable()) {
    point_cov = static_cast<int>(r.latent_covs.size());
    r.latent_covs.push_back(Eigen::MatrixXd::Zero(map.n_farms(), map.n_farms()));
  }
  const int L = r.L;
  std::vector<int> idx(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) idx[static_cast<std::size_t>(l)] = l;
  r.components.reserve(static_cast<std::size_t>(L) * static_cast<std::size_t>(std::max(1, cond.size())));
  add_direct_components(r, cond, 0, point_cov, stats, idx, 1.0 / L);
  for (std::size_t s = 0; s < 3; ++s) r.segment_J[s] = stats.counts[s] > 0 ? r.J : 0;
  return r;
}

PlfResult indirect_method(const SegmentedMap& map, const Gmm& w_gmm, const SegmentStats& stats, int J,
                          std::uint64_t seed, int threads) {
  w_gmm.validate();
  if (J < 1) throw ValidationError("J must be at least 1");
  if (w_gmm.dim() != map.n_farms()) throw ValidationError("wind mixture dimension differs from the farm count");
  PlfResult r = result_shell(map, stats, w_gmm, Method::Indirect);
  r.J = J;
  const int L = r.L;
  const int k = map.n_farms();

  struct Part {
    std::vector<int> idx;
    enum class Kind { Empty, Em, Point, Direct } kind = Kind::Empty;
    Gmm fit;
    int J = 0;
  };
  std::array<Part, 3> parts;
  for (int l = 0; l < L; ++l) parts[static_cast<std::size_t>(stats.segment[static_cast<std::size_t>(l)])].idx.push_back(l);

  detail::parallel_for(3, resolve_threads(threads), [&](int s) {
    Part& p = parts[static_cast<std::size_t>(s)];
    const int n = static_cast<int>(p.idx.size());
    if (n == 0) return;
    Eigen::MatrixXd data(n, k);
    for (int i = 0; i < n; ++i) data.row(i) = stats.samples.row(p.idx[static_cast<std::size_t>(i)]);
    const Eigen::RowVectorXd first = data.row(0);
    if (((data.rowwise() - first).cwiseAbs().maxCoeff()) == 0.0) {
      p.kind = Part::Kind::Point;
      p.fit = Gmm::single(first.transpose(), Eigen::MatrixXd::Zero(k, k));
      p.J = 1;
      return;
    }
    const int Js = std::min(J, n / (k + 1));
    if (Js < 1) {
      p.kind = Part::Kind::Direct;
      return;
    }
    auto rng = stream_rng(seed, 0xe3, static_cast<std::uint64_t>(s));
    p.fit = em_fit(data, Js, rng());
    p.kind = Part::Kind::Em;
    p.J = Js;
  });

  std::optional<Conditioner> cond;
  for (std::size_t s = 0; s < 3; ++s) {
    Part& p = parts[s];
    const double ws = static_cast<double>(p.idx.size()) / L;
    r.segment_J[s] = p.J;
    switch (p.kind) {
      case Part::Kind::Empty:
        break;
      case Part::Kind::Point:
      case Part::Kind::Em:
        for (int j = 0; j < p.fit.size(); ++j) {
          r.components.push_back({ws * p.fit.weights[j], static_cast<int>(s), static_cast<int>(r.latent_covs.size()),
                                  p.fit.means[static_cast<std::size_t>(j)]});
          r.latent_covs.push_back(p.fit.covs[static_cast<std::size_t>(j)]);
        }
        break;
      case Part::Kind::Direct: {
        if (!cond) cond.emplace(w_gmm, map.direction);
        const int base = static_cast<int>(r.latent_covs.size());
        for (const auto& th : cond->theta) r.latent_covs.push_back(th);
        int point_cov = -1;
        if (!cond->usable()) {
          point_cov = static_cast<int>(r.latent_covs.size());
          r.latent_covs.push_back(Eigen::MatrixXd::Zero(k, k));
        }
        add_direct_components(r, *cond, base, point_cov, stats, p.idx, 1.0 / L);
        r.segment_J[s] = std::max(1, cond->size());
        break;
      }
    }
  }
  return r;
}

ScalarMixture PlfResult::marginal(int row) const {
  if (row < 0 || row >= n_outputs()) throw ValidationError("output row out of range");
  const auto C = static_cast<Eigen::Index>(components.size());
  ScalarMixture m;
  m.w.resize(C);
  m.mu.resize(C);
  m.var.resize(C);
  // Per (segment, covariance) variance is shared by many components.
  std::vector<std::array<double, 3>> var_cache(latent_covs.size(), {-1.0, -1.0, -1.0});
  for (Eigen::Index c = 0; c < C; ++c) {
    const LatentComponent& lc = components[static_cast<std::size_t>(c)];
    const auto s = static_cast<std::size_t>(lc.segment);
    const auto mrow = maps[s].row(row);
    m.w[c] = lc.weight;
    m.mu[c] = mrow.dot(lc.mean) + offsets[s][row];
    double& v = var_cache[static_cast<std::size_t>(lc.cov)][s];
    if (v < 0) v = std::max(0.0, mrow.dot(latent_covs[static_cast<std::size_t>(lc.cov)] * mrow.transpose()));
    m.var[c] = v;
  }
  return m;
}

Eigen::VectorXd PlfResult::mean() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_outputs());
  for (const auto& c : components) {
    const auto s = static_cast<std::size_t>(c.segment);
    out += c.weight * (maps[s] * c.mean + offsets[s]);
  }
  return out;
}

Eigen::VectorXd PlfResult::variance() const {
  Eigen::VectorXd out(n_outputs());
  for (int r = 0; r < n_outputs(); ++r) out[r] = marginal(r).variance();
  return out;
}

Gmm PlfResult::output_gmm(const std::vector<int>& rows) const {
  Gmm g;
  const auto C = static_cast<Eigen::Index>(components.size());
  g.weights.resize(C);
  std::array<Eigen::MatrixXd, 3> sub;
  std::array<Eigen::VectorXd, 3> off;
  for (std::size_t s = 0; s < 3; ++s) {
    sub[s].resize(static_cast<Eigen::Index>(rows.size()), maps[s].cols());
    off[s].resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= n_outputs()) throw ValidationError("output row out of range");
      sub[s].row(static_cast<Eigen::Index>(i)) = maps[s].row(rows[i]);
      off[s][static_cast<Eigen::Index>(i)] = offsets[s][rows[i]];
    }
  }
  for (Eigen::Index c = 0; c < C; ++c) {
    const LatentComponent& lc = components[static_cast<std::size_t>(c)];
    const auto s = static_cast<std::size_t>(lc.segment);
    g.weights[c] = lc.weight;
    g.means.push_back(sub[s] * lc.mean + off[s]);
    Eigen::MatrixXd cov = sub[s] * latent_covs[static_cast<std::size_t>(lc.cov)] * sub[s].transpose();
    g.covs.push_back(0.5 * (cov + cov.transpose()));
  }
  return g;
}

Gmm PlfResult::y_gmm() const {
  std::vector<int> rows(static_cast<std::size_t>(n_states));
  for (int i = 0; i < n_states; ++i) rows[static_cast<std::size_t>(i)] = i;
  return output_gmm(rows);
}

Gmm PlfResult::flow_gmm() const {
  std::vector<int> rows(static_cast<std::size_t>(n_flows));
  for (int i = 0; i < n_flows; ++i) rows[static_cast<std::size_t>(i)] = n_states + i;
  return output_gmm(rows);
}

void PlfResult::validate() const {
  if (components.empty()) throw ValidationError("result has no components");
  double tw = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0)) throw ValidationError("result has a negative component weight");
    if (c.segment < 0 || c.segment > 2) throw ValidationError("result component has a bad segment");
    if (c.cov < 0 || c.cov >= static_cast<int>(latent_covs.size())) throw ValidationError("result component has a bad covariance index");
    tw += c.weight;
  }
  if (std::abs(tw - 1.0) > 1e-9) throw ValidationError("result component weights do not sum to 1");
  const double tp = segment_probs[0] + segment_probs[1] + segment_probs[2];
  if (std::abs(tp - 1.0) > 1e-9) throw ValidationError("segment probabilities do not sum to 1");
  if (static_cast<int>(labels.size()) != n_outputs()) throw ValidationError("result labels do not match outputs");
  for (std::size_t s = 0; s < 3; ++s) {
    if (maps[s].rows() != n_outputs() || offsets[s].size() != n_outputs()) {
      throw ValidationError("result output map has wrong shape");
    }
  }
}

}  // namespace caplf
