#include "caplf/gmm.hpp"

#include "caplf/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace caplf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_dims(const Gmm& g, Eigen::Index d, const char* what) {
  if (g.size() == 0) throw ValidationError(std::string(what) + ": empty mixture");
  if (g.dim() != d) throw ValidationError(std::string(what) + ": dimension mismatch");
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

void Gmm::validate() const {
  const auto J = weights.size();
  if (J == 0) throw ValidationError("mixture has no components");
  if (static_cast<Eigen::Index>(means.size()) != J || static_cast<Eigen::Index>(covs.size()) != J) {
    throw ValidationError("mixture weights, means and covariances differ in count");
  }
  if ((weights.array() < 0).any() || !weights.allFinite()) throw ValidationError("mixture weights must be non-negative");
  if (std::abs(weights.sum() - 1.0) > 1e-9) throw ValidationError("mixture weights do not sum to 1");
  const auto d = means.front().size();
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& m = means[static_cast<std::size_t>(j)];
    const auto& c = covs[static_cast<std::size_t>(j)];
    if (m.size() != d || c.rows() != d || c.cols() != d) throw ValidationError("mixture component has wrong shape");
    if (!m.allFinite() || !c.allFinite()) throw ValidationError("mixture component is not finite");
    if ((c - c.transpose()).lpNorm<Eigen::Infinity>() > 1e-9 * std::max(1.0, c.lpNorm<Eigen::Infinity>())) {
      throw ValidationError("mixture covariance is not symmetric");
    }
  }
}

Gmm Gmm::single(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Gmm g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = {mean};
  g.covs = {cov};
  return g;
}

void enforce_psd(Eigen::MatrixXd& m) {
  m = 0.5 * (m + m.transpose()).eval();
  if (m.rows() == 0 || m.rows() > 256) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
  const auto& ev = es.eigenvalues();
  const double lmin = ev.minCoeff();
  if (lmin >= 0) return;
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (-lmin > 1e-10 * scale) {
    std::ostringstream os;
    os << "covariance is not positive semidefinite (smallest eigenvalue " << lmin << ")";
    throw NumericalError(os.str());
  }
  m = es.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose()).eval();
}

EmReport em_fit_report(const Eigen::MatrixXd& data, int J, std::uint64_t seed, const EmOptions& opts) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (J < 1) throw ValidationError("number of mixture components must be positive");
  if (d < 1) throw ValidationError("data has no columns");
  if (!data.allFinite()) throw ValidationError("data contains non-finite values");
  if (n < static_cast<Eigen::Index>(J) * (d + 1)) {
    std::ostringstream os;
    os << "too few samples for EM: n=" << n << " < J(d+1)=" << J * (d + 1);
    throw ValidationError(os.str());
  }
  const Eigen::RowVectorXd gmean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - gmean;
  const double tr = centered.colwise().squaredNorm().sum() / static_cast<double>(n);
  if (!(tr > 0)) throw ValidationError("degenerate data: all samples are identical");
  const double reg = opts.reg_scale * tr / static_cast<double>(d);

  std::mt19937_64 rng(seed);

  // k-means++ seeding followed by a few Lloyd sweeps.
  Eigen::MatrixXd centers(J, d);
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = data.row(pick(rng));
    Eigen::VectorXd d2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < J; ++c) {
      const double total = d2.sum();
      Eigen::Index idx = 0;
      if (total > 0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (idx = 0; idx < n - 1; ++idx) {
          r -= d2[idx];
          if (r < 0) break;
        }
      } else {
        idx = pick(rng);
      }
      centers.row(c) = data.row(idx);
      d2 = d2.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
  }
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  for (int sweep = 0; sweep <= opts.kmeans_iterations; ++sweep) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (label[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      label[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (sweep > 0 && !changed) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(J, d);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(J);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(label[static_cast<std::size_t>(i)]) += data.row(i);
      cnt[label[static_cast<std::size_t>(i)]] += 1;
    }
    for (int c = 0; c < J; ++c)
      if (cnt[c] > 0) centers.row(c) = sum.row(c) / cnt[c];
  }

  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, J);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, label[static_cast<std::size_t>(i)]) = 1.0;

  EmReport rep;
  Gmm& g = rep.gmm;
  g.weights = Eigen::VectorXd::Constant(J, 1.0 / J);
  g.means.assign(static_cast<std::size_t>(J), gmean.transpose());
  g.covs.assign(static_cast<std::size_t>(J), centered.transpose() * centered / static_cast<double>(n) +
                                                 reg * Eigen::MatrixXd::Identity(d, d));

  auto m_step = [&] {
    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    for (int j = 0; j < J; ++j) {
      if (!(nk[j] > 1e-12 * static_cast<double>(n))) continue;
      const Eigen::VectorXd mu = data.transpose() * resp.col(j) / nk[j];
      const Eigen::MatrixXd diff = data.rowwise() - mu.transpose();
      Eigen::MatrixXd cov = diff.transpose() * resp.col(j).asDiagonal() * diff / nk[j];
      cov = 0.5 * (cov + cov.transpose()).eval();
      cov.diagonal().array() += reg;
      g.means[static_cast<std::size_t>(j)] = mu;
      g.covs[static_cast<std::size_t>(j)] = cov;
    }
    g.weights = nk / nk.sum();
  };
  m_step();

  Eigen::MatrixXd logp(n, J);
  for (int it = 0;; ++it) {
    for (int j = 0; j < J; ++j) {
      Eigen::LLT<Eigen::MatrixXd> llt(g.covs[static_cast<std::size_t>(j)]);
      if (llt.info() != Eigen::Success) throw NumericalError("EM covariance lost positive definiteness");
      const Eigen::MatrixXd diff = (data.rowwise() - g.means[static_cast<std::size_t>(j)].transpose()).transpose();
      const Eigen::MatrixXd z = llt.matrixL().solve(diff);
      const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      const double lw = g.weights[j] > 0 ? std::log(g.weights[j]) : -std::numeric_limits<double>::infinity();
      logp.col(j) = (-0.5 * (z.colwise().squaredNorm().array() + static_cast<double>(d) * kLog2Pi + logdet) + lw)
                        .transpose();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = logsumexp(logp.row(i).transpose());
      ll += lse;
      resp.row(i) = (logp.row(i).array() - lse).exp();
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericalError("EM log-likelihood is not finite");
    rep.log_likelihood.push_back(ll);
    rep.iterations = it;
    if (it > 0) {
      const double prev = rep.log_likelihood[rep.log_likelihood.size() - 2];
      if (std::abs(ll - prev) <= opts.rel_tolerance * std::max(std::abs(prev), 1e-300)) {
        rep.converged = true;
        break;
      }
    }
    if (it >= opts.max_iterations) break;
    m_step();
  }
  return rep;
}

Gmm em_fit(const Eigen::MatrixXd& data, int J, std::uint64_t seed, const EmOptions& opts) {
  return em_fit_report(data, J, seed, opts).gmm;
}

GmmSampler::GmmSampler(const Gmm& g) : dim_(g.dim()) {
  g.validate();
  double acc = 0.0;
  for (int j = 0; j < g.size(); ++j) {
    cum_.push_back(acc += g.weights[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.covs[static_cast<std::size_t>(j)]);
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    means_.push_back(g.means[static_cast<std::size_t>(j)]);
    factors_.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  }
}

Eigen::VectorXd GmmSampler::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, cum_.back());
  std::normal_distribution<double> nd;
  const double x = u(rng);
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), x);
  const auto j = std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), cum_.size() - 1);
  Eigen::VectorXd e(dim_);
  for (int k = 0; k < dim_; ++k) e[k] = nd(rng);
  return means_[j] + factors_[j] * e;
}

Eigen::MatrixXd sample(const Gmm& g, int n, std::uint64_t seed) {
  if (n < 0) throw ValidationError("sample count must be non-negative");
  const GmmSampler s(g);
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(n, g.dim());
  for (int r = 0; r < n; ++r) out.row(r) = s.draw(rng).transpose();
  return out;
}

Gmm affine_map(const Gmm& g, const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  check_dims(g, A.cols(), "affine_map");
  if (A.rows() != b.size()) throw ValidationError("affine_map: A and b disagree in rows");
  Gmm out;
  out.weights = g.weights;
  out.means.reserve(g.means.size());
  out.covs.reserve(g.covs.size());
  for (int j = 0; j < g.size(); ++j) {
    out.means.push_back(A * g.means[static_cast<std::size_t>(j)] + b);
    Eigen::MatrixXd c = A * g.covs[static_cast<std::size_t>(j)] * A.transpose();
    enforce_psd(c);
    out.covs.push_back(std::move(c));
  }
  return out;
}

Gmm augment(const Gmm& g, const Eigen::VectorXd& eps) {
  check_dims(g, eps.size(), "augment");
  const auto d = eps.size();
  Eigen::MatrixXd phi(d + 1, d);
  phi << Eigen::MatrixXd::Identity(d, d), eps.transpose();
  return affine_map(g, phi, Eigen::VectorXd::Zero(d + 1));
}

Gmm condition_on_sum(const Gmm& g, const Eigen::VectorXd& eps, double z) {
  check_dims(g, eps.size(), "condition_on_sum");
  Gmm out;
  std::vector<double> logw;
  for (int j = 0; j < g.size(); ++j) {
    const auto& mu = g.means[static_cast<std::size_t>(j)];
    const auto& sig = g.covs[static_cast<std::size_t>(j)];
    const Eigen::VectorXd se = sig * eps;
    const double s = eps.dot(se);
    if (!(s > 0) || !(g.weights[j] > 0)) continue;
    const double r = z - eps.dot(mu);
    logw.push_back(std::log(g.weights[j]) - 0.5 * (kLog2Pi + std::log(s) + r * r / s));
    out.means.push_back(mu + se * (r / s));
    Eigen::MatrixXd c = sig - se * se.transpose() / s;
    enforce_psd(c);
    out.covs.push_back(std::move(c));
  }
  if (logw.empty()) throw NumericalError("every mixture component is degenerate along the conditioning direction");
  Eigen::VectorXd lw = Eigen::Map<Eigen::VectorXd>(logw.data(), static_cast<Eigen::Index>(logw.size()));
  out.weights = (lw.array() - logsumexp(lw)).exp();
  out.weights /= out.weights.sum();
  return out;
}

Moments moments(const Gmm& g) {
  g.validate();
  const int d = g.dim();
  Moments m;
  m.mean = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < g.size(); ++j) m.mean += g.weights[j] * g.means[static_cast<std::size_t>(j)];
  m.cov = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < g.size(); ++j) {
    const Eigen::VectorXd dm = g.means[static_cast<std::size_t>(j)] - m.mean;
    m.cov += g.weights[j] * (g.covs[static_cast<std::size_t>(j)] + dm * dm.transpose());
  }
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  return m;
}

double ScalarMixture::cdf(double t) const {
  if (std::isnan(t)) return t;
  double p = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (var[j] > 0) {
      p += w[j] * normal_cdf((t - mu[j]) / std::sqrt(var[j]));
    } else if (t >= mu[j]) {
      p += w[j];
    }
  }
  return std::clamp(p, 0.0, 1.0);
}

double ScalarMixture::mean() const { return w.dot(mu); }

double ScalarMixture::variance() const {
  const double m = mean();
  return std::max(0.0, (w.array() * (var.array() + (mu.array() - m).square())).sum());
}

ScalarMixture marginal(const Gmm& g, int k) {
  if (k < 0 || k >= g.dim()) throw ValidationError("marginal index out of range");
  ScalarMixture s;
  s.w = g.weights;
  s.mu.resize(g.size());
  s.var.resize(g.size());
  for (int j = 0; j < g.size(); ++j) {
    s.mu[j] = g.means[static_cast<std::size_t>(j)][k];
    s.var[j] = std::max(0.0, g.covs[static_cast<std::size_t>(j)](k, k));
  }
  return s;
}

double marginal_cdf(const Gmm& g, int k, double t) { return marginal(g, k).cdf(t); }

double log_density(const Gmm& g, const Eigen::VectorXd& x) {
  check_dims(g, x.size(), "log_density");
  const auto d = static_cast<double>(x.size());
  Eigen::VectorXd lp(g.size());
  for (int j = 0; j < g.size(); ++j) {
    Eigen::LLT<Eigen::MatrixXd> llt(g.covs[static_cast<std::size_t>(j)]);
    if (llt.info() != Eigen::Success) throw NumericalError("log_density needs non-singular covariances");
    const Eigen::VectorXd zz = llt.matrixL().solve(x - g.means[static_cast<std::size_t>(j)]);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    lp[j] = std::log(g.weights[j]) - 0.5 * (zz.squaredNorm() + d * kLog2Pi + logdet);
  }
  return logsumexp(lp);
}

Gmm merge(const std::vector<std::pair<double, Gmm>>& parts) {
  if (parts.empty()) throw ValidationError("merge: no parts");
  double total = 0.0;
  int count = 0;
  const int d = parts.front().second.dim();
  for (const auto& [w, g] : parts) {
    if (!(w >= 0)) throw ValidationError("merge: negative part weight");
    if (g.dim() != d) throw ValidationError("merge: parts differ in dimension");
    total += w;
    count += g.size();
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("merge: part weights do not sum to 1");
  Gmm out;
  out.weights.resize(count);
  out.means.reserve(static_cast<std::size_t>(count));
  out.covs.reserve(static_cast<std::size_t>(count));
  int k = 0;
  for (const auto& [w, g] : parts) {
    for (int j = 0; j < g.size(); ++j) {
      out.weights[k++] = w * g.weights[j];
      out.means.push_back(g.means[static_cast<std::size_t>(j)]);
      out.covs.push_back(g.covs[static_cast<std::size_t>(j)]);
    }
  }
  out.weights /= out.weights.sum();
  return out;
}

}  // namespace caplf
