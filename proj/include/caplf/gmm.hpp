#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace caplf {

/// Finite Gaussian mixture. Covariances may be singular (PSD).
struct Gmm {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;

  int size() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  /// Throws ValidationError unless weights form a simplex and every
  /// covariance is symmetric with matching shape.
  void validate() const;

  static Gmm single(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
};

/// Symmetrises `m` and, for d <= 256, clips slightly negative eigenvalues.
/// Throws NumericalError when an eigenvalue is clearly negative.
void enforce_psd(Eigen::MatrixXd& m);

struct EmOptions {
  int max_iterations = 500;
  double rel_tolerance = 1e-6;
  double reg_scale = 1e-8;  // times trace(S)/d added to each covariance
  int kmeans_iterations = 20;
};

struct EmReport {
  Gmm gmm;
  std::vector<double> log_likelihood;  // per data point, one entry per E-step
  int iterations = 0;
  bool converged = false;
};

EmReport em_fit_report(const Eigen::MatrixXd& data, int J, std::uint64_t seed, const EmOptions& opts = {});
Gmm em_fit(const Eigen::MatrixXd& data, int J, std::uint64_t seed, const EmOptions& opts = {});

/// Draws from a mixture with a caller-owned engine. Covariance factors come
/// from an eigen decomposition, so singular covariances are fine.
class GmmSampler {
 public:
  explicit GmmSampler(const Gmm& g);
  Eigen::VectorXd draw(std::mt19937_64& rng) const;
  int dim() const { return dim_; }

 private:
  int dim_ = 0;
  std::vector<double> cum_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> factors_;
};

/// n x d matrix of draws. Deterministic under seed.
Eigen::MatrixXd sample(const Gmm& g, int n, std::uint64_t seed);

Gmm affine_map(const Gmm& g, const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

/// Mixture over [x; eps^T x].
Gmm augment(const Gmm& g, const Eigen::VectorXd& eps);

/// Mixture of x given eps^T x = z. Components with eps^T Sigma eps == 0 are dropped.
Gmm condition_on_sum(const Gmm& g, const Eigen::VectorXd& eps, double z);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
Moments moments(const Gmm& g);

/// One-dimensional mixture; zero variances behave as point masses.
struct ScalarMixture {
  Eigen::VectorXd w;
  Eigen::VectorXd mu;
  Eigen::VectorXd var;

  double cdf(double t) const;
  double mean() const;
  double variance() const;
};

ScalarMixture marginal(const Gmm& g, int k);
double marginal_cdf(const Gmm& g, int k, double t);

/// Log density at x; requires non-singular covariances.
double log_density(const Gmm& g, const Eigen::VectorXd& x);

Gmm merge(const std::vector<std::pair<double, Gmm>>& parts);

double normal_cdf(double x);

}  // namespace caplf
