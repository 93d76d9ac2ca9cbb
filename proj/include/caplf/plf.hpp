#pragma once

#include "caplf/acpf.hpp"
#include "caplf/control.hpp"
#include "caplf/dlpf.hpp"
#include "caplf/gmm.hpp"
#include "caplf/netcase.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace caplf {

/// Everything the pipeline needs about one network: the validated case, its
/// regulation parameters, the DLPF model, the uncorrected piecewise model,
/// the affine flow map and the farm-to-injection map T. Random inputs live
/// in farm space w (one coordinate per wind farm) and reach the injection
/// vector as X = T w.
struct PlfContext {
  NetworkCase net;
  ControlParams params;
  std::shared_ptr<const LinearPfModel> lin;
  PiecewiseLinearModel model;
  FlowMap flows;
  Eigen::MatrixXd T;
  InjectionSet base;
  Eigen::VectorXd farm_direction;  // T^T eps: eps^T X = farm_direction . w

  int n_states() const { return net.N() + net.M(); }
  int n_flows() const { return static_cast<int>(net.branches.size()); }
  int n_farms() const { return static_cast<int>(T.cols()); }

  /// Regulated injections for farm outputs w under the exceed policy.
  InjectionSet regulated_injections(const Eigen::VectorXd& w) const;
  /// Segment that w is mapped with (policy applied).
  int segment_for(const Eigen::VectorXd& w) const;
};

PlfContext make_context(NetworkCase net, const ControlSettings& settings);

/// Engine for stream (seed, a, b, c). Identical tuples give identical streams.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// ---------------------------------------------------------------- correction

enum class CorrectionMode { None, Constant, Polynomial };
const char* correction_name(CorrectionMode m);
CorrectionMode parse_correction(const std::string& s);

/// Per-segment row corrections Y_AC ~ rho .* Y_DLPF + varsigma, for the
/// states and separately for the branch flows.
struct CorrectionCoeffs {
  CorrectionMode mode = CorrectionMode::None;
  int H = 0;
  std::array<Eigen::VectorXd, 3> rho, varsigma;
  std::array<Eigen::VectorXd, 3> rho_flow, varsigma_flow;
  std::array<int, 3> samples{0, 0, 0};     // fitting points actually used
  std::array<int, 3> constant_rows{0, 0, 0};  // states fitted with slope 1
  int ac_failures = 0;

  static CorrectionCoeffs identity(int n_states, int n_flows);
};

struct OracleResult {
  Eigen::VectorXd y;      // [theta_S; V_L]
  Eigen::VectorXd flows;  // P_from per branch
};
using Oracle = std::function<OracleResult(const InjectionSet&)>;

/// AC Newton-Raphson oracle; optional warm start.
Oracle ac_oracle(const PlfContext& ctx, std::optional<StateVector> warm = std::nullopt);
/// Exact DLPF with the linear flow map (used for self-fit checks).
Oracle dlpf_oracle(const PlfContext& ctx);

/// `count` farm-space samples whose aggregate falls in segment `seg`, by
/// rejection from `w_gmm`; falls back to conditioning on aggregates spread
/// over the segment when rejection is too slow. Empty when the segment has
/// no reachable mass.
Eigen::MatrixXd draw_segment_samples(const PlfContext& ctx, const Gmm& w_gmm, int seg, int count, std::uint64_t seed);

/// Uncorrected DLPF states and flows at farm outputs w under segment seg.
OracleResult dlpf_prediction(const PlfContext& ctx, int seg, const Eigen::VectorXd& w);

CorrectionCoeffs fit_correction(const PlfContext& ctx, const Gmm& w_gmm, int H, CorrectionMode mode, std::uint64_t seed,
                                const Oracle& oracle);

/// Fits rows of `target` ~ rho .* `pred` + varsigma over columns (points).
void fit_rows(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, CorrectionMode mode, Eigen::VectorXd& rho,
              Eigen::VectorXd& varsigma, int* constant_rows = nullptr);

PiecewiseLinearModel apply_correction(const PiecewiseLinearModel& model, const CorrectionCoeffs& coeffs);

// ---------------------------------------------------------------- sampling

/// Piecewise affine map in farm space: y = maps[s] w + offsets[s], where s
/// is the regulation segment of the aggregate z = direction . w. Output rows
/// are the N+M states followed by the branch P_from flows.
struct SegmentedMap {
  Eigen::VectorXd direction;
  double c_offset = 0.0;
  std::array<double, 4> delta{};
  ExceedPolicy exceed_policy = ExceedPolicy::Error;
  std::array<Eigen::MatrixXd, 3> maps;
  std::array<Eigen::VectorXd, 3> offsets;
  int n_states = 0;
  int n_flows = 0;
  std::vector<std::string> labels;

  int n_farms() const { return static_cast<int>(direction.size()); }
  int n_outputs() const { return n_states + n_flows; }
  Regime classify(double z) const;
  /// Segment used for regime r; Exceeded goes to the secondary segment.
  static int segment(Regime r);
  /// Outputs for each row of W (farm samples).
  Eigen::MatrixXd push(const Eigen::MatrixXd& W) const;
};

/// Output maps of `model` with flow rows corrected by `coeffs`.
SegmentedMap segmented_map(const PlfContext& ctx, const PiecewiseLinearModel& model, const CorrectionCoeffs& coeffs);

struct SegmentStats {
  Eigen::MatrixXd samples;  // L x n_farms
  Eigen::VectorXd z;        // aggregate wind per sample
  std::vector<Regime> regimes;
  std::vector<int> segment;  // mapped segment per sample
  std::array<int, 3> counts{0, 0, 0};
  std::array<double, 3> probs{0, 0, 0};
  int exceeded = 0;
};

/// Samples L farm vectors, classifies them and applies the exceed policy:
/// `error` aborts when more than 1e-4 of the mass is beyond P_delta_max and
/// otherwise folds those samples into the secondary segment, as `clamp` does.
SegmentStats segment_stats(const SegmentedMap& map, const Gmm& w_gmm, int L, std::uint64_t seed);

// ---------------------------------------------------------------- results

enum class Method { Direct, Indirect };
const char* method_name(Method m);
Method parse_method(const std::string& s);

/// One mixture component in farm space; `cov` indexes PlfResult::latent_covs.
struct LatentComponent {
  double weight = 0.0;
  int segment = 0;
  int cov = 0;
  Eigen::VectorXd mean;
};

/// P(Y) and the flow distribution, kept in factored form: every component
/// is a Gaussian in farm space pushed through the output map of its segment.
struct PlfResult {
  Method method = Method::Direct;
  int L = 0;
  int J = 0;
  int n_states = 0;
  int n_flows = 0;
  std::vector<std::string> labels;
  std::array<Eigen::MatrixXd, 3> maps;
  std::array<Eigen::VectorXd, 3> offsets;
  std::vector<Eigen::MatrixXd> latent_covs;
  std::vector<LatentComponent> components;
  std::array<double, 3> segment_probs{0, 0, 0};
  std::array<int, 3> segment_counts{0, 0, 0};
  std::array<int, 3> segment_J{0, 0, 0};
  int exceeded = 0;
  CorrectionCoeffs correction;
  Gmm wind_gmm;
  std::map<std::string, std::string> info;  // case id, seeds and settings

  int n_outputs() const { return n_states + n_flows; }

  /// Dense mixture over a subset of output rows.
  Gmm output_gmm(const std::vector<int>& rows) const;
  Gmm y_gmm() const;
  Gmm flow_gmm() const;

  ScalarMixture marginal(int row) const;
  Eigen::VectorXd mean() const;
  Eigen::VectorXd variance() const;

  void validate() const;
};

std::vector<std::string> output_labels(const NetworkCase& net);

PlfResult direct_method(const SegmentedMap& map, const Gmm& w_gmm, const SegmentStats& stats);

PlfResult indirect_method(const SegmentedMap& map, const Gmm& w_gmm, const SegmentStats& stats, int J,
                          std::uint64_t seed, int threads = 0);

struct PlfOptions {
  Method method = Method::Indirect;
  int L = 0;  // 0: 2000 for Direct, 10000 for Indirect
  int J = 5;
  int H = 12;
  CorrectionMode correction = CorrectionMode::Polynomial;
  std::uint64_t seed_gmm = 1;
  std::uint64_t seed_sampling = 2;
  std::uint64_t seed_correction = 3;
  int threads = 0;

  int effective_L() const { return L > 0 ? L : (method == Method::Direct ? 2000 : 10000); }
};

/// Fits the farm-space input mixture from history (rows = snapshots). A
/// history whose rows are all identical gives a point mass.
Gmm fit_wind_gmm(const Eigen::MatrixXd& history, int J, std::uint64_t seed);

struct PlfTimings {
  double gmm = 0, correction = 0, sampling = 0, mapping = 0, total = 0;
};

/// Input mixture fit, correction, sampling and mapping. Errors are wrapped
/// in StageError naming the stage.
PlfResult run_algorithm1(const PlfContext& ctx, const Eigen::MatrixXd& wind_history, const PlfOptions& opts,
                         PlfTimings* timings = nullptr);

/// Same pipeline starting from an already fitted farm-space mixture.
PlfResult run_algorithm1_gmm(const PlfContext& ctx, const Gmm& w_gmm, const PlfOptions& opts,
                             PlfTimings* timings = nullptr, const Oracle* oracle = nullptr);

// ---------------------------------------------------------------- benchmark

struct Benchmark {
  Eigen::MatrixXd states;  // n x (N+M)
  Eigen::MatrixXd flows;   // n x n_branch
  int failures = 0;        // non-converged draws that were replaced
  int exceeded = 0;
  double seconds = 0.0;
};

/// AC Monte Carlo: w ~ w_gmm, regulation by regime, Newton-Raphson solve.
/// Sample i uses stream (seed, i, attempt), so results do not depend on
/// the thread count.
Benchmark acmc_benchmark(const PlfContext& ctx, const Gmm& w_gmm, int n, std::uint64_t seed, int threads = 0);

struct GroupMetrics {
  double cdf_rmse = 0.0;
  double mean_rel_error = 0.0;
  double var_rel_error = 0.0;
  int included = 0;
  int skipped = 0;
};

struct Metrics {
  GroupMetrics angle, voltage, flow;
  Eigen::VectorXd rmse;  // per output row, NaN when skipped
  Eigen::VectorXd mean_rel;
  Eigen::VectorXd var_rel;
};

constexpr int kCdfGrid = 1000;
constexpr double kVarianceFloor = 1e-8;

/// RMSE between an analytic marginal CDF and the empirical CDF of `samples`,
/// at the empirical quantiles of probability levels (k + 0.5) / grid.
double cdf_rmse(const ScalarMixture& m, const Eigen::VectorXd& samples, int grid = kCdfGrid);

Metrics metrics_cdf_rmse(const PlfResult& result, const Benchmark& bench, int threads = 0);
/// Moment part only; leaves the RMSE fields at zero.
Metrics metrics_moments(const PlfResult& result, const Benchmark& bench);

// ---------------------------------------------------------------- json

std::string result_to_json(const PlfResult& r);
PlfResult result_from_json(const std::string& text);
std::string gmm_to_json(const Gmm& g);
Gmm gmm_from_json(const std::string& text);

int resolve_threads(int threads);

}  // namespace caplf
