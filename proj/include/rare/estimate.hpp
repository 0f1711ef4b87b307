#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rare/avf.hpp"
#include "rare/env.hpp"
#include "rare/io.hpp"
#include "rare/random.hpp"

namespace rare {

inline constexpr std::int64_t kExactNormalizationLimit = 1'000'000;

struct EstimateReport {
  std::string estimator;  // "vmc", "avf" or "combined"
  double p_hat = 0.0;
  std::int64_t episodes = 0;
  std::int64_t failures = 0;
  std::int64_t rejected_proposals = 0;
  std::optional<double> normalization;  // Z_alpha, AVF only
  std::uint64_t seed = 0;               // key of the stream the run consumed
  std::string branch;                   // combined only: which half was reported
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// How Z_alpha = P_X(f^alpha) is obtained.
struct Normalization {
  enum class Mode { Auto, Exact, Sampled };
  Mode mode = Mode::Auto;
  std::int64_t samples = 0;  // m; 0 selects 100 * T

  static Normalization exact() { return {Mode::Exact, 0}; }
  static Normalization sampled(std::int64_t m = 0) { return {Mode::Sampled, m}; }
};

/// p_hat = (1/T) sum C_t over x_t ~ P_X.
EstimateReport vmc_estimate(const EnvSpec& spec, const AgentParams& theta, std::int64_t T, RandomStream& rng);

/// AVF-guided importance sampling. Proposals x ~ P_X are accepted with
/// probability f^alpha(x); each accepted x costs one episode and contributes
/// C / f^alpha(x). Returns p_hat = Z_alpha * S / T. Rejections cost no episodes.
EstimateReport avf_is_estimate(const EnvSpec& spec, const AgentParams& theta, const Predictor& model, double alpha,
                               std::int64_t T, Normalization z, RandomStream& rng);

/// One draw from Q_f: proposals x ~ P_X are accepted with probability
/// f_alpha(x). Rejections are added to `rejected`.
InitialCondition sample_proposal(const EnvSpec& spec, const Eigen::ArrayXd& f_alpha, RandomStream& rng,
                                 std::int64_t& rejected);

/// Same estimator for a tabulated f^alpha over the support.
EstimateReport avf_is_estimate_table(const EnvSpec& spec, const AgentParams& theta, const Eigen::ArrayXd& f_alpha,
                                     std::int64_t T, Normalization z, RandomStream& rng);

/// Runs VMC on floor(T/2) episodes and AVF on the rest; reports VMC when it saw
/// at least k_min failures, AVF otherwise.
EstimateReport combined_estimate(const EnvSpec& spec, const AgentParams& theta, const Predictor& model,
                                 double alpha, std::int64_t T, RandomStream& rng, std::int64_t k_min = 5,
                                 Normalization z = {});

enum class EstimatorKind { Vmc, Avf, Combined };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Vmc;
  Predictor model;  // Avf and Combined
  double alpha = 0.5;
  Normalization z;
  std::int64_t k_min = 5;
  std::string name;  // label in reports; defaults to the kind

  [[nodiscard]] std::string label() const { return name.empty() ? to_string(kind) : name; }
};

/// Estimator bound to one (environment, agent) pair, with the model tabulated
/// once so repeated trials share it.
class PreparedEstimator {
 public:
  PreparedEstimator(const EstimatorConfig& config, const EnvSpec& spec, const AgentParams& theta);
  EstimateReport run(std::int64_t T, RandomStream& rng) const;
  [[nodiscard]] const EstimatorConfig& config() const noexcept { return config_; }

 private:
  EstimatorConfig config_;
  EnvSpec spec_;
  AgentParams theta_;
  Eigen::ArrayXd f_alpha_;
};

struct ReliabilityCurve {
  std::string estimator;
  double rho = 3.0;
  std::int64_t trials = 0;
  std::vector<std::int64_t> budgets;
  std::vector<double> miss_fraction;
  std::vector<double> std_error;
  std::vector<std::string> warnings;
};

/// Fraction of estimates outside the open interval (p/rho, p*rho).
double miss_fraction(std::span<const double> estimates, double p_true, double rho);

/// One curve per rho from a shared set of trials. Trial i at budget b runs on
/// RandomStream::keyed(seed, "curve/<label>/<b>", i), independent of `workers`.
std::vector<ReliabilityCurve> reliability_curves(const EstimatorConfig& config, const EnvSpec& spec,
                                                 const AgentParams& theta, double p_true,
                                                 std::span<const double> rhos,
                                                 std::span<const std::int64_t> budgets, std::int64_t trials,
                                                 std::uint64_t seed, unsigned workers = 1);

ReliabilityCurve reliability_curve(const EstimatorConfig& config, const EnvSpec& spec, const AgentParams& theta,
                                   double p_true, double rho, std::span<const std::int64_t> budgets,
                                   std::int64_t trials, std::uint64_t seed, unsigned workers = 1);

/// Rows: budget, miss_fraction, stderr, rho, estimator, trials.
CsvTable curves_csv(std::span<const ReliabilityCurve> curves);

/// Smallest budget whose miss fraction is at most `level`; nullopt if none.
std::optional<std::int64_t> first_budget_below(const ReliabilityCurve& curve, double level);

/// ceil(a^2 ln(1/delta) / (2 eps^2)): test-set size for an additive eps error
/// with confidence 1 - delta on a loss bounded by a.
std::int64_t hoeffding_sample_size(double a, double eps, double delta);

/// (1 - p)^N, the chance of N episodes without a failure.
double miss_probability(double p, double N);

}  // namespace rare
