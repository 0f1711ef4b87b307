#include "rare/estimate.hpp"

#include <cmath>
#include <stdexcept>

#include "rare/oracle.hpp"

namespace rare {

namespace {

bool episode(const EnvSpec& spec, InitialCondition x, const AgentParams& theta, const RandomStream& rng,
             std::int64_t t) {
  RandomStream z = rng.derive("episode", static_cast<std::uint64_t>(t));
  return run_episode(spec, x, theta, z).failed;
}

void check_budget(std::int64_t T) {
  if (T < 1) throw std::invalid_argument("estimator: budget T must be >= 1");
}

Eigen::ArrayXd powered_table(const Predictor& model, const EnvSpec& spec, const AgentParams& theta, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("avf estimator: alpha must be > 0");
  if (!model) throw std::invalid_argument("avf estimator: no model supplied");
  const Eigen::ArrayXd f = tabulate(model, spec, theta);
  if (!(f > 0.0).all() || !(f <= 1.0).all())
    throw std::invalid_argument("avf estimator: model output must lie in (0, 1]");
  return f.pow(alpha);
}

EstimateReport combined_from_table(const EnvSpec& spec, const AgentParams& theta, const Eigen::ArrayXd& f_alpha,
                                   std::int64_t T, RandomStream& rng, std::int64_t k_min, Normalization z) {
  check_budget(T);
  const std::int64_t vmc_budget = T / 2;
  EstimateReport vmc;
  if (vmc_budget > 0) {
    RandomStream vmc_rng = rng.derive("vmc");
    vmc = vmc_estimate(spec, theta, vmc_budget, vmc_rng);
  }
  RandomStream avf_rng = rng.derive("avf");
  EstimateReport avf = avf_is_estimate_table(spec, theta, f_alpha, T - vmc_budget, z, avf_rng);

  EstimateReport out = vmc.failures >= k_min ? vmc : avf;
  out.branch = vmc.failures >= k_min ? "vmc" : "avf";
  out.estimator = "combined";
  out.episodes = vmc.episodes + avf.episodes;
  out.failures = vmc.failures + avf.failures;
  out.rejected_proposals = avf.rejected_proposals;
  out.normalization = avf.normalization;
  out.seed = rng.key();
  out.warnings = avf.warnings;
  return out;
}

}  // namespace

nlohmann::ordered_json EstimateReport::to_json() const {
  nlohmann::ordered_json j;
  j["estimator"] = estimator;
  j["p_hat"] = p_hat;
  j["episodes"] = episodes;
  j["failures"] = failures;
  j["rejected_proposals"] = rejected_proposals;
  j["normalization"] = normalization ? nlohmann::ordered_json(*normalization) : nlohmann::ordered_json(nullptr);
  j["seed"] = seed;
  j["branch"] = branch;
  j["warnings"] = warnings;
  return j;
}

EstimateReport vmc_estimate(const EnvSpec& spec, const AgentParams& theta, std::int64_t T, RandomStream& rng) {
  check_budget(T);
  EstimateReport report;
  report.estimator = "vmc";
  report.seed = rng.key();
  for (std::int64_t t = 1; t <= T; ++t) {
    const InitialCondition x = sample_initial_condition(spec, rng);
    if (episode(spec, x, theta, rng, t)) ++report.failures;
  }
  report.episodes = T;
  report.p_hat = static_cast<double>(report.failures) / static_cast<double>(T);
  return report;
}

InitialCondition sample_proposal(const EnvSpec& spec, const Eigen::ArrayXd& f_alpha, RandomStream& rng,
                                 std::int64_t& rejected) {
  const auto M = static_cast<std::uint64_t>(spec.M);
  for (;;) {
    const auto idx = static_cast<Eigen::Index>(rng.below(M));
    const double accept = f_alpha(idx);
    if (accept >= 1.0 || rng.uniform() < accept) return spec.state(idx);
    ++rejected;
  }
}

EstimateReport avf_is_estimate_table(const EnvSpec& spec, const AgentParams& theta, const Eigen::ArrayXd& f_alpha,
                                     std::int64_t T, Normalization z, RandomStream& rng) {
  check_budget(T);
  if (f_alpha.size() != spec.M) throw std::invalid_argument("avf estimator: table does not match support");
  EstimateReport report;
  report.estimator = "avf";
  report.seed = rng.key();
  if (!(f_alpha.maxCoeff() > 0.0)) throw std::invalid_argument("avf estimator: f^alpha vanishes on the support");
  const auto M = static_cast<std::uint64_t>(spec.M);
  double weighted = 0.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const InitialCondition x = sample_proposal(spec, f_alpha, rng, report.rejected_proposals);
    if (episode(spec, x, theta, rng, t)) {
      ++report.failures;
      weighted += 1.0 / f_alpha(spec.index_of(x));
    }
  }
  report.episodes = T;

  const bool exact = z.mode == Normalization::Mode::Exact ||
                     (z.mode == Normalization::Mode::Auto && spec.M <= kExactNormalizationLimit);
  double Z;
  if (exact) {
    Z = expectation(support_density(spec), f_alpha);
  } else {
    const std::int64_t m = z.samples > 0 ? z.samples : 100 * T;
    if (m < T)
      report.warnings.push_back("normalization uses m=" + std::to_string(m) + " < T=" + std::to_string(T) +
                                " samples; Z_alpha will be noisy");
    RandomStream zr = rng.derive("normalization");
    double sum = 0.0;
    for (std::int64_t i = 0; i < m; ++i) sum += f_alpha(static_cast<Eigen::Index>(zr.below(M)));
    Z = sum / static_cast<double>(m);
  }
  report.normalization = Z;
  report.p_hat = Z * weighted / static_cast<double>(T);
  return report;
}

EstimateReport avf_is_estimate(const EnvSpec& spec, const AgentParams& theta, const Predictor& model, double alpha,
                               std::int64_t T, Normalization z, RandomStream& rng) {
  return avf_is_estimate_table(spec, theta, powered_table(model, spec, theta, alpha), T, z, rng);
}

EstimateReport combined_estimate(const EnvSpec& spec, const AgentParams& theta, const Predictor& model,
                                 double alpha, std::int64_t T, RandomStream& rng, std::int64_t k_min,
                                 Normalization z) {
  return combined_from_table(spec, theta, powered_table(model, spec, theta, alpha), T, rng, k_min, z);
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Vmc: return "vmc";
    case EstimatorKind::Avf: return "avf";
    case EstimatorKind::Combined: return "combined";
  }
  return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "vmc") return EstimatorKind::Vmc;
  if (name == "avf") return EstimatorKind::Avf;
  if (name == "combined") return EstimatorKind::Combined;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

PreparedEstimator::PreparedEstimator(const EstimatorConfig& config, const EnvSpec& spec, const AgentParams& theta)
    : config_(config), spec_(spec), theta_(theta) {
  if (config.kind != EstimatorKind::Vmc) f_alpha_ = powered_table(config.model, spec, theta, config.alpha);
}

EstimateReport PreparedEstimator::run(std::int64_t T, RandomStream& rng) const {
  EstimateReport r;
  switch (config_.kind) {
    case EstimatorKind::Vmc: r = vmc_estimate(spec_, theta_, T, rng); break;
    case EstimatorKind::Avf: r = avf_is_estimate_table(spec_, theta_, f_alpha_, T, config_.z, rng); break;
    case EstimatorKind::Combined:
      r = combined_from_table(spec_, theta_, f_alpha_, T, rng, config_.k_min, config_.z);
      break;
  }
  return r;
}

double miss_fraction(std::span<const double> estimates, double p_true, double rho) {
  if (estimates.empty()) return 0.0;
  std::int64_t misses = 0;
  for (double e : estimates)
    if (!(e > p_true / rho && e < p_true * rho)) ++misses;
  return static_cast<double>(misses) / static_cast<double>(estimates.size());
}

std::vector<ReliabilityCurve> reliability_curves(const EstimatorConfig& config, const EnvSpec& spec,
                                                 const AgentParams& theta, double p_true,
                                                 std::span<const double> rhos,
                                                 std::span<const std::int64_t> budgets, std::int64_t trials,
                                                 std::uint64_t seed, unsigned workers) {
  if (trials < 1) throw std::invalid_argument("reliability_curve: trials must be >= 1");
  for (double rho : rhos)
    if (!(rho > 1.0)) throw std::invalid_argument("reliability_curve: rho must be > 1");
  const PreparedEstimator estimator(config, spec, theta);
  const std::string label = config.label();
  std::vector<ReliabilityCurve> curves;
  for (double rho : rhos) {
    ReliabilityCurve c;
    c.estimator = label;
    c.rho = rho;
    c.trials = trials;
    if (trials < 30) c.warnings.push_back("fewer than 30 trials; error bars are unreliable");
    curves.push_back(std::move(c));
  }
  std::vector<double> estimates(static_cast<std::size_t>(trials));
  for (std::int64_t budget : budgets) {
    const std::string tag = "curve/" + label + "/" + std::to_string(budget);
    parallel_for(estimates.size(), workers, [&](std::size_t i) {
      RandomStream rng = RandomStream::keyed(seed, tag, i);
      estimates[i] = estimator.run(budget, rng).p_hat;
    });
    for (auto& c : curves) {
      const double m = miss_fraction(estimates, p_true, c.rho);
      c.budgets.push_back(budget);
      c.miss_fraction.push_back(m);
      c.std_error.push_back(std::sqrt(m * (1.0 - m) / static_cast<double>(trials)));
    }
  }
  return curves;
}

ReliabilityCurve reliability_curve(const EstimatorConfig& config, const EnvSpec& spec, const AgentParams& theta,
                                   double p_true, double rho, std::span<const std::int64_t> budgets,
                                   std::int64_t trials, std::uint64_t seed, unsigned workers) {
  const double rhos[] = {rho};
  return reliability_curves(config, spec, theta, p_true, rhos, budgets, trials, seed, workers).front();
}

CsvTable curves_csv(std::span<const ReliabilityCurve> curves) {
  CsvTable table;
  table.header = {"budget", "miss_fraction", "stderr", "rho", "estimator", "trials"};
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.budgets.size(); ++i)
      table.rows.push_back({c.budgets[i], c.miss_fraction[i], c.std_error[i], c.rho, c.estimator, c.trials});
  return table;
}

std::optional<std::int64_t> first_budget_below(const ReliabilityCurve& curve, double level) {
  for (std::size_t i = 0; i < curve.budgets.size(); ++i)
    if (curve.miss_fraction[i] <= level) return curve.budgets[i];
  return std::nullopt;
}

std::int64_t hoeffding_sample_size(double a, double eps, double delta) {
  if (!(a > 0.0) || !(eps > 0.0) || !(delta > 0.0 && delta <= 1.0))
    throw std::invalid_argument("hoeffding_sample_size: require a > 0, eps > 0, 0 < delta <= 1");
  const double n = a * a * std::log(1.0 / delta) / (2.0 * eps * eps);
  return static_cast<std::int64_t>(std::ceil(n - 1e-9 * n));
}

double miss_probability(double p, double N) {
  if (!(p >= 0.0 && p <= 1.0) || !(N >= 0.0))
    throw std::invalid_argument("miss_probability: require 0 <= p <= 1 and N >= 0");
  if (p == 0.0 || N == 0.0) return 1.0;
  if (p == 1.0) return 0.0;
  return std::exp(N * std::log1p(-p));
}

}  // namespace rare
