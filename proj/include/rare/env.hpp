#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rare/random.hpp"

namespace rare {

inline constexpr double kSigmaMax = 0.4;

enum class EnvKind { AnalyticBernoulli, CliffWalk };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

/// Start state of an episode. AnalyticBernoulli uses {0..M-1}, CliffWalk {1..M}.
struct InitialCondition {
  std::int64_t value = 0;
  friend bool operator==(const InitialCondition&, const InitialCondition&) = default;
};

/// One member of the agent family: training progress u and exploration noise sigma.
struct AgentParams {
  double u = 1.0;
  double sigma = 0.0;
  friend bool operator==(const AgentParams&, const AgentParams&) = default;
};

struct EpisodeOutcome {
  bool failed = false;
  std::int64_t steps = 1;
};

struct EnvSpec {
  EnvKind kind = EnvKind::AnalyticBernoulli;
  std::int64_t M = 16;
  // AnalyticBernoulli: f*(x, theta) = min(1, s * gamma^x * (exp(-beta u) + c_noise sigma))
  double s = 1.0;
  double gamma = 0.5;
  double beta = 8.0;
  double c_noise = 0.5;
  // CliffWalk: down-step probability q = q_min + (q_max - q_min) exp(-beta u)
  std::int64_t horizon = 64;
  double q_min = 0.05;
  double q_max = 0.45;

  static EnvSpec analytic_bernoulli(std::int64_t M = 16);
  static EnvSpec cliff_walk(std::int64_t M = 12);

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  [[nodiscard]] std::int64_t support_min() const noexcept {
    return kind == EnvKind::AnalyticBernoulli ? 0 : 1;
  }
  [[nodiscard]] std::int64_t support_size() const noexcept { return M; }
  [[nodiscard]] bool in_support(InitialCondition x) const noexcept {
    return x.value >= support_min() && x.value < support_min() + M;
  }
  [[nodiscard]] InitialCondition state(std::int64_t index) const noexcept {
    return {support_min() + index};
  }
  [[nodiscard]] std::int64_t index_of(InitialCondition x) const noexcept {
    return x.value - support_min();
  }
  /// Uniform P_X density.
  [[nodiscard]] double density(InitialCondition) const noexcept { return 1.0 / static_cast<double>(M); }

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

void validate_agent(const AgentParams& theta);

/// CliffWalk per-step probability of moving toward the cliff.
double cliff_down_probability(const EnvSpec& spec, const AgentParams& theta);

InitialCondition sample_initial_condition(const EnvSpec& spec, RandomStream& rng);

/// Runs one episode. Environment randomness is drawn from `rng` only.
EpisodeOutcome run_episode(const EnvSpec& spec, InitialCondition x, const AgentParams& theta,
                           RandomStream& rng);

/// Exact f*(x, theta).
double true_failure_prob(const EnvSpec& spec, InitialCondition x, const AgentParams& theta);

/// f*(., theta) over the whole support, indexed by support position.
Eigen::ArrayXd true_failure_table(const EnvSpec& spec, const AgentParams& theta);

/// Absorption probabilities for every start position 0..M within `horizon` steps
/// (index 0 is the cliff itself), by dynamic programming over steps remaining.
std::vector<double> cliff_absorption(std::int64_t M, std::int64_t horizon, double q);

}  // namespace rare
