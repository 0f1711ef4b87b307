#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rare/avf.hpp"
#include "rare/env.hpp"
#include "rare/random.hpp"
#include "rare/trace.hpp"

namespace rare {

// Candidate-set sizes used for the driving and humanoid style presets.
inline constexpr std::int64_t kAvfCandidatesSmall = 1000;
inline constexpr std::int64_t kAvfCandidatesLarge = 10000;

struct SearchResult {
  bool found = false;
  std::int64_t episodes_used = 0;
  std::optional<InitialCondition> failing_condition;
  bool fallback_used = false;
};

/// Runs episodes from x ~ P_X until the first failure or until `budget` episodes.
SearchResult vmc_search(const EnvSpec& spec, const AgentParams& theta, std::int64_t budget, RandomStream& rng);

/// Each round draws n candidates from P_X, runs one episode from the one with the
/// highest score (ties broken uniformly with rng).
SearchResult avf_search(const EnvSpec& spec, const AgentParams& theta, const Predictor& model, std::int64_t n,
                        std::int64_t budget, RandomStream& rng);

/// Same as avf_search with the model already tabulated over the support.
SearchResult avf_search_table(const EnvSpec& spec, const AgentParams& theta, const Eigen::ArrayXd& scores,
                              std::int64_t n, std::int64_t budget, RandomStream& rng);

enum class ReplayOrder {
  LeastNoiseMostRecent,  // ascending sigma, then most recent first
  MostRecent,
};

/// Failing records of the trace in replay order.
std::vector<EpisodeRecord> replay_queue(const TrainingTrace& trace, ReplayOrder order);

/// Re-runs each historical failure once in replay order, then falls back to VMC
/// with the remaining budget.
SearchResult pr_search(const EnvSpec& spec, const AgentParams& theta, const TrainingTrace& trace,
                       std::int64_t budget, RandomStream& rng,
                       ReplayOrder order = ReplayOrder::LeastNoiseMostRecent);

/// Expected episodes to first failure for a per-episode failure probability;
/// +infinity when q_eps = 0.
double expected_search_cost(double per_episode_failure_probability);

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t successes = 0;
  std::int64_t runs = 0;
};

/// Mean episodes over successful searches.
CostEstimate empirical_search_cost(std::span<const SearchResult> results);

/// Exact per-episode failure probability of the argmax-of-n adversary on a
/// discrete support with uniform P_X.
double avf_adversary_failure_probability(const Eigen::ArrayXd& scores, const Eigen::ArrayXd& fstar,
                                         std::int64_t n);

struct AccelerationSummary {
  std::vector<double> per_seed;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

AccelerationSummary summarize_acceleration(std::vector<double> factors);

}  // namespace rare
