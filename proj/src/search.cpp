#include "rare/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rare {

namespace {

void check_budget(std::int64_t budget) {
  if (budget < 1) throw std::invalid_argument("search: budget must be >= 1");
}

bool episode(const EnvSpec& spec, InitialCondition x, const AgentParams& theta, RandomStream& rng,
             std::int64_t index) {
  RandomStream z = rng.derive("episode", static_cast<std::uint64_t>(index));
  return run_episode(spec, x, theta, z).failed;
}

}  // namespace

SearchResult vmc_search(const EnvSpec& spec, const AgentParams& theta, std::int64_t budget, RandomStream& rng) {
  check_budget(budget);
  SearchResult result;
  while (result.episodes_used < budget) {
    const InitialCondition x = sample_initial_condition(spec, rng);
    ++result.episodes_used;
    if (episode(spec, x, theta, rng, static_cast<std::uint64_t>(result.episodes_used))) {
      result.found = true;
      result.failing_condition = x;
      break;
    }
  }
  return result;
}

SearchResult avf_search_table(const EnvSpec& spec, const AgentParams& theta, const Eigen::ArrayXd& scores,
                              std::int64_t n, std::int64_t budget, RandomStream& rng) {
  check_budget(budget);
  if (n < 1) throw std::invalid_argument("avf_search: n must be >= 1");
  if (scores.size() != spec.M) throw std::invalid_argument("avf_search: score table does not match support");
  const auto M = static_cast<std::uint64_t>(spec.M);
  SearchResult result;
  while (result.episodes_used < budget) {
    std::int64_t best = static_cast<std::int64_t>(rng.below(M));
    double best_score = scores(best);
    std::uint64_t ties = 1;
    for (std::int64_t j = 1; j < n; ++j) {
      const auto cand = static_cast<std::int64_t>(rng.below(M));
      const double s = scores(cand);
      if (s > best_score) {
        best = cand;
        best_score = s;
        ties = 1;
      } else if (s == best_score) {
        ++ties;
        if (rng.below(ties) == 0) best = cand;
      }
    }
    const InitialCondition x = spec.state(best);
    ++result.episodes_used;
    if (episode(spec, x, theta, rng, static_cast<std::uint64_t>(result.episodes_used))) {
      result.found = true;
      result.failing_condition = x;
      break;
    }
  }
  return result;
}

SearchResult avf_search(const EnvSpec& spec, const AgentParams& theta, const Predictor& model, std::int64_t n,
                        std::int64_t budget, RandomStream& rng) {
  return avf_search_table(spec, theta, tabulate(model, spec, theta), n, budget, rng);
}

std::vector<EpisodeRecord> replay_queue(const TrainingTrace& trace, ReplayOrder order) {
  std::vector<EpisodeRecord> queue;
  for (const auto& r : trace.records)
    if (r.failed) queue.push_back(r);
  std::stable_sort(queue.begin(), queue.end(), [order](const EpisodeRecord& a, const EpisodeRecord& b) {
    if (order == ReplayOrder::LeastNoiseMostRecent && a.theta.sigma != b.theta.sigma)
      return a.theta.sigma < b.theta.sigma;
    return a.t > b.t;
  });
  return queue;
}

SearchResult pr_search(const EnvSpec& spec, const AgentParams& theta, const TrainingTrace& trace,
                       std::int64_t budget, RandomStream& rng, ReplayOrder order) {
  check_budget(budget);
  SearchResult result;
  for (const auto& rec : replay_queue(trace, order)) {
    if (result.episodes_used >= budget) return result;
    if (!spec.in_support(rec.x)) continue;
    ++result.episodes_used;
    if (episode(spec, rec.x, theta, rng, static_cast<std::uint64_t>(result.episodes_used))) {
      result.found = true;
      result.failing_condition = rec.x;
      return result;
    }
  }
  if (result.episodes_used >= budget) return result;
  result.fallback_used = true;
  RandomStream fallback = rng.derive("fallback");
  const SearchResult vmc = vmc_search(spec, theta, budget - result.episodes_used, fallback);
  result.found = vmc.found;
  result.failing_condition = vmc.failing_condition;
  result.episodes_used += vmc.episodes_used;
  return result;
}

double expected_search_cost(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("expected_search_cost: probability outside [0, 1]");
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / q;
}

CostEstimate empirical_search_cost(std::span<const SearchResult> results) {
  CostEstimate est;
  est.runs = static_cast<std::int64_t>(results.size());
  double sum = 0.0, sq = 0.0;
  for (const auto& r : results) {
    if (!r.found) continue;
    ++est.successes;
    sum += static_cast<double>(r.episodes_used);
    sq += static_cast<double>(r.episodes_used) * static_cast<double>(r.episodes_used);
  }
  if (est.successes == 0) {
    est.mean = std::numeric_limits<double>::infinity();
    est.std_error = std::numeric_limits<double>::infinity();
    return est;
  }
  const auto k = static_cast<double>(est.successes);
  est.mean = sum / k;
  const double var = est.successes > 1 ? (sq - k * est.mean * est.mean) / (k - 1.0) : 0.0;
  est.std_error = std::sqrt(std::max(var, 0.0) / k);
  return est;
}

double avf_adversary_failure_probability(const Eigen::ArrayXd& scores, const Eigen::ArrayXd& fstar,
                                         std::int64_t n) {
  if (scores.size() != fstar.size() || scores.size() == 0)
    throw std::invalid_argument("avf_adversary_failure_probability: size mismatch");
  const auto M = scores.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });
  // Group equal scores; P(max group = g) = F(g)^n - F(g-)^n, uniform within the group.
  double below = 0.0, q = 0.0;
  const double px = 1.0 / static_cast<double>(M);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double group_f = 0.0;
    while (j < order.size() && scores(order[j]) == scores(order[i])) group_f += fstar(order[j++]);
    const double upto = below + px * static_cast<double>(j - i);
    const double win = std::pow(std::min(upto, 1.0), static_cast<double>(n)) - std::pow(below, static_cast<double>(n));
    q += win * group_f / static_cast<double>(j - i);
    below = upto;
    i = j;
  }
  return q;
}

AccelerationSummary summarize_acceleration(std::vector<double> factors) {
  AccelerationSummary s;
  s.per_seed = factors;
  if (factors.empty()) return s;
  std::sort(factors.begin(), factors.end());
  s.min = factors.front();
  s.max = factors.back();
  const auto n = factors.size();
  s.median = n % 2 ? factors[n / 2] : 0.5 * (factors[n / 2 - 1] + factors[n / 2]);
  return s;
}

}  // namespace rare
