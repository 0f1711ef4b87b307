#include "rare/env.hpp"

#include <cmath>
#include <stdexcept>

namespace rare {

std::string to_string(EnvKind kind) {
  return kind == EnvKind::AnalyticBernoulli ? "analytic_bernoulli" : "cliff_walk";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "analytic_bernoulli") return EnvKind::AnalyticBernoulli;
  if (name == "cliff_walk") return EnvKind::CliffWalk;
  throw std::invalid_argument("unknown environment kind '" + name + "'");
}

EnvSpec EnvSpec::analytic_bernoulli(std::int64_t M) {
  EnvSpec spec;
  spec.kind = EnvKind::AnalyticBernoulli;
  spec.M = M;
  return spec;
}

EnvSpec EnvSpec::cliff_walk(std::int64_t M) {
  EnvSpec spec;
  spec.kind = EnvKind::CliffWalk;
  spec.M = M;
  spec.beta = 8.0;
  return spec;
}

void EnvSpec::validate() const {
  if (M < 1) throw std::invalid_argument("env: M must be >= 1");
  if (!(beta >= 0.0)) throw std::invalid_argument("env: beta must be >= 0");
  if (kind == EnvKind::AnalyticBernoulli) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("env: gamma must lie in (0, 1)");
    if (!(s > 0.0)) throw std::invalid_argument("env: s must be > 0");
    if (!(c_noise >= 0.0)) throw std::invalid_argument("env: c_noise must be >= 0");
  } else {
    if (horizon < 0) throw std::invalid_argument("env: horizon must be >= 0");
    if (!(0.0 <= q_min && q_min <= q_max && q_max <= 1.0))
      throw std::invalid_argument("env: require 0 <= q_min <= q_max <= 1");
  }
}

void validate_agent(const AgentParams& theta) {
  if (!(theta.u >= 0.0 && theta.u <= 1.0)) throw std::invalid_argument("agent: u must lie in [0, 1]");
  if (!(theta.sigma >= 0.0 && theta.sigma <= kSigmaMax))
    throw std::invalid_argument("agent: sigma must lie in [0, 0.4]");
}

double cliff_down_probability(const EnvSpec& spec, const AgentParams& theta) {
  return spec.q_min + (spec.q_max - spec.q_min) * std::exp(-spec.beta * theta.u);
}

InitialCondition sample_initial_condition(const EnvSpec& spec, RandomStream& rng) {
  return spec.state(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(spec.M))));
}

EpisodeOutcome run_episode(const EnvSpec& spec, InitialCondition x, const AgentParams& theta,
                           RandomStream& rng) {
  if (!spec.in_support(x))
    throw std::invalid_argument("run_episode: initial condition " + std::to_string(x.value) +
                                " outside support");
  if (spec.kind == EnvKind::AnalyticBernoulli) {
    return {rng.bernoulli(true_failure_prob(spec, x, theta)), 1};
  }
  const double q = cliff_down_probability(spec, theta);
  std::int64_t pos = x.value;
  for (std::int64_t step = 1; step <= spec.horizon; ++step) {
    if (rng.uniform() < q) {
      if (--pos == 0) return {true, step};
    } else if (pos < spec.M) {
      ++pos;  // position M holds on an up-step
    }
  }
  return {false, spec.horizon};
}

std::vector<double> cliff_absorption(std::int64_t M, std::int64_t horizon, double q) {
  // prob[k] after h rounds: absorption within h steps starting from position k.
  std::vector<double> prob(static_cast<std::size_t>(M + 1), 0.0), next(prob.size());
  prob[0] = 1.0;
  for (std::int64_t h = 0; h < horizon; ++h) {
    next[0] = 1.0;
    for (std::int64_t k = 1; k <= M; ++k) {
      const double up = prob[static_cast<std::size_t>(k < M ? k + 1 : M)];
      next[static_cast<std::size_t>(k)] = q * prob[static_cast<std::size_t>(k - 1)] + (1.0 - q) * up;
    }
    prob.swap(next);
  }
  return prob;
}

double true_failure_prob(const EnvSpec& spec, InitialCondition x, const AgentParams& theta) {
  if (!spec.in_support(x))
    throw std::invalid_argument("true_failure_prob: initial condition " + std::to_string(x.value) +
                                " outside support");
  if (spec.kind == EnvKind::AnalyticBernoulli) {
    const double h = std::exp(-spec.beta * theta.u) + spec.c_noise * theta.sigma;
    return std::min(1.0, spec.s * std::pow(spec.gamma, static_cast<double>(x.value)) * h);
  }
  const auto prob = cliff_absorption(spec.M, spec.horizon, cliff_down_probability(spec, theta));
  return prob[static_cast<std::size_t>(x.value)];
}

Eigen::ArrayXd true_failure_table(const EnvSpec& spec, const AgentParams& theta) {
  Eigen::ArrayXd table(spec.M);
  if (spec.kind == EnvKind::CliffWalk) {
    const auto prob = cliff_absorption(spec.M, spec.horizon, cliff_down_probability(spec, theta));
    for (std::int64_t i = 0; i < spec.M; ++i) table(i) = prob[static_cast<std::size_t>(i + 1)];
    return table;
  }
  for (std::int64_t i = 0; i < spec.M; ++i) table(i) = true_failure_prob(spec, spec.state(i), theta);
  return table;
}

}  // namespace rare
