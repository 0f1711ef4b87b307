#include "rare/oracle.hpp"

namespace rare {

Eigen::ArrayXd support_density(const EnvSpec& spec) {
  return Eigen::ArrayXd::Constant(spec.M, 1.0 / static_cast<double>(spec.M));
}

double exact_risk(const EnvSpec& spec, const AgentParams& theta) {
  return expectation(support_density(spec), true_failure_table(spec, theta));
}

DiscreteProposal exact_optimal_proposal(const EnvSpec& spec, const AgentParams& theta) {
  const Eigen::ArrayXd fstar = true_failure_table(spec, theta);
  if ((fstar <= 0.0).all())
    throw std::domain_error("optimal proposal undefined: failure probability is zero everywhere");
  return normalized_proposal(support_density(spec), fstar.sqrt());
}

double exact_is_variance(const EnvSpec& spec, const AgentParams& theta, const DiscreteProposal& q) {
  if (q.density.size() != spec.M)
    throw std::invalid_argument("exact_is_variance: proposal size does not match support");
  try {
    return is_variance(support_density(spec), true_failure_table(spec, theta), q.density);
  } catch (const std::domain_error&) {
    const Eigen::ArrayXd fstar = true_failure_table(spec, theta);
    for (Eigen::Index i = 0; i < fstar.size(); ++i) {
      if (fstar(i) > 0.0 && !(q.density(i) > 0.0))
        throw std::domain_error("exact_is_variance: q vanishes at x=" +
                                std::to_string(spec.state(i).value) + " where failures occur");
    }
    throw;
  }
}

double optimal_is_variance(const EnvSpec& spec, const AgentParams& theta) {
  const Eigen::ArrayXd px = support_density(spec);
  const Eigen::ArrayXd fstar = true_failure_table(spec, theta);
  const double root_mass = expectation(px, fstar.sqrt());
  const double p = expectation(px, fstar);
  return root_mass * root_mass - p * p;
}

}  // namespace rare
