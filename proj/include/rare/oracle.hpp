#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "rare/env.hpp"

namespace rare {

/// Neumaier-compensated sum of any dense expression.
template <typename Derived>
typename Derived::Scalar compensated_sum(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  Scalar sum(0), carry(0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const Scalar v = values.derived().coeff(i);
    const Scalar t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      carry += (sum - t) + v;
    else
      carry += (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

/// Sum_x p_X(x) f(x).
template <typename DerivedP, typename DerivedF>
typename DerivedP::Scalar expectation(const Eigen::ArrayBase<DerivedP>& px,
                                      const Eigen::ArrayBase<DerivedF>& f) {
  return compensated_sum((px * f).eval());
}

/// Proposal density on a discrete support. Normalized to 1 within 1e-12.
struct DiscreteProposal {
  Eigen::ArrayXd density;
};

/// q proportional to weights * p_X, exactly normalized.
template <typename DerivedP, typename DerivedW>
DiscreteProposal normalized_proposal(const Eigen::ArrayBase<DerivedP>& px,
                                     const Eigen::ArrayBase<DerivedW>& weights) {
  Eigen::ArrayXd unnormalized = (px * weights).template cast<double>();
  const double total = compensated_sum(unnormalized);
  if (!(total > 0.0)) throw std::domain_error("proposal: weights vanish on the support");
  return {unnormalized / total};
}

/// Per-sample variance of U = (p_X/q) C under proposal q:
/// Sum_x p_X(x)^2 f*(x) / q(x) - p^2.
template <typename DerivedP, typename DerivedF, typename DerivedQ>
typename DerivedP::Scalar is_variance(const Eigen::ArrayBase<DerivedP>& px,
                                      const Eigen::ArrayBase<DerivedF>& fstar,
                                      const Eigen::ArrayBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> terms(px.size());
  for (Eigen::Index i = 0; i < px.size(); ++i) {
    const Scalar mass = px.coeff(i) * fstar.coeff(i);
    if (mass == Scalar(0)) {
      terms(i) = Scalar(0);
    } else if (!(q.coeff(i) > Scalar(0))) {
      throw std::domain_error("is_variance: absolute continuity violated at support index " +
                              std::to_string(i));
    } else {
      terms(i) = px.coeff(i) * mass / q.coeff(i);
    }
  }
  const Scalar p = expectation(px, fstar);
  return compensated_sum(terms) - p * p;
}

/// Uniform P_X density over the environment support.
Eigen::ArrayXd support_density(const EnvSpec& spec);

/// p = E[c(X, Z)] by exact summation over the support.
double exact_risk(const EnvSpec& spec, const AgentParams& theta);

/// q proportional to f*^(1/2) p_X. Throws std::domain_error when f* vanishes.
DiscreteProposal exact_optimal_proposal(const EnvSpec& spec, const AgentParams& theta);

/// Exact Var[U] for the IS summand under q. Throws std::domain_error naming the
/// offending initial condition when q misses failure mass.
double exact_is_variance(const EnvSpec& spec, const AgentParams& theta, const DiscreteProposal& q);

/// (P_X f*^(1/2))^2 - p^2, the variance at the optimal proposal.
double optimal_is_variance(const EnvSpec& spec, const AgentParams& theta);

}  // namespace rare
