#include "rare/selection.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "rare/oracle.hpp"

namespace rare {

SelectionOutcome select_best(std::span<const double> estimates, std::span<const double> true_p) {
  if (estimates.empty() || estimates.size() != true_p.size())
    throw std::invalid_argument("select_best: estimate and truth lists must be non-empty and of equal length");
  SelectionOutcome out;
  out.estimates.assign(estimates.begin(), estimates.end());
  const double best = *std::min_element(estimates.begin(), estimates.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i] == best) {
      out.selected.push_back(i);
      sum += true_p[i];
    }
  }
  out.expected_p = sum / static_cast<double>(out.selected.size());
  out.robustness = out.expected_p > 0.0 ? 1.0 / out.expected_p : std::numeric_limits<double>::infinity();
  return out;
}

std::vector<SelectionRow> selection_experiment(const EnvSpec& spec, std::span<const AgentParams> family,
                                               std::span<const EstimatorConfig> estimators,
                                               std::span<const std::int64_t> budgets, std::int64_t trials,
                                               std::uint64_t seed, unsigned workers) {
  if (family.size() < 2) throw std::invalid_argument("selection_experiment: need at least two agents");
  if (!std::is_sorted(budgets.begin(), budgets.end()))
    throw std::invalid_argument("selection_experiment: budgets must be ascending");
  if (trials < 1) throw std::invalid_argument("selection_experiment: trials must be >= 1");
  const std::size_t agents = family.size();
  std::vector<double> truth;
  for (const auto& theta : family) truth.push_back(exact_risk(spec, theta));

  std::vector<SelectionRow> rows;
  for (const auto& config : estimators) {
    std::vector<PreparedEstimator> prepared;
    for (const auto& theta : family) prepared.emplace_back(config, spec, theta);
    for (std::int64_t budget : budgets) {
      const std::int64_t per_agent = budget / static_cast<std::int64_t>(agents);
      if (per_agent < 1) throw std::invalid_argument("selection_experiment: budget smaller than the family size");
      const std::string tag = "select/" + config.label() + "/" + std::to_string(budget);
      std::vector<double> estimates(static_cast<std::size_t>(trials) * agents);
      parallel_for(estimates.size(), workers, [&](std::size_t k) {
        RandomStream rng = RandomStream::keyed(seed, tag, k);
        estimates[k] = prepared[k % agents].run(per_agent, rng).p_hat;
      });
      SelectionRow row;
      row.budget = budget;
      row.estimator = config.label();
      row.robustness_min = std::numeric_limits<double>::infinity();
      row.robustness_max = 0.0;
      double total = 0.0;
      for (std::int64_t i = 0; i < trials; ++i) {
        const std::span<const double> trial(estimates.data() + static_cast<std::size_t>(i) * agents, agents);
        const double r = select_best(trial, truth).robustness;
        total += r;
        row.robustness_min = std::min(row.robustness_min, r);
        row.robustness_max = std::max(row.robustness_max, r);
      }
      row.robustness_mean = total / static_cast<double>(trials);
      rows.push_back(row);
    }
  }
  return rows;
}

CsvTable selection_csv(std::span<const SelectionRow> rows) {
  CsvTable table;
  table.header = {"budget", "estimator", "robustness_mean", "robustness_min", "robustness_max"};
  for (const auto& r : rows)
    table.rows.push_back({r.budget, r.estimator, r.robustness_mean, r.robustness_min, r.robustness_max});
  return table;
}

}  // namespace rare
