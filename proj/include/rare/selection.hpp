#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rare/env.hpp"
#include "rare/estimate.hpp"
#include "rare/io.hpp"

namespace rare {

struct SelectionOutcome {
  std::vector<double> estimates;
  std::vector<std::size_t> selected;  // every agent attaining the minimum estimate
  double expected_p = 0.0;            // mean true p over the selected set
  double robustness = 0.0;            // 1 / expected_p
};

/// Picks the agents with the lowest estimate. Ties are resolved by averaging
/// their true failure probabilities before taking the reciprocal.
SelectionOutcome select_best(std::span<const double> estimates, std::span<const double> true_p);

struct SelectionRow {
  std::int64_t budget = 0;
  std::string estimator;
  double robustness_mean = 0.0;
  double robustness_min = 0.0;
  double robustness_max = 0.0;
};

/// For each total budget, spends budget / |family| episodes on every agent with
/// each estimator, selects, and summarizes robustness over trials. Agent a in
/// trial i uses RandomStream::keyed(seed, "select/<label>/<budget>", i * |family| + a).
std::vector<SelectionRow> selection_experiment(const EnvSpec& spec, std::span<const AgentParams> family,
                                               std::span<const EstimatorConfig> estimators,
                                               std::span<const std::int64_t> budgets, std::int64_t trials,
                                               std::uint64_t seed, unsigned workers = 1);

/// Rows: budget, estimator, robustness_mean, robustness_min, robustness_max.
CsvTable selection_csv(std::span<const SelectionRow> rows);

}  // namespace rare
