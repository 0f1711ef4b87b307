#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rare/env.hpp"
#include "rare/random.hpp"

namespace rare {

struct EpisodeRecord {
  std::int64_t t = 0;  // training iteration, 1-based
  InitialCondition x;
  AgentParams theta;
  bool failed = false;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct TrainingTrace {
  std::vector<EpisodeRecord> records;
  std::int64_t train_iterations = 0;
  std::vector<double> noise_levels;

  [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
  [[nodiscard]] bool empty() const noexcept { return records.empty(); }
  [[nodiscard]] std::size_t failures() const noexcept;
};

/// Exploration noise of iteration t (1-based): noise_levels[t mod len].
double scheduled_noise(const std::vector<double>& noise_levels, std::int64_t t);

/// Sweeps u_t = t / T_train while cycling noise levels, one episode per
/// iteration. Iteration t draws from rng.derive("iteration", t), so the trace
/// does not depend on `workers`.
TrainingTrace simulate_training_run(const EnvSpec& spec, std::int64_t train_iterations,
                                    const std::vector<double>& noise_levels, const RandomStream& rng,
                                    unsigned workers = 1);

/// Keeps the last ceil(keep_last_fraction * n) records.
TrainingTrace filter_trace(const TrainingTrace& trace, double keep_last_fraction);

/// JSON Lines, one {"t","x","u","sigma","failed"} object per record.
void write_trace_jsonl(const TrainingTrace& trace, const std::filesystem::path& path);
TrainingTrace read_trace_jsonl(const std::filesystem::path& path);

}  // namespace rare
