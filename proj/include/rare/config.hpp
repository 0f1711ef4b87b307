#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rare/avf.hpp"
#include "rare/env.hpp"
#include "rare/search.hpp"

namespace rare {

inline constexpr const char* kToolVersion = "1.0.0";

struct TraceBlock {
  std::int64_t train_iterations = 100000;
  std::vector<double> noise_levels = {0.0, 0.1, 0.2, 0.3, 0.4};
  double keep_last_fraction = 0.5;
  std::string path;  // empty: <out>/trace.jsonl
};

struct AvfBlock {
  AvfTrainConfig train;
  std::string model_path;  // empty: <out>/model.json
};

/// Agent family for `select`: u evenly spaced over [u_start, u_end]; the last
/// `bump_count` agents run with exploration noise `bump_sigma`.
struct FamilyBlock {
  std::int64_t count = 50;
  double u_start = 0.5;
  double u_end = 1.0;
  double sigma = 0.0;
  std::int64_t bump_count = 0;
  double bump_sigma = 0.0;

  [[nodiscard]] std::vector<AgentParams> agents() const;
};

struct RunBlock {
  AgentParams agent{1.0, 0.0};
  // search
  std::string adversary = "avf";
  std::int64_t n = kAvfCandidatesSmall;
  std::int64_t repetitions = 20;
  std::string replay_order = "least_noise";
  // search cap per repetition, and T for estimate
  std::int64_t budget = 100000;
  // estimate / curve / select
  std::string estimator = "avf";
  std::vector<std::string> estimators = {"vmc", "avf"};
  double alpha = 0.5;
  std::int64_t m = 0;  // 0: exact Z on small supports, else 100 * T samples
  std::vector<double> rho = {3.0};
  std::vector<std::int64_t> budgets = {1000, 3000, 10000, 30000, 100000};
  std::int64_t trials = 200;
  std::int64_t k_min = 5;
  FamilyBlock family;
};

struct ExperimentConfig {
  EnvSpec env;
  TraceBlock trace;
  AvfBlock avf;
  RunBlock run;
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned workers = 1;

  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  /// Stable hash of the resolved configuration.
  [[nodiscard]] std::string hash() const;

  [[nodiscard]] std::filesystem::path trace_path() const;
  [[nodiscard]] std::filesystem::path model_path() const;
};

/// Parses a config document. Missing keys take defaults, unknown keys throw
/// std::invalid_argument naming the key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  double wall_clock_seconds = 0.0;
  nlohmann::ordered_json stage_seeds = nlohmann::ordered_json::object();
  std::vector<std::string> outputs;
  nlohmann::ordered_json config;
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

}  // namespace rare
