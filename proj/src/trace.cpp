#include "rare/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rare/io.hpp"

namespace rare {

std::size_t TrainingTrace::failures() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.failed; }));
}

double scheduled_noise(const std::vector<double>& noise_levels, std::int64_t t) {
  const auto n = static_cast<std::int64_t>(noise_levels.size());
  return noise_levels[static_cast<std::size_t>(t % n)];
}

TrainingTrace simulate_training_run(const EnvSpec& spec, std::int64_t train_iterations,
                                    const std::vector<double>& noise_levels, const RandomStream& rng,
                                    unsigned workers) {
  spec.validate();
  if (train_iterations < 1) throw std::invalid_argument("trace: T_train must be >= 1");
  if (noise_levels.empty()) throw std::invalid_argument("trace: noise_levels must be non-empty");
  for (double sigma : noise_levels)
    if (!(sigma >= 0.0 && sigma <= kSigmaMax))
      throw std::invalid_argument("trace: noise levels must lie in [0, 0.4]");

  TrainingTrace trace;
  trace.train_iterations = train_iterations;
  trace.noise_levels = noise_levels;
  trace.records.resize(static_cast<std::size_t>(train_iterations));
  const double denom = static_cast<double>(train_iterations);
  parallel_for(trace.records.size(), workers, [&](std::size_t i) {
    const auto t = static_cast<std::int64_t>(i) + 1;
    RandomStream stream = rng.derive("iteration", static_cast<std::uint64_t>(t));
    EpisodeRecord& rec = trace.records[i];
    rec.t = t;
    rec.theta = {static_cast<double>(t) / denom, scheduled_noise(noise_levels, t)};
    rec.x = sample_initial_condition(spec, stream);
    rec.failed = run_episode(spec, rec.x, rec.theta, stream).failed;
  });
  return trace;
}

TrainingTrace filter_trace(const TrainingTrace& trace, double keep_last_fraction) {
  if (trace.empty()) throw std::invalid_argument("filter_trace: empty trace");
  if (!(keep_last_fraction > 0.0 && keep_last_fraction <= 1.0))
    throw std::invalid_argument("filter_trace: keep_last_fraction must lie in (0, 1]");
  const auto n = trace.size();
  // Guard against 0.5 * 10 landing a hair above 5 in binary.
  const double raw = keep_last_fraction * static_cast<double>(n);
  auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  keep = std::clamp<std::size_t>(keep, 1, n);
  TrainingTrace out;
  out.train_iterations = trace.train_iterations;
  out.noise_levels = trace.noise_levels;
  out.records.assign(trace.records.end() - static_cast<std::ptrdiff_t>(keep), trace.records.end());
  return out;
}

void write_trace_jsonl(const TrainingTrace& trace, const std::filesystem::path& path) {
  std::vector<nlohmann::ordered_json> rows;
  rows.reserve(trace.size());
  for (const auto& r : trace.records) {
    nlohmann::ordered_json row;
    row["t"] = r.t;
    row["x"] = r.x.value;
    row["u"] = r.theta.u;
    row["sigma"] = r.theta.sigma;
    row["failed"] = r.failed ? 1 : 0;
    rows.push_back(std::move(row));
  }
  write_jsonl(rows, path);
}

TrainingTrace read_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  TrainingTrace trace;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> levels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      EpisodeRecord r;
      r.t = row.at("t").get<std::int64_t>();
      r.x.value = row.at("x").get<std::int64_t>();
      r.theta.u = row.at("u").get<double>();
      r.theta.sigma = row.at("sigma").get<double>();
      const int failed = row.at("failed").get<int>();
      if (failed != 0 && failed != 1) throw std::invalid_argument("failed must be 0 or 1");
      r.failed = failed == 1;
      if (std::find(levels.begin(), levels.end(), r.theta.sigma) == levels.end())
        levels.push_back(r.theta.sigma);
      trace.train_iterations = std::max(trace.train_iterations, r.t);
      trace.records.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::sort(levels.begin(), levels.end());
  trace.noise_levels = levels;
  return trace;
}

}  // namespace rare
