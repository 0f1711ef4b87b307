#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "rare/io.hpp"
#include "rare/oracle.hpp"
#include "rare/trace.hpp"

using namespace rare;
namespace fs = std::filesystem;

namespace {

TrainingTrace synthetic(std::int64_t n) {
  TrainingTrace trace;
  trace.train_iterations = n;
  trace.noise_levels = {0.0};
  for (std::int64_t t = 1; t <= n; ++t) trace.records.push_back({t, {t % 4}, {double(t) / n, 0.0}, t % 3 == 0});
  return trace;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "rare_eval_test_trace";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(SimulateTrainingRun, SingleIteration) {
  const auto trace = simulate_training_run(EnvSpec::analytic_bernoulli(), 1, {0.0}, RandomStream(1));
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_EQ(trace.records[0].t, 1);
  EXPECT_EQ(trace.records[0].theta, (AgentParams{1.0, 0.0}));
}

TEST(SimulateTrainingRun, NoiseSchedule) {
  const auto trace = simulate_training_run(EnvSpec::analytic_bernoulli(), 4, {0.0, 0.4}, RandomStream(2));
  ASSERT_EQ(trace.size(), 4u);
  const double expected[] = {0.4, 0.0, 0.4, 0.0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(trace.records[i].theta.sigma, expected[i]);
    EXPECT_DOUBLE_EQ(trace.records[i].theta.u, (i + 1) / 4.0);
  }
}

TEST(SimulateTrainingRun, FailureCountMatchesOracle) {
  const auto spec = EnvSpec::analytic_bernoulli();
  const std::int64_t T = 100000;
  const std::vector<double> levels = {0.0, 0.1, 0.2, 0.3, 0.4};
  const auto trace = simulate_training_run(spec, T, levels, RandomStream(3));
  double mean = 0, var = 0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double p = exact_risk(spec, {double(t) / T, scheduled_noise(levels, t)});
    mean += p;
    var += p * (1 - p);
  }
  EXPECT_LT(std::abs(double(trace.failures()) - mean), 4 * std::sqrt(var));
}

TEST(SimulateTrainingRun, IndependentOfWorkers) {
  const auto spec = EnvSpec::cliff_walk();
  const auto a = simulate_training_run(spec, 5000, {0.0, 0.2}, RandomStream(4), 1);
  const auto b = simulate_training_run(spec, 5000, {0.0, 0.2}, RandomStream(4), 3);
  EXPECT_EQ(a.records, b.records);
}

TEST(SimulateTrainingRun, RejectsBadArguments) {
  const auto spec = EnvSpec::analytic_bernoulli();
  EXPECT_THROW(simulate_training_run(spec, 0, {0.0}, RandomStream(1)), std::invalid_argument);
  EXPECT_THROW(simulate_training_run(spec, 10, {}, RandomStream(1)), std::invalid_argument);
  EXPECT_THROW(simulate_training_run(spec, 10, {0.5}, RandomStream(1)), std::invalid_argument);
}

TEST(FilterTrace, KeepAllIsIdentity) {
  const auto trace = synthetic(10);
  EXPECT_EQ(filter_trace(trace, 1.0).records, trace.records);
}

TEST(FilterTrace, KeepsLastHalf) {
  const auto kept = filter_trace(synthetic(10), 0.5);
  ASSERT_EQ(kept.size(), 5u);
  EXPECT_EQ(kept.records.front().t, 6);
  EXPECT_EQ(kept.records.back().t, 10);
}

TEST(FilterTrace, CeilingRule) {
  const auto kept = filter_trace(synthetic(3), 0.34);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept.records.front().t, 2);
}

TEST(FilterTrace, Errors) {
  EXPECT_THROW(filter_trace(TrainingTrace{}, 0.5), std::invalid_argument);
  EXPECT_THROW(filter_trace(synthetic(5), 0.0), std::invalid_argument);
  EXPECT_THROW(filter_trace(synthetic(5), 1.5), std::invalid_argument);
}

TEST(TraceJsonl, RoundTrip) {
  const auto trace = simulate_training_run(EnvSpec::analytic_bernoulli(), 200, {0.0, 0.3}, RandomStream(5));
  const auto path = scratch("trace.jsonl");
  write_trace_jsonl(trace, path);
  const auto back = read_trace_jsonl(path);
  EXPECT_EQ(back.records, trace.records);
  EXPECT_EQ(back.train_iterations, 200);
  EXPECT_EQ(back.noise_levels, (std::vector<double>{0.0, 0.3}));
}

TEST(TraceJsonl, EmptyTraceGivesEmptyFile) {
  const auto path = scratch("empty.jsonl");
  write_trace_jsonl(TrainingTrace{}, path);
  EXPECT_EQ(read_file(path), "");
}

TEST(TraceJsonl, ReportsLineOfMalformedRecord) {
  const auto path = scratch("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"t":1,"x":0,"u":1,"sigma":0,"failed":0})" << "\n" << R"({"t":2,"x":0})" << "\n";
  }
  try {
    (void)read_trace_jsonl(path);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(TraceJsonl, MissingFile) {
  EXPECT_THROW(read_trace_jsonl(scratch("does_not_exist.jsonl")), std::runtime_error);
}
