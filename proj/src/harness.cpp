#include "rare/harness.hpp"

#include <chrono>
#include <filesystem>
#include <stdexcept>

#include "rare/estimate.hpp"
#include "rare/io.hpp"
#include "rare/oracle.hpp"
#include "rare/search.hpp"
#include "rare/selection.hpp"
#include "rare/trace.hpp"

namespace rare {

namespace {

namespace fs = std::filesystem;

std::uint64_t stage_seed(const ExperimentConfig& c, const std::string& stage) {
  return RandomStream::keyed(c.seed, stage).key();
}

AvfModel load_model(const ExperimentConfig& c) {
  const auto path = c.model_path();
  if (!fs::exists(path))
    throw std::runtime_error("missing AVF model " + path.string() + " (run train-avf first)");
  return AvfModel::load(path);
}

TrainingTrace load_trace(const ExperimentConfig& c) {
  const auto path = c.trace_path();
  if (!fs::exists(path)) throw std::runtime_error("missing trace " + path.string() + " (run trace first)");
  return read_trace_jsonl(path);
}

EstimatorConfig estimator_config(const ExperimentConfig& c, const std::string& name, const Predictor& model) {
  EstimatorConfig e;
  e.kind = estimator_kind_from_string(name);
  e.alpha = c.run.alpha;
  e.k_min = c.run.k_min;
  e.z = c.run.m > 0 ? Normalization::sampled(c.run.m) : Normalization{};
  if (e.kind != EstimatorKind::Vmc) e.model = model;
  return e;
}

bool needs_model(const std::vector<std::string>& estimators) {
  for (const auto& e : estimators)
    if (e != "vmc") return true;
  return false;
}

void run_trace(const ExperimentConfig& c, RunManifest& m) {
  const RandomStream rng = RandomStream::keyed(c.seed, "trace");
  m.stage_seeds["trace"] = rng.key();
  const auto trace = simulate_training_run(c.env, c.trace.train_iterations, c.trace.noise_levels, rng, c.workers);
  write_trace_jsonl(trace, c.trace_path());
  m.outputs.push_back(c.trace_path().string());
}

void run_train(const ExperimentConfig& c, RunManifest& m) {
  const auto filtered = filter_trace(load_trace(c), c.trace.keep_last_fraction);
  TrainingTrace train, holdout;
  train.train_iterations = holdout.train_iterations = filtered.train_iterations;
  train.noise_levels = holdout.noise_levels = filtered.noise_levels;
  for (const auto& r : filtered.records) (r.t % 10 == 0 ? holdout : train).records.push_back(r);
  if (train.empty()) train = filtered;
  if (holdout.empty()) holdout = filtered;

  AvfTrainConfig tc = c.avf.train;
  tc.seed = stage_seed(c, "avf");
  m.stage_seeds["avf"] = tc.seed;
  const AvfModel model = train_avf(train, tc);
  model.save(c.model_path());

  const auto eval = evaluate_avf(model.predictor(), holdout);
  nlohmann::ordered_json report;
  report["kind"] = to_string(model.kind());
  report["train_records"] = train.size();
  report["train_failures"] = train.failures();
  report["holdout_records"] = holdout.size();
  report["holdout_cross_entropy"] = eval.cross_entropy;
  report["calibration_gap"] = eval.calibration_gap();
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& b : eval.calibration)
    table.push_back({{"predicted_mean", b.predicted_mean}, {"empirical_rate", b.empirical_rate}, {"count", b.count}});
  report["calibration"] = table;
  if (const auto* dnd = std::get_if<DndAvf>(&model.impl())) report["pseudocount"] = dnd->pseudocount;
  const auto report_path = fs::path(c.out) / "avf_report.json";
  write_json(report, report_path);
  m.outputs.push_back(c.model_path().string());
  m.outputs.push_back(report_path.string());
}

void run_search(const ExperimentConfig& c, RunManifest& m) {
  const auto& adv = c.run.adversary;
  std::optional<AvfModel> model;
  std::optional<TrainingTrace> trace;
  Eigen::ArrayXd scores;
  if (adv == "avf") {
    model = load_model(c);
    scores = tabulate(model->predictor(), c.env, c.run.agent);
  }
  if (adv == "pr") trace = load_trace(c);
  const ReplayOrder order = c.run.replay_order == "most_recent" ? ReplayOrder::MostRecent
                                                                : ReplayOrder::LeastNoiseMostRecent;
  const std::string tag = "search/" + adv;
  std::vector<SearchResult> results(static_cast<std::size_t>(c.run.repetitions));
  std::vector<std::uint64_t> keys(results.size());
  parallel_for(results.size(), c.workers, [&](std::size_t i) {
    RandomStream rng = RandomStream::keyed(c.seed, tag, i);
    keys[i] = rng.key();
    if (adv == "vmc") results[i] = vmc_search(c.env, c.run.agent, c.run.budget, rng);
    else if (adv == "avf") results[i] = avf_search_table(c.env, c.run.agent, scores, c.run.n, c.run.budget, rng);
    else results[i] = pr_search(c.env, c.run.agent, *trace, c.run.budget, rng, order);
  });
  std::vector<nlohmann::ordered_json> rows;
  for (std::size_t i = 0; i < results.size(); ++i) {
    nlohmann::ordered_json row;
    row["adversary"] = adv;
    row["seed"] = keys[i];
    row["found"] = results[i].found;
    row["episodes_used"] = results[i].episodes_used;
    row["fallback_used"] = results[i].fallback_used;
    if (results[i].failing_condition) row["failing_condition"] = results[i].failing_condition->value;
    rows.push_back(std::move(row));
  }
  const auto jsonl = fs::path(c.out) / "search.jsonl";
  write_jsonl(rows, jsonl);

  const auto cost = empirical_search_cost(results);
  const double p = exact_risk(c.env, c.run.agent);
  nlohmann::ordered_json summary;
  summary["adversary"] = adv;
  summary["repetitions"] = cost.runs;
  summary["successes"] = cost.successes;
  summary["mean_episodes"] = cost.successes ? nlohmann::ordered_json(cost.mean) : nlohmann::ordered_json(nullptr);
  summary["stderr_episodes"] = cost.successes ? nlohmann::ordered_json(cost.std_error) : nlohmann::ordered_json(nullptr);
  summary["oracle_vmc_cost"] = p > 0.0 ? nlohmann::ordered_json(1.0 / p) : nlohmann::ordered_json(nullptr);
  summary["acceleration"] = cost.successes && p > 0.0 ? nlohmann::ordered_json((1.0 / p) / cost.mean)
                                                      : nlohmann::ordered_json(nullptr);
  const auto summary_path = fs::path(c.out) / "search_summary.json";
  write_json(summary, summary_path);
  if (cost.successes == 0) m.warnings.push_back("no failure found within the budget");
  m.stage_seeds[tag] = RandomStream::keyed(c.seed, tag).key();
  m.outputs.push_back(jsonl.string());
  m.outputs.push_back(summary_path.string());
}

void run_estimate(const ExperimentConfig& c, RunManifest& m) {
  std::optional<AvfModel> model;
  if (c.run.estimator != "vmc") model = load_model(c);
  const EstimatorConfig ec = estimator_config(c, c.run.estimator, model ? model->predictor() : Predictor{});
  const PreparedEstimator est(ec, c.env, c.run.agent);
  RandomStream rng = RandomStream::keyed(c.seed, "estimate/" + c.run.estimator);
  m.stage_seeds["estimate"] = rng.key();
  const EstimateReport report = est.run(c.run.budget, rng);
  auto j = report.to_json();
  j["p_true"] = exact_risk(c.env, c.run.agent);
  const auto path = fs::path(c.out) / "estimate.json";
  write_json(j, path);
  for (const auto& w : report.warnings) m.warnings.push_back(w);
  m.outputs.push_back(path.string());
}

void run_curve(const ExperimentConfig& c, RunManifest& m) {
  std::optional<AvfModel> model;
  if (needs_model(c.run.estimators)) model = load_model(c);
  const double p = exact_risk(c.env, c.run.agent);
  std::vector<ReliabilityCurve> curves;
  for (const auto& name : c.run.estimators) {
    const auto ec = estimator_config(c, name, model ? model->predictor() : Predictor{});
    auto part = reliability_curves(ec, c.env, c.run.agent, p, c.run.rho, c.run.budgets, c.run.trials, c.seed,
                                   c.workers);
    for (auto& cv : part) {
      for (const auto& w : cv.warnings) m.warnings.push_back(name + ": " + w);
      curves.push_back(std::move(cv));
    }
  }
  const auto path = fs::path(c.out) / "curve.csv";
  write_csv(curves_csv(curves), path);
  m.stage_seeds["curve"] = c.seed;
  m.outputs.push_back(path.string());
}

void run_select(const ExperimentConfig& c, RunManifest& m) {
  std::optional<AvfModel> model;
  if (needs_model(c.run.estimators)) model = load_model(c);
  std::vector<EstimatorConfig> configs;
  for (const auto& name : c.run.estimators)
    configs.push_back(estimator_config(c, name, model ? model->predictor() : Predictor{}));
  const auto family = c.run.family.agents();
  const auto rows = selection_experiment(c.env, family, configs, c.run.budgets, c.run.trials, c.seed, c.workers);
  const auto path = fs::path(c.out) / "selection.csv";
  write_csv(selection_csv(rows), path);
  m.stage_seeds["select"] = c.seed;
  m.outputs.push_back(path.string());
}

}  // namespace

RunManifest run_subcommand(const std::string& name, const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunManifest m;
  m.subcommand = name;
  m.config_hash = config.hash();
  m.config = config.to_json();
  fs::create_directories(config.out);
  if (name == "trace") run_trace(config, m);
  else if (name == "train-avf") run_train(config, m);
  else if (name == "search") run_search(config, m);
  else if (name == "estimate") run_estimate(config, m);
  else if (name == "curve") run_curve(config, m);
  else if (name == "select") run_select(config, m);
  else throw std::invalid_argument("unknown subcommand '" + name + "'");
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(m.to_json(), fs::path(config.out) / ("manifest_" + name + ".json"));
  return m;
}

}  // namespace rare
