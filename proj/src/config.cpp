#include "rare/config.hpp"

#include <cstdio>
#include <set>
#include <stdexcept>

#include "rare/estimate.hpp"
#include "rare/io.hpp"

namespace rare {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

EnvSpec parse_env(const json& j) {
  reject_unknown(j, "env", {"kind", "M", "s", "gamma", "beta", "c_noise", "horizon", "q_min", "q_max"});
  const EnvKind kind = env_kind_from_string(j.value("kind", std::string("analytic_bernoulli")));
  EnvSpec env = kind == EnvKind::AnalyticBernoulli ? EnvSpec::analytic_bernoulli() : EnvSpec::cliff_walk();
  read(j, "M", env.M);
  read(j, "s", env.s);
  read(j, "gamma", env.gamma);
  read(j, "beta", env.beta);
  read(j, "c_noise", env.c_noise);
  read(j, "horizon", env.horizon);
  read(j, "q_min", env.q_min);
  read(j, "q_max", env.q_max);
  return env;
}

AgentParams parse_agent(const json& j, const std::string& where) {
  reject_unknown(j, where, {"u", "sigma"});
  AgentParams a;
  read(j, "u", a.u);
  read(j, "sigma", a.sigma);
  return a;
}

nlohmann::ordered_json agent_json(const AgentParams& a) { return {{"u", a.u}, {"sigma", a.sigma}}; }

}  // namespace

std::vector<AgentParams> FamilyBlock::agents() const {
  std::vector<AgentParams> out;
  for (std::int64_t i = 0; i < count; ++i) {
    const double frac = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 1.0;
    const bool bumped = i >= count - bump_count;
    out.push_back({u_start + (u_end - u_start) * frac, bumped ? bump_sigma : sigma});
  }
  return out;
}

void ExperimentConfig::validate() const {
  env.validate();
  avf.train.validate();
  validate_agent(run.agent);
  if (trace.train_iterations < 1) throw std::invalid_argument("config: trace.T_train must be >= 1");
  if (trace.noise_levels.empty()) throw std::invalid_argument("config: trace.noise_levels must be non-empty");
  if (!(trace.keep_last_fraction > 0.0 && trace.keep_last_fraction <= 1.0))
    throw std::invalid_argument("config: trace.keep_last_fraction must lie in (0, 1]");
  if (run.n < 1) throw std::invalid_argument("config: run.n must be >= 1");
  if (run.budget < 1) throw std::invalid_argument("config: run.budget must be >= 1");
  if (run.repetitions < 1) throw std::invalid_argument("config: run.repetitions must be >= 1");
  if (run.trials < 1) throw std::invalid_argument("config: run.trials must be >= 1");
  if (!(run.alpha > 0.0)) throw std::invalid_argument("config: run.alpha must be > 0");
  if (run.m < 0) throw std::invalid_argument("config: run.m must be >= 0");
  if (run.adversary != "vmc" && run.adversary != "avf" && run.adversary != "pr")
    throw std::invalid_argument("config: run.adversary must be vmc, avf or pr");
  if (run.replay_order != "least_noise" && run.replay_order != "most_recent")
    throw std::invalid_argument("config: run.replay_order must be least_noise or most_recent");
  estimator_kind_from_string(run.estimator);
  for (const auto& e : run.estimators) estimator_kind_from_string(e);
  for (double r : run.rho)
    if (!(r > 1.0)) throw std::invalid_argument("config: every run.rho must be > 1");
  for (auto b : run.budgets)
    if (b < 1) throw std::invalid_argument("config: run.budgets must be >= 1");
  if (run.family.count < 2) throw std::invalid_argument("config: run.family.count must be >= 2");
  for (const auto& a : run.family.agents()) validate_agent(a);
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["out"] = out;
  j["workers"] = workers;
  j["env"] = {{"kind", to_string(env.kind)}, {"M", env.M},         {"s", env.s},
              {"gamma", env.gamma},          {"beta", env.beta},   {"c_noise", env.c_noise},
              {"horizon", env.horizon},      {"q_min", env.q_min}, {"q_max", env.q_max}};
  j["trace"] = {{"T_train", trace.train_iterations},
                {"noise_levels", trace.noise_levels},
                {"keep_last_fraction", trace.keep_last_fraction},
                {"path", trace.path}};
  const auto& t = avf.train;
  j["avf"] = {{"kind", to_string(t.kind)},
              {"iterations", t.iterations},
              {"step_size", t.step_size},
              {"batch_size", t.batch_size},
              {"hidden", t.hidden},
              {"neighbors", t.neighbors},
              {"embedding_width", t.embedding_width},
              {"embedding_hidden", t.embedding_hidden},
              {"initial_pseudocount", t.initial_pseudocount},
              {"u_buckets", t.u_buckets},
              {"x_scale", t.x_scale},
              {"f_min", t.f_min},
              {"model_path", avf.model_path}};
  const auto& f = run.family;
  j["run"] = {{"agent", agent_json(run.agent)},
              {"adversary", run.adversary},
              {"n", run.n},
              {"repetitions", run.repetitions},
              {"replay_order", run.replay_order},
              {"budget", run.budget},
              {"estimator", run.estimator},
              {"estimators", run.estimators},
              {"alpha", run.alpha},
              {"m", run.m},
              {"rho", run.rho},
              {"budgets", run.budgets},
              {"trials", run.trials},
              {"k_min", run.k_min},
              {"family",
               {{"count", f.count},
                {"u_start", f.u_start},
                {"u_end", f.u_end},
                {"sigma", f.sigma},
                {"bump_count", f.bump_count},
                {"bump_sigma", f.bump_sigma}}}};
  return j;
}

std::string ExperimentConfig::hash() const {
  nlohmann::ordered_json j = to_json();
  j.erase("workers");  // results depend on neither the worker count nor where they land
  j.erase("out");
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_string(j.dump())));
  return buf;
}

std::filesystem::path ExperimentConfig::trace_path() const {
  return trace.path.empty() ? std::filesystem::path(out) / "trace.jsonl" : std::filesystem::path(trace.path);
}

std::filesystem::path ExperimentConfig::model_path() const {
  return avf.model_path.empty() ? std::filesystem::path(out) / "model.json" : std::filesystem::path(avf.model_path);
}

ExperimentConfig parse_config(const json& doc) {
  reject_unknown(doc, "config", {"seed", "out", "workers", "env", "trace", "avf", "run"});
  ExperimentConfig c;
  try {
    read(doc, "seed", c.seed);
    read(doc, "out", c.out);
    read(doc, "workers", c.workers);
    if (doc.contains("env")) c.env = parse_env(doc.at("env"));
    if (doc.contains("trace")) {
      const auto& t = doc.at("trace");
      reject_unknown(t, "trace", {"T_train", "noise_levels", "keep_last_fraction", "path"});
      read(t, "T_train", c.trace.train_iterations);
      read(t, "noise_levels", c.trace.noise_levels);
      read(t, "keep_last_fraction", c.trace.keep_last_fraction);
      read(t, "path", c.trace.path);
    }
    if (doc.contains("avf")) {
      const auto& a = doc.at("avf");
      reject_unknown(a, "avf",
                     {"kind", "iterations", "step_size", "batch_size", "hidden", "neighbors", "embedding_width",
                      "embedding_hidden", "initial_pseudocount", "u_buckets", "x_scale", "f_min", "model_path"});
      auto& t = c.avf.train;
      if (a.contains("kind")) t.kind = avf_kind_from_string(a.at("kind").get<std::string>());
      read(a, "iterations", t.iterations);
      read(a, "step_size", t.step_size);
      read(a, "batch_size", t.batch_size);
      read(a, "hidden", t.hidden);
      read(a, "neighbors", t.neighbors);
      read(a, "embedding_width", t.embedding_width);
      read(a, "embedding_hidden", t.embedding_hidden);
      read(a, "initial_pseudocount", t.initial_pseudocount);
      read(a, "u_buckets", t.u_buckets);
      read(a, "x_scale", t.x_scale);
      read(a, "f_min", t.f_min);
      read(a, "model_path", c.avf.model_path);
    }
    if (doc.contains("run")) {
      const auto& r = doc.at("run");
      reject_unknown(r, "run",
                     {"agent", "adversary", "n", "repetitions", "replay_order", "budget", "estimator", "estimators",
                      "alpha", "m", "rho", "budgets", "trials", "k_min", "family"});
      if (r.contains("agent")) c.run.agent = parse_agent(r.at("agent"), "run.agent");
      read(r, "adversary", c.run.adversary);
      read(r, "n", c.run.n);
      read(r, "repetitions", c.run.repetitions);
      read(r, "replay_order", c.run.replay_order);
      read(r, "budget", c.run.budget);
      read(r, "estimator", c.run.estimator);
      read(r, "estimators", c.run.estimators);
      read(r, "alpha", c.run.alpha);
      read(r, "m", c.run.m);
      read(r, "rho", c.run.rho);
      read(r, "budgets", c.run.budgets);
      read(r, "trials", c.run.trials);
      read(r, "k_min", c.run.k_min);
      if (r.contains("family")) {
        const auto& f = r.at("family");
        reject_unknown(f, "run.family", {"count", "u_start", "u_end", "sigma", "bump_count", "bump_sigma"});
        read(f, "count", c.run.family.count);
        read(f, "u_start", c.run.family.u_start);
        read(f, "u_end", c.run.family.u_end);
        read(f, "sigma", c.run.family.sigma);
        read(f, "bump_count", c.run.family.bump_count);
        read(f, "bump_sigma", c.run.family.bump_sigma);
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["tool_version"] = tool_version;
  j["config_hash"] = config_hash;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["stage_seeds"] = stage_seeds;
  j["outputs"] = outputs;
  j["warnings"] = warnings;
  j["config"] = config;
  return j;
}

}  // namespace rare
