// rare-eval: command-line runner for failure search and rare-event risk estimation.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rare/config.hpp"
#include "rare/harness.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
  std::optional<double> alpha;
  std::optional<std::int64_t> n;
  std::vector<double> rho;
  std::optional<std::int64_t> budget;
  std::vector<std::int64_t> budgets;
  std::optional<std::int64_t> trials;
  std::optional<std::string> adversary;
  std::optional<std::string> estimator;
};

void apply(const Overrides& o, rare::ExperimentConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.workers) c.workers = *o.workers;
  if (o.alpha) c.run.alpha = *o.alpha;
  if (o.n) c.run.n = *o.n;
  if (!o.rho.empty()) c.run.rho = o.rho;
  if (o.budget) c.run.budget = *o.budget;
  if (!o.budgets.empty()) c.run.budgets = o.budgets;
  if (o.trials) c.run.trials = *o.trials;
  if (o.adversary) c.run.adversary = *o.adversary;
  if (o.estimator) {
    c.run.estimator = *o.estimator;
    c.run.estimators = {*o.estimator};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial failure search and rare-event risk estimation for stochastic policies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rare::kToolVersion));

  Overrides o;
  for (const auto& name : rare::kSubcommands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "worker threads (results do not depend on it)");
    sub->add_option("--alpha", o.alpha, "proposal exponent for the AVF estimator");
    sub->add_option("--n", o.n, "candidates per AVF adversary round");
    sub->add_option("--rho", o.rho, "accuracy ratio(s) for reliability curves")->delimiter(',');
    sub->add_option("--budget", o.budget, "episode cap per search / episodes per estimate");
    sub->add_option("--budgets", o.budgets, "budgets for curve and select")->delimiter(',');
    sub->add_option("--trials", o.trials, "independent trials per budget");
    sub->add_option("--adversary", o.adversary, "vmc | avf | pr")->check(CLI::IsMember({"vmc", "avf", "pr"}));
    sub->add_option("--estimator", o.estimator, "vmc | avf | combined")
        ->check(CLI::IsMember({"vmc", "avf", "combined"}));
  }

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  rare::ExperimentConfig config;
  try {
    if (!o.config_path.empty()) config = rare::load_config(o.config_path);
    apply(o, config);
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "rare-eval: invalid configuration: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto manifest = rare::run_subcommand(name, config);
    for (const auto& w : manifest.warnings) std::cerr << "rare-eval: warning: " << w << "\n";
    for (const auto& path : manifest.outputs) std::cout << path << "\n";
  } catch (const std::exception& e) {
    std::cerr << "rare-eval " << name << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
