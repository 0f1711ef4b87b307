// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rare/avf.hpp"
#include "rare/config.hpp"
#include "rare/estimate.hpp"
#include "rare/harness.hpp"
#include "rare/io.hpp"
#include "rare/oracle.hpp"
#include "rare/search.hpp"
#include "rare/selection.hpp"

using namespace rare;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Stats {
  double mean = 0, var = 0, se = 0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  const double n = double(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  for (double x : v) s.var += (x - s.mean) * (x - s.mean);
  s.var /= n - 1;
  s.se = std::sqrt(s.var / n);
  return s;
}

Predictor from_table(const EnvSpec& spec, Eigen::ArrayXd table) {
  return [spec, table = std::move(table)](InitialCondition x, const AgentParams&) {
    return table(spec.index_of(x));
  };
}

// Parametric model on AnalyticBernoulli M=256, shared by criteria 5, 7 and 8.
const AvfModel& large_model() {
  static const AvfModel model = [] {
    const auto spec = EnvSpec::analytic_bernoulli(256);
    const auto trace = simulate_training_run(spec, 1000000, {0.0, 0.1, 0.2, 0.3, 0.4}, RandomStream::keyed(1, "trace"));
    AvfTrainConfig config;
    config.iterations = 5000;
    config.batch_size = 512;
    config.seed = 1;
    return train_avf(filter_trace(trace, 0.5), config);
  }();
  return model;
}

Verdict unbiasedness() {
  const auto t0 = Clock::now();
  const auto spec = EnvSpec::analytic_bernoulli();
  const AgentParams theta{1, 0};
  const double p = exact_risk(spec, theta);
  const Eigen::ArrayXd fstar = true_failure_table(spec, theta);
  struct Model {
    std::string name;
    Predictor f;
  };
  const std::vector<Model> models = {
      {"1000f*", from_table(spec, (1000 * fstar).min(1.0))},
      {"(f*/max)^2", from_table(spec, (fstar / fstar.maxCoeff()).square().max(1e-6))},
      {"const0.3", from_table(spec, Eigen::ArrayXd::Constant(spec.M, 0.3))},
  };
  bool ok = true;
  double worst = 0, worst_sample = 0;
  for (const auto& m : models)
    for (double alpha : {0.25, 0.5, 1.0}) {
      EstimatorConfig config{EstimatorKind::Avf, m.f, alpha, Normalization::exact()};
      const PreparedEstimator est(config, spec, theta);
      std::vector<double> v(10000);
      for (std::size_t i = 0; i < v.size(); ++i) {
        auto rng = RandomStream::keyed(101, "unbiased/" + m.name + "/" + std::to_string(alpha), i);
        v[i] = est.run(50, rng).p_hat;
      }
      const auto s = stats(v);
      const auto q = normalized_proposal(support_density(spec), tabulate(m.f, spec, theta).pow(alpha));
      const double se = std::sqrt(exact_is_variance(spec, theta, q) / 50 / double(v.size()));
      const double z = std::abs(s.mean - p) / se;
      worst = std::max(worst, z);
      worst_sample = std::max(worst_sample, std::abs(s.mean - p) / s.se);
      if (!(z <= 3.0)) ok = false;
    }
  const double t = seconds_since(t0);
  return {ok && t <= 120, "9 combos, worst |mean-p|/SE = " + fmt("%.2f", worst) + " (sample-SE z " +
                              fmt("%.2f", worst_sample) + "), " + fmt("%.1f", t) + "s"};
}

Verdict variance_optimality() {
  bool ok = true;
  double worst_identity = 0, worst_ratio_gap = 0;
  double min_excess = 1e300;
  for (const auto& spec : {EnvSpec::analytic_bernoulli(), EnvSpec::cliff_walk()})
    for (const AgentParams theta : {AgentParams{1, 0}, AgentParams{0.3, 0.2}}) {
      const auto px = support_density(spec);
      const Eigen::ArrayXd f = true_failure_table(spec, theta);
      const double p = exact_risk(spec, theta);
      const double root = expectation(px, f.sqrt());
      const double opt = exact_is_variance(spec, theta, exact_optimal_proposal(spec, theta));
      worst_identity = std::max(worst_identity, std::abs(opt - (root * root - p * p)));
      for (double alpha : {0.0, 0.25, 1.0})
        for (double eps : {0.0, 0.1, -0.1}) {
          Eigen::ArrayXd g(f.size());
          for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = f(i) * (1 + eps * std::cos(1.7 * double(i)));
          const double v = exact_is_variance(spec, theta, normalized_proposal(px, g.pow(alpha)));
          min_excess = std::min(min_excess, (v - opt) / opt);
          if (!(v > opt)) ok = false;
        }
      for (double eps : {0.1, -0.1, 0.02}) {
        Eigen::ArrayXd g(f.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = f(i) * (1 + eps * std::cos(1.7 * double(i)));
        const double v = exact_is_variance(spec, theta, normalized_proposal(px, g.sqrt()));
        min_excess = std::min(min_excess, (v - opt) / opt);
        if (!(v > opt)) ok = false;
      }
    }
  if (!(worst_identity <= 1e-12)) ok = false;

  struct Setting {
    EnvSpec spec;
    AgentParams theta;
  };
  for (const auto& [spec, theta] : {Setting{EnvSpec::analytic_bernoulli(), {0.0, 0}}, Setting{EnvSpec::cliff_walk(), {0.0, 0}}}) {
    const auto model = exact_predictor(spec);
    const Eigen::ArrayXd fa = tabulate(model, spec, theta).sqrt();
    const double oracle = exact_is_variance(spec, theta, normalized_proposal(support_density(spec), fa)) / 50;
    std::vector<double> v(10000);
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto rng = RandomStream::keyed(202, "variance/" + to_string(spec.kind), i);
      v[i] = avf_is_estimate_table(spec, theta, fa, 50, Normalization::exact(), rng).p_hat;
    }
    const double gap = std::abs(stats(v).var / oracle - 1);
    worst_ratio_gap = std::max(worst_ratio_gap, gap);
    if (!(gap <= 0.15)) ok = false;
  }
  return {ok, "identity err " + fmt("%.1e", worst_identity) + ", min grid excess " + fmt("%.3g", min_excess) +
                  ", empirical variance off by " + fmt("%.1f%%", 100 * worst_ratio_gap)};
}

Verdict rejection_sampling() {
  bool ok = true;
  double worst = 0;
  struct Case {
    EnvSpec spec;
    Eigen::ArrayXd f;
  };
  const auto ab = EnvSpec::analytic_bernoulli();
  Eigen::ArrayXd geometric(ab.M);
  for (Eigen::Index i = 0; i < ab.M; ++i) geometric(i) = std::pow(2.0, -double(i));
  const auto cw = EnvSpec::cliff_walk();
  const Eigen::ArrayXd cliff = tabulate(exact_predictor(cw), cw, {0.5, 0});
  for (const auto& c : {Case{ab, geometric}, Case{cw, cliff}})
    for (double alpha : {0.25, 0.5, 1.0}) {
      const Eigen::ArrayXd fa = c.f.pow(alpha);
      const auto q = normalized_proposal(support_density(c.spec), fa);
      Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(c.spec.M);
      auto rng = RandomStream::keyed(303, "rejection/" + to_string(c.spec.kind), std::uint64_t(alpha * 100));
      std::int64_t rejected = 0;
      const int n = 100000;
      for (int i = 0; i < n; ++i) counts(c.spec.index_of(sample_proposal(c.spec, fa, rng, rejected))) += 1;
      const double tv = 0.5 * (counts / n - q.density).abs().sum();
      worst = std::max(worst, tv);
      if (!(tv <= 0.01)) ok = false;
    }
  return {ok, "2 models x 3 alphas, worst TV = " + fmt("%.4f", worst)};
}

Verdict search_acceleration() {
  const auto t0 = Clock::now();
  const auto spec = EnvSpec::analytic_bernoulli(256);
  const AgentParams theta{1, 0};
  const double p = exact_risk(spec, theta);
  const Eigen::ArrayXd fstar = true_failure_table(spec, theta);
  std::vector<double> factors;
  std::int64_t min_successes = 1 << 30;
  std::ostringstream table;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto trace = simulate_training_run(spec, 100000, {0.0, 0.1, 0.2, 0.3, 0.4}, RandomStream::keyed(seed, "trace"));
    AvfTrainConfig config;
    config.kind = AvfKind::Tabular;
    config.u_buckets = 1;
    const auto model = train_avf(trace, config);
    const Eigen::ArrayXd scores = tabulate(model.predictor(), spec, theta);
    std::vector<SearchResult> runs(220);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      auto rng = RandomStream::keyed(seed, "search/avf", i);
      runs[i] = avf_search_table(spec, theta, scores, 256, 100'000'000, rng);
    }
    const auto cost = empirical_search_cost(runs);
    min_successes = std::min(min_successes, cost.successes);
    factors.push_back((1 / p) / cost.mean);
    table << "    seed " << seed << ": VMC cost " << fmt("%.0f", 1 / p) << ", AVF cost " << fmt("%.0f", cost.mean)
          << " +- " << fmt("%.0f", cost.std_error) << ", acceleration " << fmt("%.1f", factors.back())
          << " (oracle for this model " << fmt("%.1f", avf_adversary_failure_probability(scores, fstar, 256) / p)
          << ")\n";
  }
  const auto s = summarize_acceleration(factors);
  const double t = seconds_since(t0);
  std::cout << "  Failure search, AnalyticBernoulli M=256, n=256\n"
            << "    " << "              min      median   max\n"
            << "    acceleration  " << fmt("%-8.1f", s.min) << " " << fmt("%-8.1f", s.median) << " "
            << fmt("%-8.1f", s.max) << "\n"
            << table.str();
  return {s.min >= 50 && min_successes >= 200 && t <= 300,
          "acceleration min/median/max = " + fmt("%.1f", s.min) + "/" + fmt("%.1f", s.median) + "/" +
              fmt("%.1f", s.max) + ", " + std::to_string(min_successes) + "+ successes per seed, " + fmt("%.1f", t) +
              "s"};
}

std::vector<std::int64_t> geometric_grid(double lo, double hi) {
  std::vector<std::int64_t> out;
  for (double b = lo; b <= hi * 1.0001; b *= 1.5) out.push_back(static_cast<std::int64_t>(b));
  return out;
}

Verdict reliability_curves_check() {
  const auto t0 = Clock::now();
  const auto spec = EnvSpec::analytic_bernoulli(256);
  const AgentParams theta{0.7, 0};
  const double p = exact_risk(spec, theta);
  const std::vector<double> rhos = {2, 3, 5};
  EstimatorConfig vmc{EstimatorKind::Vmc};
  EstimatorConfig avf{EstimatorKind::Avf, large_model().predictor(), 0.5};
  const auto vmc_curves = reliability_curves(vmc, spec, theta, p, rhos, geometric_grid(300, 1e6), 200, 7);
  const auto avf_curves = reliability_curves(avf, spec, theta, p, rhos, geometric_grid(300, 4e4), 200, 7);
  std::vector<ReliabilityCurve> all = vmc_curves;
  all.insert(all.end(), avf_curves.begin(), avf_curves.end());
  const auto out = fs::temp_directory_path() / "rare_eval_acceptance" / "reliability_curves.csv";
  write_csv(curves_csv(all), out);
  std::string detail;
  bool ok = true;
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    const auto bv = first_budget_below(vmc_curves[r], 0.05);
    const auto ba = first_budget_below(avf_curves[r], 0.05);
    detail += "rho=" + fmt("%g", rhos[r]) + ": VMC " + (bv ? std::to_string(*bv) : std::string(">1e6")) + ", AVF " +
              (ba ? std::to_string(*ba) : std::string(">4e4")) + "; ";
    if (rhos[r] == 3) ok = bv && ba && *bv >= 10 * *ba;
  }
  const double t = seconds_since(t0);
  return {ok && t <= 600, detail + fmt("%.1f", t) + "s, csv " + out.string()};
}

Verdict scalar_checks() {
  const double miss = miss_probability(1.0 / 110000, 300000);
  const auto h = hoeffding_sample_size(1, 0.1, 0.05);
  const std::vector<double> w(4, 0.0);
  const std::vector<std::uint8_t> y = {1, 0, 0, 1};
  const double d = dnd_score(w, y, 0.7);
  return {miss > 0.05 && h == 150 && d == 0.5,
          "miss_probability = " + fmt("%.4f", miss) + ", hoeffding = " + std::to_string(h) + ", dnd = " + fmt("%g", d)};
}

Verdict combined_bound() {
  struct Env {
    std::string name;
    EnvSpec spec;
    AgentParams theta;
    Predictor model;
    std::int64_t T;
  };
  std::vector<Env> battery;
  const auto ab = EnvSpec::analytic_bernoulli();
  battery.push_back({"ab16 u=0.3", ab, {0.3, 0}, exact_predictor(ab), 400});
  battery.push_back({"ab16 u=1", ab, {1, 0}, exact_predictor(ab), 2000});
  const auto ab256 = EnvSpec::analytic_bernoulli(256);
  battery.push_back({"ab256 u=0.7 trained", ab256, {0.7, 0}, large_model().predictor(), 5000});
  const auto cw = EnvSpec::cliff_walk();
  battery.push_back({"cliff u=1", cw, {1, 0}, exact_predictor(cw), 400});
  battery.push_back({"cliff u=0 sigma=0.4", cw, {0, 0.4}, exact_predictor(cw), 100});
  auto shallow = EnvSpec::cliff_walk();
  shallow.horizon = 6;
  Eigen::ArrayXd bad = Eigen::ArrayXd::Constant(shallow.M, 1e-6);
  bad(shallow.M - 1) = 1.0;  // x = 12 cannot reach the cliff in 6 steps
  battery.push_back({"cliff H=6 miscalibrated", shallow, {0.2, 0}, from_table(shallow, bad), 1000});

  bool ok = true;
  std::string detail;
  for (const auto& e : battery) {
    const double p = exact_risk(e.spec, e.theta);
    const PreparedEstimator vmc({EstimatorKind::Vmc}, e.spec, e.theta);
    const PreparedEstimator comb({EstimatorKind::Combined, e.model, 0.5}, e.spec, e.theta);
    std::vector<double> ev(2000), ec(2000);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      auto r1 = RandomStream::keyed(707, "battery/vmc/" + e.name, i);
      auto r2 = RandomStream::keyed(707, "battery/combined/" + e.name, i);
      ev[i] = std::abs(vmc.run(e.T, r1).p_hat - p) / p;
      ec[i] = std::abs(comb.run(e.T, r2).p_hat - p) / p;
    }
    const auto sv = stats(ev), sc = stats(ec);
    const double slack = 2 * std::sqrt(sc.se * sc.se + 4 * sv.se * sv.se);
    const bool pass = sc.mean - 2 * sv.mean <= slack;
    ok = ok && pass;
    detail += e.name + " " + fmt("%.3f", sc.mean) + "/" + fmt("%.3f", sv.mean) + (pass ? "" : "!") + "; ";
  }
  return {ok, "MARE combined/VMC: " + detail};
}

Verdict model_selection() {
  const auto t0 = Clock::now();
  const auto spec = EnvSpec::analytic_bernoulli(256);
  FamilyBlock block{50, 0.0, 0.5, 0.0, 10, 0.1};
  const auto family = block.agents();
  double p_min = 1.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < family.size(); ++i)
    if (const double p = exact_risk(spec, family[i]); p < p_min) {
      p_min = p;
      best = i;
    }
  const double optimum = 1 / p_min;
  const double last = 1 / exact_risk(spec, family.back());
  const std::vector<EstimatorConfig> vmc = {{EstimatorKind::Vmc}};
  const std::vector<EstimatorConfig> avf = {{EstimatorKind::Avf, large_model().predictor(), 0.5}};
  const std::vector<std::int64_t> vb = {2500, 5000, 10000, 30000, 100000, 300000, 1000000, 3000000, 10000000, 20000000};
  const std::vector<std::int64_t> ab = {2500, 5000, 10000, 30000, 100000, 300000, 1000000};
  const auto rv = selection_experiment(spec, family, vmc, vb, 20, 3);
  const auto ra = selection_experiment(spec, family, avf, ab, 20, 3);
  std::vector<SelectionRow> rows = rv;
  rows.insert(rows.end(), ra.begin(), ra.end());
  write_csv(selection_csv(rows), fs::temp_directory_path() / "rare_eval_acceptance" / "selection.csv");

  double best_ratio = 0;
  std::int64_t at = 0;
  for (std::size_t i = 1; i + 1 < ab.size(); ++i) {  // budgets strictly inside the shared range
    const double ratio = ra[i].robustness_mean / rv[i].robustness_mean;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      at = ab[i];
    }
  }
  const double vmc_end = rv.back().robustness_mean / optimum, avf_end = ra.back().robustness_mean / optimum;
  const double t = seconds_since(t0);
  const bool ok = best_ratio >= 3 && vmc_end >= 0.9 && avf_end >= 0.9 && ra[ab.size() / 2].robustness_mean > last &&
                  t <= 600;
  return {ok, "optimum agent " + std::to_string(best) + " robustness " + fmt("%.0f", optimum) + "; AVF/VMC " +
                  fmt("%.2f", best_ratio) + "x at budget " + std::to_string(at) + "; at largest budget VMC " +
                  fmt("%.3f", vmc_end) + ", AVF " + fmt("%.3f", avf_end) + " of optimum; " + fmt("%.1f", t) + "s"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RARE_EVAL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism() {
  const auto root = fs::temp_directory_path() / "rare_eval_acceptance" / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const nlohmann::json base = {
      {"seed", 9},
      {"trace", {{"T_train", 20000}}},
      {"avf", {{"iterations", 300}}},
      {"run",
       {{"repetitions", 8},
        {"budget", 20000},
        {"trials", 40},
        {"budgets", {300, 3000}},
        {"estimators", {"vmc", "avf", "combined"}},
        {"family", {{"count", 5}, {"u_start", 0.0}, {"u_end", 0.5}}}}}};
  struct Variant {
    std::string name;
    nlohmann::json patch;
  };
  std::vector<Variant> variants = {{"parametric", nlohmann::json::object()},
                                   {"tabular", {{"avf", {{"kind", "tabular"}}}}},
                                   {"dnd", {{"avf", {{"kind", "dnd"}, {"iterations", 30}}}, {"trace", {{"T_train", 3000}}}}},
                                   {"cliff", {{"env", {{"kind", "cliff_walk"}, {"M", 12}}}, {"run", {{"agent", {{"u", 0.3}, {"sigma", 0.0}}}}}}}};
  std::size_t compared = 0, mismatched = 0;
  std::string failures;
  for (const auto& v : variants) {
    nlohmann::json doc = base;
    doc.merge_patch(v.patch);
    const auto cfg = root / (v.name + ".json");
    std::ofstream(cfg) << doc.dump(2);
    const std::vector<std::pair<std::string, std::string>> runs = {{"a", "--workers 1"}, {"b", "--workers 1"}, {"c", "--workers 3"}};
    for (const auto& [dir, workers] : runs) {
      const auto out = root / v.name / dir;
      for (const auto& sub : kSubcommands) {
        if (run_cli(sub + " --config " + cfg.string() + " " + workers + " --out " + out.string()) != 0) {
          failures += v.name + "/" + sub + " exited nonzero; ";
          ++mismatched;
        }
        if (sub == "search")
          for (const char* adv : {"vmc", "pr"}) {
            const auto alt = root / v.name / (dir + std::string("_") + adv);
            const std::string prefix = "search --adversary " + std::string(adv) + " --config " + cfg.string() + " " +
                                       workers + " --out " + alt.string();
            fs::create_directories(alt);
            fs::copy_file(out / "trace.jsonl", alt / "trace.jsonl", fs::copy_options::overwrite_existing);
            if (run_cli(prefix) != 0) ++mismatched;
          }
      }
    }
    for (const auto& entry : fs::recursive_directory_iterator(root / v.name / "a")) {
      if (!entry.is_regular_file()) continue;
      const auto name = entry.path().filename().string();
      if (name.rfind("manifest_", 0) == 0) continue;  // wall-clock time differs by design
      const auto rel = fs::relative(entry.path(), root / v.name / "a");
      const std::string bytes = read_file(entry.path());
      for (const char* other : {"b", "c"}) {
        ++compared;
        if (read_file(root / v.name / other / rel) != bytes) {
          ++mismatched;
          failures += v.name + "/" + other + "/" + rel.string() + " differs; ";
        }
      }
    }
    for (const char* adv : {"vmc", "pr"}) {
      const auto rel = fs::path("search.jsonl");
      const std::string bytes = read_file(root / v.name / ("a_" + std::string(adv)) / rel);
      for (const char* other : {"b", "c"}) {
        ++compared;
        if (read_file(root / v.name / (other + std::string("_") + adv) / rel) != bytes) ++mismatched;
      }
    }
  }
  return {mismatched == 0 && compared > 0,
          std::to_string(compared) + " output files compared across reruns and worker counts 1/3, " +
              std::to_string(mismatched) + " mismatches" + (failures.empty() ? "" : ": " + failures)};
}

}  // namespace

int main() {
  fs::create_directories(fs::temp_directory_path() / "rare_eval_acceptance");
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 unbiasedness", unbiasedness},
      {"2 variance optimality", variance_optimality},
      {"3 rejection sampling", rejection_sampling},
      {"4 search acceleration", search_acceleration},
      {"5 reliability curves", reliability_curves_check},
      {"6 scalar checks", scalar_checks},
      {"7 combined estimator bound", combined_bound},
      {"8 model selection", model_selection},
      {"9 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    failed += v.pass ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
