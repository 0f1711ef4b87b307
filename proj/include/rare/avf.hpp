#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rare/env.hpp"
#include "rare/trace.hpp"

namespace rare {

/// Any failure-probability predictor f(x, theta). Must be a pure function.
using Predictor = std::function<double(InitialCondition, const AgentParams&)>;

enum class AvfKind { Tabular, Parametric, Dnd };

std::string to_string(AvfKind kind);
AvfKind avf_kind_from_string(const std::string& name);

struct AvfTrainConfig {
  AvfKind kind = AvfKind::Parametric;
  std::int64_t iterations = 3000;
  double step_size = 1e-2;  // Adam learning rate
  std::int64_t batch_size = 256;
  std::vector<std::int64_t> hidden = {32, 32};
  // Dnd
  std::int64_t neighbors = 32;
  std::int64_t embedding_width = 16;
  std::int64_t embedding_hidden = 32;
  double initial_pseudocount = 1.0;
  // Tabular: u buckets per unit interval, crossed with exact sigma levels.
  std::int64_t u_buckets = 10;
  // x feature is x / x_scale.
  double x_scale = 16.0;
  double f_min = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense feedforward net, ReLU hidden units and a linear output layer.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // layer l maps width[l] -> width[l+1]
  std::vector<Eigen::VectorXd> biases;

  static Mlp random(std::span<const std::int64_t> widths, RandomStream& rng);
  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  [[nodiscard]] std::size_t layers() const noexcept { return weights.size(); }
};

struct TabularAvf {
  std::int64_t x_min = 0;
  std::int64_t x_count = 0;
  std::int64_t u_buckets = 10;
  std::vector<double> sigma_levels;
  std::vector<std::int64_t> failures;
  std::vector<std::int64_t> episodes;

  [[nodiscard]] std::int64_t u_bucket(double u) const noexcept;
  [[nodiscard]] std::size_t sigma_level(double sigma) const noexcept;
  /// -1 when x lies outside the trained range.
  [[nodiscard]] std::int64_t cell(InitialCondition x, const AgentParams& theta) const noexcept;
  /// Laplace-smoothed (k + 1) / (n + 2).
  [[nodiscard]] double raw(InitialCondition x, const AgentParams& theta) const noexcept;
};

struct ParametricAvf {
  Mlp net;
  double x_scale = 16.0;
  [[nodiscard]] double raw(InitialCondition x, const AgentParams& theta) const;
};

struct DndAvf {
  Mlp embed;
  double x_scale = 16.0;
  double pseudocount = 1.0;
  std::int64_t neighbors = 32;
  Eigen::MatrixXd keys;  // training features, 3 x N
  std::vector<std::uint8_t> labels;
  Eigen::MatrixXd key_embeddings;  // derived from keys; not serialized

  void refresh_embeddings();
  [[nodiscard]] double raw(InitialCondition x, const AgentParams& theta) const;
};

/// Trained predictor, output clamped to [f_min, 1]. Immutable after training.
class AvfModel {
 public:
  using Impl = std::variant<TabularAvf, ParametricAvf, DndAvf>;

  AvfModel(Impl impl, double f_min);

  [[nodiscard]] AvfKind kind() const noexcept;
  [[nodiscard]] double f_min() const noexcept { return f_min_; }
  [[nodiscard]] double predict(InitialCondition x, const AgentParams& theta) const;
  [[nodiscard]] Predictor predictor() const;
  [[nodiscard]] const Impl& impl() const noexcept { return impl_; }

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static AvfModel from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static AvfModel load(const std::filesystem::path& path);

 private:
  Impl impl_;
  double f_min_;
};

/// (x / x_scale, u, sigma / sigma_max)
Eigen::Vector3d avf_features(InitialCondition x, const AgentParams& theta, double x_scale);

AvfModel train_avf(const TrainingTrace& trace, const AvfTrainConfig& config);

/// (b + sum_{y_i = 1} w_i) / (2b + sum_i w_i)
double dnd_score(std::span<const double> weights, std::span<const std::uint8_t> labels, double pseudocount);

/// Gaussian kernel on embeddings, exp(-|a - b|^2 / 2).
double dnd_kernel(double squared_distance);

struct CalibrationBucket {
  double predicted_mean = 0.0;
  double empirical_rate = 0.0;
  std::int64_t count = 0;
};

struct AvfEvaluation {
  double cross_entropy = 0.0;
  std::int64_t episodes = 0;
  std::vector<CalibrationBucket> calibration;  // equal-count deciles by prediction

  /// Count-weighted mean |predicted - empirical| across buckets.
  [[nodiscard]] double calibration_gap() const;
};

AvfEvaluation evaluate_avf(const Predictor& model, const TrainingTrace& holdout);

/// Clamp to [f_min, 1]; f_min default matches AvfTrainConfig.
double clamp_probability(double raw, double f_min = 1e-6);

/// The exact f*, clamped to [f_min, 1] like a trained model would be.
Predictor exact_predictor(const EnvSpec& spec, double f_min = 1e-6);

/// f(., theta) at every support point, indexed by support position.
Eigen::ArrayXd tabulate(const Predictor& f, const EnvSpec& spec, const AgentParams& theta);

}  // namespace rare
