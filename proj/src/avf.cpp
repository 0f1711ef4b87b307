#include "rare/avf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rare/io.hpp"

namespace rare {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatTag = "rare-eval-avf";

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;

  Adam(const Mlp& net, double step) : lr(step) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      m_w.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      v_w.push_back(m_w.back());
      m_b.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
      v_b.push_back(m_b.back());
    }
  }

  template <typename Param, typename Grad>
  void update(Param& param, const Grad& grad, Param& m, Param& v, double c1, double c2) const {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void step(Mlp& net, const std::vector<Eigen::MatrixXd>& g_w, const std::vector<Eigen::VectorXd>& g_b) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t l = 0; l < net.layers(); ++l) {
      update(net.weights[l], g_w[l], m_w[l], v_w[l], c1, c2);
      update(net.biases[l], g_b[l], m_b[l], v_b[l], c1, c2);
    }
  }
};

/// Cosine decay from the base rate down to 5% of it.
double scheduled_rate(double base, std::int64_t it, std::int64_t iterations) {
  const double progress = iterations > 0 ? static_cast<double>(it) / static_cast<double>(iterations) : 0.0;
  return base * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

struct ScalarAdam {
  double lr, m = 0.0, v = 0.0;
  std::int64_t t = 0;
  void step(double& param, double grad) {
    ++t;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    param -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

/// Forward pass keeping post-activation values; acts[0] is the input.
void forward_cached(const Mlp& net, const Eigen::MatrixXd& input, std::vector<Eigen::MatrixXd>& acts) {
  acts.resize(net.layers() + 1);
  acts[0] = input;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    acts[l + 1] = (net.weights[l] * acts[l]).colwise() + net.biases[l];
    if (l + 1 < net.layers()) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }
}

void backward(const Mlp& net, const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd delta,
              std::vector<Eigen::MatrixXd>& g_w, std::vector<Eigen::VectorXd>& g_b) {
  const std::size_t L = net.layers();
  g_w.resize(L);
  g_b.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    g_w[l] = delta * acts[l].transpose();
    g_b[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (net.weights[l].transpose() * delta).cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
}

Eigen::MatrixXd trace_features(const TrainingTrace& trace, double x_scale) {
  Eigen::MatrixXd features(3, static_cast<Eigen::Index>(trace.size()));
  for (std::size_t i = 0; i < trace.size(); ++i)
    features.col(static_cast<Eigen::Index>(i)) = avf_features(trace.records[i].x, trace.records[i].theta, x_scale);
  return features;
}

/// Indices of the k smallest entries of d2 under the total order (d2, index).
std::vector<Eigen::Index> nearest(const Eigen::RowVectorXd& d2, std::int64_t k) {
  std::vector<std::pair<double, Eigen::Index>> entries(static_cast<std::size_t>(d2.size()));
  for (Eigen::Index i = 0; i < d2.size(); ++i) entries[static_cast<std::size_t>(i)] = {d2(i), i};
  const auto kk = static_cast<std::size_t>(std::min<std::int64_t>(k, d2.size()));
  std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(kk), entries.end());
  entries.resize(kk);
  std::sort(entries.begin(), entries.end());
  std::vector<Eigen::Index> idx;
  idx.reserve(kk);
  for (const auto& e : entries) idx.push_back(e.second);
  return idx;
}

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::runtime_error("model: matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

nlohmann::ordered_json mlp_json(const Mlp& net) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    nlohmann::ordered_json layer;
    layer["weights"] = matrix_json(net.weights[l]);
    layer["bias"] = std::vector<double>(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
    layers.push_back(std::move(layer));
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& layer : j) {
    net.weights.push_back(matrix_from_json(layer.at("weights")));
    const auto b = layer.at("bias").get<std::vector<double>>();
    net.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  }
  return net;
}

AvfModel train_tabular(const TrainingTrace& trace, const AvfTrainConfig& config) {
  TabularAvf tab;
  tab.u_buckets = config.u_buckets;
  auto [lo, hi] = std::minmax_element(trace.records.begin(), trace.records.end(),
                                      [](const auto& a, const auto& b) { return a.x.value < b.x.value; });
  tab.x_min = lo->x.value;
  tab.x_count = hi->x.value - lo->x.value + 1;
  for (const auto& r : trace.records) tab.sigma_levels.push_back(r.theta.sigma);
  std::sort(tab.sigma_levels.begin(), tab.sigma_levels.end());
  tab.sigma_levels.erase(std::unique(tab.sigma_levels.begin(), tab.sigma_levels.end()), tab.sigma_levels.end());
  const auto cells = static_cast<std::size_t>(tab.x_count * tab.u_buckets) * tab.sigma_levels.size();
  tab.failures.assign(cells, 0);
  tab.episodes.assign(cells, 0);
  for (const auto& r : trace.records) {
    const auto c = static_cast<std::size_t>(tab.cell(r.x, r.theta));
    ++tab.episodes[c];
    if (r.failed) ++tab.failures[c];
  }
  return AvfModel(std::move(tab), config.f_min);
}

AvfModel train_parametric(const TrainingTrace& trace, const AvfTrainConfig& config) {
  RandomStream rng = RandomStream::keyed(config.seed, "avf/parametric");
  std::vector<std::int64_t> widths{3};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(1);
  RandomStream init = rng.derive("init");
  ParametricAvf model{Mlp::random(widths, init), config.x_scale};
  const double rate = static_cast<double>(trace.failures()) / static_cast<double>(trace.size());
  model.net.biases.back()(0) = std::log(rate / (1.0 - rate));

  const Eigen::MatrixXd features = trace_features(trace, config.x_scale);
  const auto n = static_cast<std::uint64_t>(trace.size());
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  Adam adam(model.net, config.step_size);
  Eigen::MatrixXd inputs(3, batch);
  Eigen::RowVectorXd labels(batch);
  std::vector<Eigen::MatrixXd> acts, g_w;
  std::vector<Eigen::VectorXd> g_b;
  RandomStream sampler = rng.derive("batches");
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      const auto i = sampler.below(n);
      inputs.col(j) = features.col(static_cast<Eigen::Index>(i));
      labels(j) = trace.records[i].failed ? 1.0 : 0.0;
    }
    forward_cached(model.net, inputs, acts);
    Eigen::MatrixXd delta = acts.back().unaryExpr([](double z) { return sigmoid(z); });
    delta.row(0) -= labels;
    delta /= static_cast<double>(batch);
    backward(model.net, acts, std::move(delta), g_w, g_b);
    adam.lr = scheduled_rate(config.step_size, it, config.iterations);
    adam.step(model.net, g_w, g_b);
  }
  return AvfModel(std::move(model), config.f_min);
}

AvfModel train_dnd(const TrainingTrace& trace, const AvfTrainConfig& config) {
  RandomStream rng = RandomStream::keyed(config.seed, "avf/dnd");
  RandomStream init = rng.derive("init");
  const std::vector<std::int64_t> widths{3, config.embedding_hidden, config.embedding_width};
  DndAvf model;
  model.embed = Mlp::random(widths, init);
  model.x_scale = config.x_scale;
  model.neighbors = config.neighbors;
  model.keys = trace_features(trace, config.x_scale);
  model.labels.reserve(trace.size());
  for (const auto& r : trace.records) model.labels.push_back(r.failed ? 1 : 0);

  const auto n = static_cast<Eigen::Index>(trace.size());
  if (n < 2) throw TrainingError("dnd: need at least two training records for leave-self-out neighbors");
  const std::int64_t k = std::min<std::int64_t>(config.neighbors, n - 1);
  double log_b = std::log(config.initial_pseudocount);
  Adam adam(model.embed, config.step_size);
  ScalarAdam adam_b{config.step_size};
  RandomStream sampler = rng.derive("batches");
  const auto batch = config.batch_size;
  std::vector<Eigen::MatrixXd> acts, g_w;
  std::vector<Eigen::VectorXd> g_b;

  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const Eigen::MatrixXd emb = model.embed.forward(model.keys);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(emb.rows(), n);
    std::vector<char> touched(static_cast<std::size_t>(n), 0);
    const double b = std::exp(log_b);
    double grad_b = 0.0;
    for (std::int64_t j = 0; j < batch; ++j) {
      const auto q = static_cast<Eigen::Index>(sampler.below(static_cast<std::uint64_t>(n)));
      Eigen::RowVectorXd d2 = (emb.colwise() - emb.col(q)).colwise().squaredNorm();
      d2(q) = std::numeric_limits<double>::infinity();
      const auto nbrs = nearest(d2, k);
      double hit = 0.0, total = 0.0;
      std::vector<double> w(nbrs.size());
      for (std::size_t i = 0; i < nbrs.size(); ++i) {
        w[i] = dnd_kernel(d2(nbrs[i]));
        total += w[i];
        if (model.labels[static_cast<std::size_t>(nbrs[i])]) hit += w[i];
      }
      const double denom = 2.0 * b + total;
      const double p = (b + hit) / denom;
      const double y = model.labels[static_cast<std::size_t>(q)] ? 1.0 : 0.0;
      const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
      const double dloss_dp = -y / pc + (1.0 - y) / (1.0 - pc);
      grad_b += dloss_dp * (1.0 - 2.0 * p) / denom;
      touched[static_cast<std::size_t>(q)] = 1;
      for (std::size_t i = 0; i < nbrs.size(); ++i) {
        const Eigen::Index nb = nbrs[i];
        const double yi = model.labels[static_cast<std::size_t>(nb)] ? 1.0 : 0.0;
        const double dloss_dw = dloss_dp * (yi - p) / denom;
        const Eigen::VectorXd diff = emb.col(q) - emb.col(nb);
        grad.col(q) -= dloss_dw * w[i] * diff;
        grad.col(nb) += dloss_dw * w[i] * diff;
        touched[static_cast<std::size_t>(nb)] = 1;
      }
    }
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < n; ++i)
      if (touched[static_cast<std::size_t>(i)]) cols.push_back(i);
    Eigen::MatrixXd sub_in(3, static_cast<Eigen::Index>(cols.size()));
    Eigen::MatrixXd sub_grad(emb.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      sub_in.col(static_cast<Eigen::Index>(c)) = model.keys.col(cols[c]);
      sub_grad.col(static_cast<Eigen::Index>(c)) = grad.col(cols[c]) / static_cast<double>(batch);
    }
    forward_cached(model.embed, sub_in, acts);
    backward(model.embed, acts, std::move(sub_grad), g_w, g_b);
    adam.lr = adam_b.lr = scheduled_rate(config.step_size, it, config.iterations);
    adam.step(model.embed, g_w, g_b);
    adam_b.step(log_b, grad_b / static_cast<double>(batch) * b);
  }
  model.pseudocount = std::exp(log_b);
  model.refresh_embeddings();
  return AvfModel(std::move(model), config.f_min);
}

}  // namespace

std::string to_string(AvfKind kind) {
  switch (kind) {
    case AvfKind::Tabular: return "tabular";
    case AvfKind::Parametric: return "parametric";
    case AvfKind::Dnd: return "dnd";
  }
  return "unknown";
}

AvfKind avf_kind_from_string(const std::string& name) {
  if (name == "tabular") return AvfKind::Tabular;
  if (name == "parametric") return AvfKind::Parametric;
  if (name == "dnd") return AvfKind::Dnd;
  throw std::invalid_argument("unknown AVF kind '" + name + "'");
}

void AvfTrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("avf: iterations must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("avf: batch_size must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("avf: step_size must be > 0");
  if (neighbors < 1) throw std::invalid_argument("avf: K (neighbors) must be >= 1");
  if (embedding_width < 1 || embedding_hidden < 1) throw std::invalid_argument("avf: embedding sizes must be >= 1");
  if (!(initial_pseudocount > 0.0)) throw std::invalid_argument("avf: initial pseudocount must be > 0");
  if (u_buckets < 1) throw std::invalid_argument("avf: u_buckets must be >= 1");
  if (!(x_scale > 0.0)) throw std::invalid_argument("avf: x_scale must be > 0");
  if (!(f_min > 0.0 && f_min < 1.0)) throw std::invalid_argument("avf: f_min must lie in (0, 1)");
  for (auto h : hidden)
    if (h < 1) throw std::invalid_argument("avf: hidden widths must be >= 1");
}

Mlp Mlp::random(std::span<const std::int64_t> widths, RandomStream& rng) {
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto fan_in = widths[l], fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = limit * (2.0 * rng.uniform() - 1.0);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers(); ++l) {
    Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
    a = l + 1 < layers() ? z.cwiseMax(0.0) : z;
  }
  return a;
}

Eigen::Vector3d avf_features(InitialCondition x, const AgentParams& theta, double x_scale) {
  return {static_cast<double>(x.value) / x_scale, theta.u, theta.sigma / kSigmaMax};
}

double clamp_probability(double raw, double f_min) {
  if (std::isnan(raw)) return f_min;
  return std::clamp(raw, f_min, 1.0);
}

std::int64_t TabularAvf::u_bucket(double u) const noexcept {
  const auto b = static_cast<std::int64_t>(std::floor(u * static_cast<double>(u_buckets)));
  return std::clamp<std::int64_t>(b, 0, u_buckets - 1);
}

std::size_t TabularAvf::sigma_level(double sigma) const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < sigma_levels.size(); ++i)
    if (std::abs(sigma_levels[i] - sigma) < std::abs(sigma_levels[best] - sigma)) best = i;
  return best;
}

std::int64_t TabularAvf::cell(InitialCondition x, const AgentParams& theta) const noexcept {
  const std::int64_t xi = x.value - x_min;
  if (xi < 0 || xi >= x_count || sigma_levels.empty()) return -1;
  const auto levels = static_cast<std::int64_t>(sigma_levels.size());
  return (xi * u_buckets + u_bucket(theta.u)) * levels + static_cast<std::int64_t>(sigma_level(theta.sigma));
}

double TabularAvf::raw(InitialCondition x, const AgentParams& theta) const noexcept {
  const auto c = cell(x, theta);
  if (c < 0) return 0.5;
  const auto k = static_cast<double>(failures[static_cast<std::size_t>(c)]);
  const auto n = static_cast<double>(episodes[static_cast<std::size_t>(c)]);
  return (k + 1.0) / (n + 2.0);
}

double ParametricAvf::raw(InitialCondition x, const AgentParams& theta) const {
  const Eigen::MatrixXd out = net.forward(avf_features(x, theta, x_scale));
  return sigmoid(out(0, 0));
}

void DndAvf::refresh_embeddings() { key_embeddings = embed.forward(keys); }

double DndAvf::raw(InitialCondition x, const AgentParams& theta) const {
  const Eigen::VectorXd e = embed.forward(avf_features(x, theta, x_scale));
  const Eigen::RowVectorXd d2 = (key_embeddings.colwise() - e).colwise().squaredNorm();
  const auto nbrs = nearest(d2, neighbors);
  std::vector<double> w;
  std::vector<std::uint8_t> y;
  for (auto i : nbrs) {
    w.push_back(dnd_kernel(d2(i)));
    y.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return dnd_score(w, y, pseudocount);
}

Predictor exact_predictor(const EnvSpec& spec, double f_min) {
  return [spec, f_min](InitialCondition x, const AgentParams& theta) {
    return clamp_probability(true_failure_prob(spec, x, theta), f_min);
  };
}

Eigen::ArrayXd tabulate(const Predictor& f, const EnvSpec& spec, const AgentParams& theta) {
  Eigen::ArrayXd table(spec.M);
  for (std::int64_t i = 0; i < spec.M; ++i) table(i) = f(spec.state(i), theta);
  return table;
}

double dnd_kernel(double squared_distance) { return std::exp(-0.5 * squared_distance); }

double dnd_score(std::span<const double> weights, std::span<const std::uint8_t> labels, double pseudocount) {
  if (weights.size() != labels.size()) throw std::invalid_argument("dnd_score: weights and labels differ in length");
  if (!(pseudocount > 0.0)) throw std::invalid_argument("dnd_score: pseudocount must be > 0");
  double hit = 0.0, total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("dnd_score: negative weight");
    total += weights[i];
    if (labels[i]) hit += weights[i];
  }
  return (pseudocount + hit) / (2.0 * pseudocount + total);
}

AvfModel::AvfModel(Impl impl, double f_min) : impl_(std::move(impl)), f_min_(f_min) {}

AvfKind AvfModel::kind() const noexcept { return static_cast<AvfKind>(impl_.index()); }

double AvfModel::predict(InitialCondition x, const AgentParams& theta) const {
  const double raw = std::visit([&](const auto& m) { return m.raw(x, theta); }, impl_);
  return clamp_probability(raw, f_min_);
}

Predictor AvfModel::predictor() const {
  return [this](InitialCondition x, const AgentParams& theta) { return predict(x, theta); };
}

nlohmann::ordered_json AvfModel::to_json() const {
  nlohmann::ordered_json doc;
  doc["format"] = kFormatTag;
  doc["version"] = kFormatVersion;
  doc["kind"] = to_string(kind());
  doc["f_min"] = f_min_;
  if (const auto* tab = std::get_if<TabularAvf>(&impl_)) {
    doc["x_min"] = tab->x_min;
    doc["x_count"] = tab->x_count;
    doc["u_buckets"] = tab->u_buckets;
    doc["sigma_levels"] = tab->sigma_levels;
    doc["failures"] = tab->failures;
    doc["episodes"] = tab->episodes;
  } else if (const auto* par = std::get_if<ParametricAvf>(&impl_)) {
    doc["x_scale"] = par->x_scale;
    doc["layers"] = mlp_json(par->net);
  } else {
    const auto& dnd = std::get<DndAvf>(impl_);
    doc["x_scale"] = dnd.x_scale;
    doc["pseudocount"] = dnd.pseudocount;
    doc["neighbors"] = dnd.neighbors;
    doc["layers"] = mlp_json(dnd.embed);
    doc["keys"] = matrix_json(dnd.keys);
    doc["labels"] = dnd.labels;
  }
  return doc;
}

AvfModel AvfModel::from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string{}) != kFormatTag) throw std::runtime_error("model: not an AVF model file");
  if (doc.at("version").get<int>() != kFormatVersion)
    throw std::runtime_error("model: unsupported version " + doc.at("version").dump());
  const double f_min = doc.at("f_min").get<double>();
  switch (avf_kind_from_string(doc.at("kind").get<std::string>())) {
    case AvfKind::Tabular: {
      TabularAvf tab;
      tab.x_min = doc.at("x_min").get<std::int64_t>();
      tab.x_count = doc.at("x_count").get<std::int64_t>();
      tab.u_buckets = doc.at("u_buckets").get<std::int64_t>();
      tab.sigma_levels = doc.at("sigma_levels").get<std::vector<double>>();
      tab.failures = doc.at("failures").get<std::vector<std::int64_t>>();
      tab.episodes = doc.at("episodes").get<std::vector<std::int64_t>>();
      const auto cells = static_cast<std::size_t>(tab.x_count * tab.u_buckets) * tab.sigma_levels.size();
      if (tab.failures.size() != cells || tab.episodes.size() != cells)
        throw std::runtime_error("model: tabular cell count mismatch");
      return AvfModel(std::move(tab), f_min);
    }
    case AvfKind::Parametric:
      return AvfModel(ParametricAvf{mlp_from_json(doc.at("layers")), doc.at("x_scale").get<double>()}, f_min);
    case AvfKind::Dnd: {
      DndAvf dnd;
      dnd.x_scale = doc.at("x_scale").get<double>();
      dnd.pseudocount = doc.at("pseudocount").get<double>();
      dnd.neighbors = doc.at("neighbors").get<std::int64_t>();
      dnd.embed = mlp_from_json(doc.at("layers"));
      dnd.keys = matrix_from_json(doc.at("keys"));
      dnd.labels = doc.at("labels").get<std::vector<std::uint8_t>>();
      dnd.refresh_embeddings();
      return AvfModel(std::move(dnd), f_min);
    }
  }
  throw std::runtime_error("model: unreachable kind");
}

void AvfModel::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump() + "\n");
}

AvfModel AvfModel::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

AvfModel train_avf(const TrainingTrace& trace, const AvfTrainConfig& config) {
  config.validate();
  if (trace.empty()) throw std::invalid_argument("train_avf: empty trace");
  if (config.kind == AvfKind::Tabular) return train_tabular(trace, config);
  if (trace.failures() == 0)
    throw TrainingError(
        "train_avf: trace contains no failures; collect a longer trace or include weaker agents "
        "(earlier training progress, more exploration noise)");
  if (config.kind == AvfKind::Parametric) return train_parametric(trace, config);
  return train_dnd(trace, config);
}

double AvfEvaluation::calibration_gap() const {
  double gap = 0.0;
  std::int64_t total = 0;
  for (const auto& b : calibration) {
    gap += static_cast<double>(b.count) * std::abs(b.predicted_mean - b.empirical_rate);
    total += b.count;
  }
  return total ? gap / static_cast<double>(total) : 0.0;
}

AvfEvaluation evaluate_avf(const Predictor& model, const TrainingTrace& holdout) {
  if (holdout.empty()) throw std::invalid_argument("evaluate_avf: empty holdout");
  AvfEvaluation eval;
  eval.episodes = static_cast<std::int64_t>(holdout.size());
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(holdout.size());
  double loss = 0.0;
  for (const auto& r : holdout.records) {
    const double f = std::clamp(model(r.x, r.theta), 1e-300, 1.0);
    loss -= r.failed ? std::log(f) : (f < 1.0 ? std::log1p(-f) : std::log(1e-300));
    scored.emplace_back(f, r.failed);
  }
  eval.cross_entropy = loss / static_cast<double>(holdout.size());
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = scored.size();
  for (std::size_t d = 0; d < 10; ++d) {
    const std::size_t lo = d * n / 10, hi = (d + 1) * n / 10;
    if (lo == hi) continue;
    CalibrationBucket bucket;
    double pred = 0.0, hits = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      pred += scored[i].first;
      hits += scored[i].second ? 1.0 : 0.0;
    }
    bucket.count = static_cast<std::int64_t>(hi - lo);
    bucket.predicted_mean = pred / static_cast<double>(bucket.count);
    bucket.empirical_rate = hits / static_cast<double>(bucket.count);
    eval.calibration.push_back(bucket);
  }
  return eval;
}

}  // namespace rare
