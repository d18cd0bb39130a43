#ifndef AMISHIELD_DETECTOR_HPP
#define AMISHIELD_DETECTOR_HPP

// Image features and the two desk-scale classifiers (k-NN and a one hidden
// layer MLP) with continuous updates over a bounded sample buffer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "amishield/bytevis.hpp"
#include "amishield/error.hpp"
#include "amishield/pcap.hpp"
#include "amishield/random.hpp"
#include "json.hpp"

namespace amishield::detector {

using pcap::Label;
using FeatureVector = std::vector<double>;

inline constexpr unsigned kDefaultQuadrants = 4;

inline std::size_t feature_length(unsigned quadrants) {
  return bytevis::kColorClassCount * (1 + quadrants);
}

/// Global class fractions followed by per-region fractions. `quadrants` must
/// be a perfect square g*g with the image side divisible by g.
inline FeatureVector featurize(const bytevis::VisImage& image, unsigned quadrants = kDefaultQuadrants) {
  unsigned grid = 0;
  while ((grid + 1) * (grid + 1) <= quadrants) ++grid;
  if (quadrants == 0 || grid * grid != quadrants) {
    throw Error(ErrorCode::BadQuadrantSplit, std::to_string(quadrants) + " is not a square region count");
  }
  if (image.side == 0 || image.side % grid != 0) {
    throw Error(ErrorCode::BadQuadrantSplit, "side " + std::to_string(image.side) +
                                                 " not divisible by grid " + std::to_string(grid));
  }
  constexpr std::size_t C = bytevis::kColorClassCount;
  FeatureVector out(feature_length(quadrants), 0.0);
  const std::uint32_t cell = image.side / grid;
  const double region_area = static_cast<double>(cell) * cell;
  const double area = static_cast<double>(image.side) * image.side;
  for (std::uint32_t y = 0; y < image.side; ++y) {
    for (std::uint32_t x = 0; x < image.side; ++x) {
      // Pixels outside the palette count as padding (black).
      const auto tag = bytevis::tag_of_rgb(image.at(x, y)).value_or(bytevis::ColorTag::black);
      const auto c = static_cast<std::size_t>(tag);
      const std::size_t region = (y / cell) * grid + (x / cell);
      out[c] += 1.0 / area;
      out[C * (1 + region) + c] += 1.0 / region_area;
    }
  }
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

struct LabeledFeatures {
  FeatureVector x;
  Label y = Label::normal;

  friend bool operator==(const LabeledFeatures&, const LabeledFeatures&) = default;
};

enum class ModelKind { knn, mlp };

inline const char* to_string(ModelKind k) { return k == ModelKind::knn ? "knn" : "mlp"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "knn") return ModelKind::knn;
  if (s == "mlp") return ModelKind::mlp;
  throw Error(ErrorCode::SchemaViolation, "unknown model kind '" + s + "'");
}

struct Hyper {
  ModelKind kind = ModelKind::mlp;
  double learning_rate = 0.1;
  unsigned hidden = 32;
  unsigned k = 5;
  unsigned epochs = 40;
  unsigned update_epochs = 10;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  std::size_t buffer_cap = 10000;

  friend bool operator==(const Hyper&, const Hyper&) = default;
};

// ---------------------------------------------------------------------------
// MLP: tanh hidden layer, sigmoid output, binary cross-entropy.

namespace mlp {

/// Parameters flattened as [W1 (hidden x inputs, row-major), b1, w2, b2].
struct Network {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::vector<double> params;

  std::size_t size() const { return hidden * inputs + hidden + hidden + 1; }
  double& w1(std::size_t h, std::size_t i) { return params[h * inputs + i]; }
  double w1(std::size_t h, std::size_t i) const { return params[h * inputs + i]; }
  double b1(std::size_t h) const { return params[hidden * inputs + h]; }
  double w2(std::size_t h) const { return params[hidden * inputs + hidden + h]; }
  double b2() const { return params[hidden * inputs + 2 * hidden]; }

  friend bool operator==(const Network&, const Network&) = default;
};

inline Network init(std::size_t inputs, std::size_t hidden, Rng& rng) {
  Network net{inputs, hidden, {}};
  net.params.assign(net.size(), 0.0);
  const double a1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  for (std::size_t i = 0; i < hidden * inputs; ++i) net.params[i] = rng.uniform(-a1, a1);
  for (std::size_t h = 0; h < hidden; ++h) net.params[hidden * inputs + hidden + h] = rng.uniform(-a2, a2);
  return net;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double logit(const Network& net, std::span<const double> x, std::vector<double>* hidden_out = nullptr) {
  double z = net.b2();
  if (hidden_out) hidden_out->resize(net.hidden);
  for (std::size_t h = 0; h < net.hidden; ++h) {
    double a = net.b1(h);
    const double* row = &net.params[h * net.inputs];
    for (std::size_t i = 0; i < net.inputs; ++i) a += row[i] * x[i];
    const double act = std::tanh(a);
    if (hidden_out) (*hidden_out)[h] = act;
    z += net.w2(h) * act;
  }
  return z;
}

inline double predict(const Network& net, std::span<const double> x) { return sigmoid(logit(net, x)); }

/// Cross-entropy for a target y in {0,1}.
inline double loss(const Network& net, std::span<const double> x, double y) {
  const double z = logit(net, x);
  return softplus(z) - y * z;
}

/// Returns the loss and writes d(loss)/d(params) into `grad`.
inline double loss_and_gradient(const Network& net, std::span<const double> x, double y,
                                std::vector<double>& grad) {
  std::vector<double> act;
  const double z = logit(net, x, &act);
  const double dz = sigmoid(z) - y;
  grad.assign(net.size(), 0.0);
  const std::size_t off_b1 = net.hidden * net.inputs;
  const std::size_t off_w2 = off_b1 + net.hidden;
  for (std::size_t h = 0; h < net.hidden; ++h) {
    grad[off_w2 + h] = dz * act[h];
    const double da = dz * net.w2(h) * (1.0 - act[h] * act[h]);
    grad[off_b1 + h] = da;
    double* row = &grad[h * net.inputs];
    for (std::size_t i = 0; i < net.inputs; ++i) row[i] = da * x[i];
  }
  grad[off_w2 + net.hidden] = dz;
  return softplus(z) - y * z;
}

}  // namespace mlp

// ---------------------------------------------------------------------------

struct Verdict {
  Label label = Label::normal;
  double score = 0.0;  // probability of malware
};

struct Metrics {
  double accuracy = 0.0;
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
  std::size_t total = 0;
};

inline double target_of(Label y) { return y == Label::malware ? 1.0 : 0.0; }

struct Model {
  Hyper hyper;
  std::size_t inputs = 0;
  mlp::Network network;                // mlp only
  std::deque<LabeledFeatures> buffer;  // knn exemplars, or the mlp replay buffer
  std::vector<double> training_log;    // dataset loss before training, then after each epoch
  std::uint64_t updates = 0;

  ModelKind kind() const { return hyper.kind; }
};

inline std::size_t count_label(std::span<const LabeledFeatures> data, Label y) {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [&](const auto& s) { return s.y == y; }));
}

namespace detail {

inline double mean_loss(const mlp::Network& net, const std::deque<LabeledFeatures>& data) {
  double total = 0.0;
  for (const auto& s : data) total += mlp::loss(net, s.x, target_of(s.y));
  return total / static_cast<double>(data.size());
}

inline void sgd_epochs(Model& model, unsigned epochs, Rng& rng) {
  std::vector<std::size_t> order(model.buffer.size());
  std::vector<double> grad;
  for (unsigned e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& s = model.buffer[idx];
      mlp::loss_and_gradient(model.network, s.x, target_of(s.y), grad);
      for (std::size_t p = 0; p < grad.size(); ++p) {
        model.network.params[p] -= model.hyper.learning_rate * grad[p];
      }
    }
    const double l = mean_loss(model.network, model.buffer);
    if (!std::isfinite(l)) throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(e));
    model.training_log.push_back(l);
  }
}

inline void check_inputs(std::span<const LabeledFeatures> data, std::size_t inputs) {
  for (const auto& s : data) {
    if (s.x.size() != inputs) {
      throw Error(ErrorCode::SchemaViolation, "feature length " + std::to_string(s.x.size()) +
                                                  " != " + std::to_string(inputs));
    }
  }
}

inline void push_capped(Model& model, const LabeledFeatures& s) {
  model.buffer.push_back(s);
  while (model.buffer.size() > model.hyper.buffer_cap) model.buffer.pop_front();
}

}  // namespace detail

inline Model train(std::span<const LabeledFeatures> dataset, const Hyper& hyper) {
  if (dataset.empty() || count_label(dataset, Label::normal) == 0 ||
      count_label(dataset, Label::malware) == 0) {
    throw Error(ErrorCode::DegenerateDataset, "training data must contain both labels");
  }
  Model model;
  model.hyper = hyper;
  model.inputs = dataset.front().x.size();
  detail::check_inputs(dataset, model.inputs);
  for (const auto& s : dataset) detail::push_capped(model, s);

  if (hyper.kind == ModelKind::knn) {
    if (hyper.k == 0 || model.buffer.size() < hyper.k) {
      throw Error(ErrorCode::DegenerateDataset, "fewer exemplars than k");
    }
    return model;
  }

  Rng rng(hyper.seed);
  model.network = mlp::init(model.inputs, hyper.hidden, rng);
  const double initial = detail::mean_loss(model.network, model.buffer);
  if (!std::isfinite(initial)) throw Error(ErrorCode::NonFiniteLoss, "initial loss is not finite");
  model.training_log.push_back(initial);
  detail::sgd_epochs(model, hyper.epochs, rng);
  return model;
}

inline double score(const Model& model, std::span<const double> x) {
  if (model.kind() == ModelKind::mlp) {
    const double p = mlp::predict(model.network, x);
    return std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.5;
  }
  const std::size_t n = model.buffer.size();
  const std::size_t k = std::min<std::size_t>(model.hyper.k, n);
  if (k == 0) return 0.0;
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    const auto& e = model.buffer[i].x;
    for (std::size_t j = 0; j < x.size() && j < e.size(); ++j) d += (e[j] - x[j]) * (e[j] - x[j]);
    dist[i] = {d, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::size_t votes = 0;
  for (std::size_t i = 0; i < k; ++i) votes += model.buffer[dist[i].second].y == Label::malware;
  return static_cast<double>(votes) / static_cast<double>(k);
}

inline Verdict classify_features(const Model& model, std::span<const double> x) {
  const double s = score(model, x);
  return {s >= model.hyper.threshold ? Label::malware : Label::normal, s};
}

inline Verdict classify(const Model& model, const bytevis::VisImage& image) {
  const unsigned quadrants = static_cast<unsigned>(model.inputs / bytevis::kColorClassCount - 1);
  return classify_features(model, featurize(image, quadrants));
}

/// Appends to the buffer (FIFO-capped). k-NN skips samples whose feature
/// vector is already stored; the MLP runs extra SGD epochs over the buffer.
inline Model update(const Model& model, std::span<const LabeledFeatures> new_samples) {
  if (new_samples.empty()) return model;
  detail::check_inputs(new_samples, model.inputs);
  Model next = model;
  next.updates += 1;
  if (next.kind() == ModelKind::knn) {
    std::set<std::vector<double>> seen;
    for (const auto& s : next.buffer) seen.insert(s.x);
    for (const auto& s : new_samples) {
      if (seen.insert(s.x).second) detail::push_capped(next, s);
    }
    return next;
  }
  for (const auto& s : new_samples) detail::push_capped(next, s);
  Rng rng(next.hyper.seed ^ (0x9e3779b97f4a7c15ULL * next.updates));
  detail::sgd_epochs(next, next.hyper.update_epochs, rng);
  return next;
}

inline Metrics evaluate(const Model& model, std::span<const LabeledFeatures> dataset) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "evaluation set is empty");
  std::size_t correct = 0, fp = 0, fn = 0, normals = 0, malware = 0;
  for (const auto& s : dataset) {
    const Label got = classify_features(model, s.x).label;
    correct += got == s.y;
    if (s.y == Label::normal) {
      ++normals;
      fp += got == Label::malware;
    } else {
      ++malware;
      fn += got == Label::normal;
    }
  }
  Metrics m;
  m.total = dataset.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  m.false_positive_rate = normals ? static_cast<double>(fp) / static_cast<double>(normals) : 0.0;
  m.false_negative_rate = malware ? static_cast<double>(fn) / static_cast<double>(malware) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const Hyper& h) {
  return {{"kind", to_string(h.kind)},       {"learning_rate", h.learning_rate},
          {"hidden", h.hidden},              {"k", h.k},
          {"epochs", h.epochs},              {"update_epochs", h.update_epochs},
          {"seed", h.seed},                  {"threshold", h.threshold},
          {"buffer_cap", h.buffer_cap}};
}

inline Hyper hyper_from_json(const nlohmann::json& j) {
  Hyper h;
  h.kind = parse_model_kind(j.at("kind").get<std::string>());
  h.learning_rate = j.at("learning_rate").get<double>();
  h.hidden = j.at("hidden").get<unsigned>();
  h.k = j.at("k").get<unsigned>();
  h.epochs = j.at("epochs").get<unsigned>();
  h.update_epochs = j.at("update_epochs").get<unsigned>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.threshold = j.at("threshold").get<double>();
  h.buffer_cap = j.at("buffer_cap").get<std::size_t>();
  return h;
}

inline nlohmann::json to_json(const Model& m) {
  nlohmann::json buffer = nlohmann::json::array();
  for (const auto& s : m.buffer) buffer.push_back({{"x", s.x}, {"label", pcap::to_string(s.y)}});
  nlohmann::json j{{"format", "amishield-model"},
                   {"format_version", kModelFormatVersion},
                   {"hyper", to_json(m.hyper)},
                   {"inputs", m.inputs},
                   {"updates", m.updates},
                   {"training_log", m.training_log},
                   {"buffer", buffer}};
  if (m.kind() == ModelKind::mlp) {
    j["network"] = {{"inputs", m.network.inputs}, {"hidden", m.network.hidden}, {"params", m.network.params}};
  }
  return j;
}

inline Label parse_label(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "malware") return Label::malware;
  throw Error(ErrorCode::SchemaViolation, "unknown label '" + s + "'");
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "amishield-model") {
      throw Error(ErrorCode::SchemaViolation, "not a model document");
    }
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::SchemaViolation, "unsupported model format_version");
    }
    Model m;
    m.hyper = hyper_from_json(j.at("hyper"));
    m.inputs = j.at("inputs").get<std::size_t>();
    m.updates = j.at("updates").get<std::uint64_t>();
    m.training_log = j.at("training_log").get<std::vector<double>>();
    for (const auto& s : j.at("buffer")) {
      m.buffer.push_back({s.at("x").get<FeatureVector>(), parse_label(s.at("label").get<std::string>())});
    }
    if (m.kind() == ModelKind::mlp) {
      const auto& n = j.at("network");
      m.network.inputs = n.at("inputs").get<std::size_t>();
      m.network.hidden = n.at("hidden").get<std::size_t>();
      m.network.params = n.at("params").get<std::vector<double>>();
      if (m.network.params.size() != m.network.size()) {
        throw Error(ErrorCode::SchemaViolation, "network parameter count mismatch");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("model document: ") + e.what());
  }
}

}  // namespace amishield::detector

#endif  // AMISHIELD_DETECTOR_HPP
