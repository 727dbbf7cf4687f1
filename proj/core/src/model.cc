#include "isofed/model.h"

#include <cmath>

#include "isofed/errors.h"
#include "isofed/ops.h"
#include "isofed/rng.h"

namespace isofed {

std::size_t ModelParams::total_len() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].shape != other.entries_[i].shape)
      return false;
  return true;
}

void ModelParams::check_layout(const ModelParams& other, const char* context) const {
  if (entries_.size() != other.entries_.size())
    throw ShapeError(std::string(context) + ": parameter count " +
                     std::to_string(entries_.size()) + " vs " +
                     std::to_string(other.entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.shape != b.shape)
      throw ShapeError(std::string(context) + ": entry " + std::to_string(i) + " is " +
                       a.name + shape_str(a.shape) + " vs " + b.name + shape_str(b.shape));
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& e : out.entries_) std::fill(e.values.begin(), e.values.end(), 0.0);
  return out;
}

void ModelParams::add_scaled(const ModelParams& other, double factor) {
  check_layout(other, "add_scaled");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].values;
    const auto& src = other.entries_[i].values;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += factor * src[k];
  }
}

void ModelParams::scale(double factor) {
  for (auto& e : entries_)
    for (double& v : e.values) v *= factor;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_len());
  for (const auto& e : entries_) flat.insert(flat.end(), e.values.begin(), e.values.end());
  return flat;
}

double params_distance(const ModelParams& a, const ModelParams& b) {
  if (a.total_len() != b.total_len())
    throw ShapeError("params_distance: length " + std::to_string(a.total_len()) + " vs " +
                     std::to_string(b.total_len()));
  a.check_layout(b, "params_distance");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i].values;
    const auto& y = b.entries()[i].values;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - y[k];
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

double params_norm(const ModelParams& p) {
  double sq = 0.0;
  for (const auto& e : p.entries())
    for (double v : e.values) sq += v * v;
  return std::sqrt(sq);
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
  if (conv1_channels < 1 || conv2_channels < 1 || feature_dim < 1 || mlp_hidden < 1)
    throw ConfigError("model: layer widths must be >= 1");
  if (image_size < 14 || image_size % 2 != 0)
    throw ConfigError("model: image_size must be even and >= 14");
}

namespace {

std::size_t conv2_out(const ModelConfig& c) { return (c.image_size - 4) / 2 - 4; }

struct LayerSpec {
  const char* name;
  Shape weight;
  std::size_t fan_in;
};

std::vector<LayerSpec> layer_specs(const ModelConfig& c) {
  const std::size_t s = conv2_out(c);
  const std::size_t flat = c.conv2_channels * s * s;
  return {
      {"conv1", {c.conv1_channels, c.in_channels, 5, 5}, c.in_channels * 25},
      {"conv2", {c.conv2_channels, c.conv1_channels, 5, 5}, c.conv1_channels * 25},
      {"fc1", {flat, c.feature_dim}, flat},
      {"fc2", {c.feature_dim, c.feature_dim}, c.feature_dim},
      {"mlp1", {c.feature_dim, c.mlp_hidden}, c.feature_dim},
      {"mlp2", {c.mlp_hidden, c.mlp_hidden}, c.mlp_hidden},
      {"classifier", {c.mlp_hidden, c.num_classes}, c.mlp_hidden},
  };
}

std::size_t bias_len(const LayerSpec& l) {
  return l.weight.size() == 4 ? l.weight[0] : l.weight[1];
}

}  // namespace

ModelConfig ModelConfig::from_params(const ModelParams& params) {
  const auto& e = params.entries();
  if (e.size() != 14 || e[0].name != "conv1.weight" || e[0].shape.size() != 4 ||
      e[2].shape.size() != 4 || e[4].shape.size() != 2 || e[8].shape.size() != 2 ||
      e[12].shape.size() != 2)
    throw ShapeError("parameter snapshot does not describe a CnnClassifier");
  ModelConfig c;
  c.in_channels = e[0].shape[1];
  c.conv1_channels = e[0].shape[0];
  c.conv2_channels = e[2].shape[0];
  c.feature_dim = e[4].shape[1];
  c.mlp_hidden = e[8].shape[1];
  c.num_classes = e[12].shape[1];
  const std::size_t flat = e[4].shape[0];
  const std::size_t per_channel = flat / c.conv2_channels;
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(per_channel))));
  c.image_size = (side + 4) * 2 + 4;
  c.validate();
  CnnClassifier probe(c);
  probe.extract_params().check_layout(params, "ModelConfig::from_params");
  return c;
}

CnnClassifier::CnnClassifier(const ModelConfig& config) : config_(config) {
  config_.validate();
  for (const auto& l : layer_specs(config_)) {
    names_.push_back(std::string(l.name) + ".weight");
    params_.push_back(Tensor::zeros(l.weight, true));
    names_.push_back(std::string(l.name) + ".bias");
    params_.push_back(Tensor::zeros({bias_len(l)}, true));
  }
}

CnnClassifier CnnClassifier::init(std::uint64_t seed, const ModelConfig& config) {
  CnnClassifier model(config);
  const CounterRng root(seed);
  const auto specs = layer_specs(model.config_);
  for (std::size_t layer = 0; layer < specs.size(); ++layer) {
    const double fan_in = static_cast<double>(specs[layer].fan_in);
    // Kaiming-uniform with ReLU gain: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    CounterRng wrng = root.derive({layer, 0});
    for (double& v : model.params_[2 * layer].mutable_data()) v = wrng.uniform(-w_bound, w_bound);
    CounterRng brng = root.derive({layer, 1});
    for (double& v : model.params_[2 * layer + 1].mutable_data())
      v = brng.uniform(-b_bound, b_bound);
  }
  return model;
}

Tensor CnnClassifier::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.in_channels ||
      images.dim(2) != config_.image_size || images.dim(3) != config_.image_size)
    throw ShapeError("CnnClassifier: expected [N," + std::to_string(config_.in_channels) + "," +
                     std::to_string(config_.image_size) + "," +
                     std::to_string(config_.image_size) + "] input, got " +
                     shape_str(images.shape()));
  const auto& p = params_;
  Tensor x = ops::relu(ops::conv2d(images, p[0], p[1]));
  x = ops::maxpool2x2(x);
  x = ops::relu(ops::conv2d(x, p[2], p[3]));
  x = ops::flatten(x);
  x = ops::relu(ops::linear(x, p[4], p[5]));
  x = ops::relu(ops::linear(x, p[6], p[7]));
  x = ops::relu(ops::linear(x, p[8], p[9]));
  x = ops::relu(ops::linear(x, p[10], p[11]));
  return ops::linear(x, p[12], p[13]);
}

ModelParams CnnClassifier::extract_params() const {
  std::vector<ParamEntry> entries;
  entries.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    entries.push_back({names_[i], params_[i].shape(),
                       std::vector<double>(params_[i].data().begin(), params_[i].data().end())});
  return ModelParams(std::move(entries));
}

void CnnClassifier::load_params(const ModelParams& params) {
  const auto& e = params.entries();
  if (e.size() != params_.size())
    throw ShapeError("load_params: expected " + std::to_string(params_.size()) +
                     " entries, got " + std::to_string(e.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (e[i].name != names_[i] || e[i].shape != params_[i].shape())
      throw ShapeError("load_params: entry " + std::to_string(i) + " is " + e[i].name +
                       shape_str(e[i].shape) + ", expected " + names_[i] +
                       shape_str(params_[i].shape()));
    if (e[i].values.size() != params_[i].numel())
      throw ShapeError("load_params: entry " + e[i].name + " has wrong value count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i)
    std::copy(e[i].values.begin(), e[i].values.end(), params_[i].mutable_data().begin());
}

void CnnClassifier::zero_grad() {
  for (auto& t : params_) t.zero_grad();
}

CnnClassifier model_from_params(const ModelParams& params) {
  CnnClassifier model(ModelConfig::from_params(params));
  model.load_params(params);
  return model;
}

}  // namespace isofed
