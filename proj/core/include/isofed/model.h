#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "isofed/tensor.h"

namespace isofed {

struct ParamEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const ParamEntry&) const = default;
};

/// Ordered, named snapshot of every trainable parameter of one network.
/// Plain value data: this is what clients and server exchange.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(std::vector<ParamEntry> entries) : entries_(std::move(entries)) {}

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_len() const;

  /// Same names and shapes, in the same order.
  bool same_layout(const ModelParams& other) const;

  /// Throws ShapeError describing the first difference in layout.
  void check_layout(const ModelParams& other, const char* context) const;

  /// Copy with every value replaced by zero.
  ModelParams zeros_like() const;

  /// this += factor * other.
  void add_scaled(const ModelParams& other, double factor);
  void scale(double factor);

  /// Concatenation of all values in entry order.
  std::vector<double> flatten() const;

  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<ParamEntry> entries_;
};

/// Euclidean norm of the difference of the concatenated flat vectors.
double params_distance(const ModelParams& a, const ModelParams& b);
double params_norm(const ModelParams& p);

/// Architecture hyperparameters. Widths are not fixed by the method itself.
struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::size_t image_size = 28;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t feature_dim = 128;
  std::size_t mlp_hidden = 128;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// Recovers the architecture from a parameter snapshot's shapes.
  static ModelConfig from_params(const ModelParams& params);
};

/// Small CNN classifier:
///   conv5x5(C->c1) relu maxpool2 conv5x5(c1->c2) relu flatten
///   fc1 relu fc2 relu            (feature extractor)
///   mlp1 relu mlp2 relu classifier  (classification head)
/// No padding, stride 1, so 28x28 -> 24 -> 12 -> 8.
class CnnClassifier {
 public:
  /// All parameters zero.
  explicit CnnClassifier(const ModelConfig& config);

  /// Kaiming-uniform weights and fan-in-scaled uniform biases, drawn from a
  /// counter-based stream keyed by `seed`.
  static CnnClassifier init(std::uint64_t seed, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// [N, C, S, S] normalized images -> [N, num_classes] logits.
  Tensor forward(const Tensor& images) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  ModelParams extract_params() const;
  /// Copies values in; throws ShapeError on any name or shape mismatch.
  void load_params(const ModelParams& params);

  void zero_grad();

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
};

/// Convenience: build a model from a snapshot.
CnnClassifier model_from_params(const ModelParams& params);

namespace checkpoint {

inline constexpr char kMagic[4] = {'I', 'S', 'O', 'P'};
inline constexpr std::uint16_t kVersion = 1;

/// Layout (all integers little-endian):
///   "ISOP" | u16 version | u32 entry count |
///   per entry: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
///              f64 values[prod(dims)]
void write(const std::filesystem::path& path, const std::vector<ParamEntry>& entries);
std::vector<ParamEntry> read(const std::filesystem::path& path);

std::vector<std::uint8_t> encode(const std::vector<ParamEntry>& entries);
std::vector<ParamEntry> decode(std::span<const std::uint8_t> bytes);

}  // namespace checkpoint

}  // namespace isofed
