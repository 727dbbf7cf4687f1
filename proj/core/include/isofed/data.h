#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "isofed/rng.h"
#include "isofed/tensor.h"

namespace isofed {

/// In-memory image classification split. Pixels are u8 in [n, H, W, C]
/// order; labels are class indices below num_classes.
struct Dataset {
  std::uint32_t height = 28;
  std::uint32_t width = 28;
  std::uint32_t channels = 1;
  std::uint32_t num_classes = 0;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint8_t> pixels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_len() const { return std::size_t{height} * width * channels; }
  std::span<const std::uint8_t> image(std::size_t index) const;

  /// Throws FormatError if sizes or labels are inconsistent.
  void validate() const;
};

/// "MDS1" binary split file:
///   "MDS1" | u32 num_samples, H, W, C, num_classes |
///   u16 labels[num_samples] | u8 pixels[n*H*W*C]
/// All integers little-endian.
namespace mds1 {
void write(const std::filesystem::path& path, const Dataset& data);
Dataset read(const std::filesystem::path& path);
std::vector<std::uint8_t> encode(const Dataset& data);
Dataset decode(std::span<const std::uint8_t> bytes);
}  // namespace mds1

/// Per-channel mean and standard deviation of raw pixel values.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const NormStats&) const = default;
};

NormStats compute_norm_stats(const Dataset& data);

enum class ClientRole { kLabeled, kUnlabeled };

const char* role_name(ClientRole role);

struct PartitionSpec {
  std::size_t total_clients = 4;
  std::size_t labeled_count = 1;
  double gamma = 0.8;
  std::uint64_t seed = 0;

  std::size_t unlabeled_count() const { return total_clients - labeled_count; }
  void validate() const;
};

struct ClientShard {
  std::size_t client_id = 0;
  ClientRole role = ClientRole::kLabeled;
  std::vector<std::size_t> indices;  // ascending, into the training Dataset

  std::size_t sample_count() const { return indices.size(); }
};

/// Splits `indices` into proportions.size() consecutive runs whose
/// boundaries are round(cumsum(proportions) * n). Proportions must be
/// nonnegative and sum to 1.
std::vector<std::vector<std::size_t>> split_by_proportions(
    std::span<const std::size_t> indices, std::span<const double> proportions);

/// One draw from Dirichlet(gamma * 1_k) via normalized Gamma(gamma, 1) draws.
std::vector<double> sample_dirichlet(double gamma, std::size_t k, CounterRng& rng);

/// Class-conditional Dirichlet label-skew partition. For every class a
/// proportion vector ~ Dir(gamma * 1_K) splits that class's (shuffled)
/// samples across clients. Clients [0, m) are labeled, [m, K) unlabeled.
/// The whole draw is repeated (up to 100 attempts) while any client is left
/// without samples.
std::vector<ClientShard> dirichlet_partition(const Dataset& data, const PartitionSpec& spec);

/// counts[client][class].
std::vector<std::vector<std::size_t>> shard_class_counts(const Dataset& data,
                                                         const std::vector<ClientShard>& shards);

enum class AugmentMode { kWeak, kStrong };

/// One concrete augmentation draw, applied in this order: horizontal flip,
/// integer translation (zero fill), contrast about the image mean,
/// brightness scale, 8x8 erase filled with the dataset mean.
struct AugmentParams {
  bool flip = false;
  int shift_x = 0;
  int shift_y = 0;
  double contrast = 1.0;
  double brightness = 1.0;
  bool erase = false;
  int erase_x = 0;
  int erase_y = 0;

  static AugmentParams identity() { return {}; }
  bool is_identity() const;
};

inline constexpr int kMaxShift = 2;
inline constexpr int kEraseSize = 8;
inline constexpr double kJitter = 0.2;

/// Weak: flip with p = 0.5 (when allowed) and a shift in [-2, 2]^2.
/// Strong: weak plus contrast and brightness factors in [0.8, 1.2] and one
/// 8x8 erase.
AugmentParams draw_augment(AugmentMode mode, CounterRng& rng, bool allow_flip, std::uint32_t height,
                           std::uint32_t width);

/// Renders sample `index` with `aug` applied and normalization by `stats`,
/// into `out` laid out [C, H, W].
void render_image(const Dataset& data, std::size_t index, const AugmentParams& aug,
                  const NormStats& stats, std::span<double> out);

/// Single augmented, normalized image as a [1, C, H, W] tensor.
Tensor augment(const Dataset& data, std::size_t index, AugmentMode mode, const NormStats& stats,
               CounterRng& rng, bool allow_flip = true);

/// Normalized, unaugmented [N, C, H, W] batch.
Tensor clean_batch(const Dataset& data, std::span<const std::size_t> indices,
                   const NormStats& stats);

/// Shuffled index batches covering `indices` once; the last batch may be
/// short.
std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> indices,
                                                    std::size_t batch_size, CounterRng& rng);

enum class BatchViews {
  kClean,   // normalized only
  kWeak,    // one weakly augmented view
  kPaired,  // weak and strong views of the same samples
};

struct Batch {
  std::vector<std::size_t> indices;
  Tensor weak;    // the clean view when BatchViews::kClean
  Tensor strong;  // defined only for BatchViews::kPaired
};

/// Epoch-wise batch iterator over one client's shard. Owns its generator;
/// epoch e uses the stream derived from (e), so iteration is reproducible.
/// Only pixels are read; labels are never touched.
class BatchStream {
 public:
  BatchStream(const Dataset& data, const ClientShard& shard, const NormStats& stats,
              std::size_t batch_size, BatchViews views, CounterRng rng, bool allow_flip = true);

  /// Reshuffles and rewinds to the first batch of the next epoch.
  void begin_epoch();
  /// Next batch of the current epoch, or nullopt at its end.
  std::optional<Batch> next();

  std::size_t epoch() const { return epoch_; }

 private:
  const Dataset& data_;
  const ClientShard& shard_;
  const NormStats& stats_;
  std::size_t batch_size_;
  BatchViews views_;
  CounterRng rng_;
  bool allow_flip_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  CounterRng aug_rng_;
  std::vector<std::vector<std::size_t>> order_;
};

/// Labels of the given samples, as ints.
std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace isofed
