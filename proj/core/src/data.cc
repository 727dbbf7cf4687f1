#include "isofed/data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "isofed/errors.h"

namespace isofed {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::span<const std::uint8_t> Dataset::image(std::size_t index) const {
  return std::span<const std::uint8_t>(pixels).subspan(index * image_len(), image_len());
}

void Dataset::validate() const {
  if (height == 0 || width == 0 || channels == 0)
    throw FormatError("dataset has a zero image dimension");
  if (num_classes == 0) throw FormatError("dataset declares zero classes");
  if (pixels.size() != labels.size() * image_len())
    throw FormatError("dataset pixel buffer has " + std::to_string(pixels.size()) +
                      " bytes, expected " + std::to_string(labels.size() * image_len()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= num_classes)
      throw FormatError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                        " is not below num_classes " + std::to_string(num_classes));
}

namespace mds1 {
namespace {

constexpr char kMagic[4] = {'M', 'D', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

}  // namespace

std::vector<std::uint8_t> encode(const Dataset& data) {
  data.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, data.height);
  put_u32(out, data.width);
  put_u32(out, data.channels);
  put_u32(out, data.num_classes);
  const auto* lp = reinterpret_cast<const std::uint8_t*>(data.labels.data());
  out.insert(out.end(), lp, lp + data.labels.size() * 2);
  out.insert(out.end(), data.pixels.begin(), data.pixels.end());
  return out;
}

Dataset decode(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 4 + 5 * 4;
  if (bytes.size() < kHeader) throw FormatError("MDS1 file truncated in header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an MDS1 file (bad magic)");
  std::uint32_t hdr[5];
  std::memcpy(hdr, bytes.data() + 4, sizeof(hdr));
  Dataset d;
  const std::size_t n = hdr[0];
  d.height = hdr[1];
  d.width = hdr[2];
  d.channels = hdr[3];
  d.num_classes = hdr[4];
  const std::size_t expected = kHeader + n * 2 + n * d.image_len();
  if (bytes.size() != expected)
    throw FormatError("MDS1 size " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(expected));
  d.labels.resize(n);
  std::memcpy(d.labels.data(), bytes.data() + kHeader, n * 2);
  d.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(kHeader + n * 2), bytes.end());
  d.validate();
  return d;
}

void write(const std::filesystem::path& path, const Dataset& data) {
  const auto bytes = encode(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

Dataset read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open dataset");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mds1

NormStats compute_norm_stats(const Dataset& data) {
  const std::size_t c = data.channels;
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  for (std::size_t i = 0; i < data.pixels.size(); ++i) {
    const double v = data.pixels[i];
    sum[i % c] += v;
    sq[i % c] += v * v;
  }
  const double count = static_cast<double>(data.pixels.size() / c);
  NormStats s;
  for (std::size_t k = 0; k < c; ++k) {
    const double m = sum[k] / count;
    const double var = std::max(sq[k] / count - m * m, 0.0);
    s.mean.push_back(m);
    s.stddev.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return s;
}

const char* role_name(ClientRole role) {
  return role == ClientRole::kLabeled ? "labeled" : "unlabeled";
}

void PartitionSpec::validate() const {
  if (total_clients < 1) throw ConfigError("partition: need at least one client");
  if (labeled_count > total_clients)
    throw ConfigError("partition: labeled count exceeds total clients");
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ConfigError("partition: dirichlet gamma must be positive and finite");
}

std::vector<std::vector<std::size_t>> split_by_proportions(std::span<const std::size_t> indices,
                                                           std::span<const double> proportions) {
  if (proportions.empty()) throw Error("split_by_proportions: no proportions");
  double total = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw Error("split_by_proportions: negative proportion");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("split_by_proportions: proportions must sum to 1");
  const double n = static_cast<double>(indices.size());
  std::vector<std::vector<std::size_t>> parts(proportions.size());
  double cum = 0.0;
  std::size_t start = 0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    cum += proportions[k];
    std::size_t end = k + 1 == proportions.size()
                          ? indices.size()
                          : static_cast<std::size_t>(std::floor(cum * n + 0.5));
    end = std::clamp(end, start, indices.size());
    parts[k].assign(indices.begin() + static_cast<std::ptrdiff_t>(start),
                    indices.begin() + static_cast<std::ptrdiff_t>(end));
    start = end;
  }
  return parts;
}

std::vector<double> sample_dirichlet(double gamma, std::size_t k, CounterRng& rng) {
  std::gamma_distribution<double> draw(gamma, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  while (total <= 0.0) {
    total = 0.0;
    for (double& v : p) {
      v = draw(rng);
      total += v;
    }
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<ClientShard> dirichlet_partition(const Dataset& data, const PartitionSpec& spec) {
  spec.validate();
  const std::size_t k = spec.total_clients;
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (by_class[c].size() < k)
      throw ConfigError("dirichlet_partition: class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " samples, fewer than " +
                        std::to_string(k) + " clients");

  constexpr std::uint64_t kMaxAttempts = 100;
  const CounterRng root(spec.seed);
  for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<ClientShard> shards(k);
    for (std::size_t i = 0; i < k; ++i) {
      shards[i].client_id = i;
      shards[i].role = i < spec.labeled_count ? ClientRole::kLabeled : ClientRole::kUnlabeled;
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      CounterRng rng = root.derive({attempt, c});
      std::vector<std::size_t> pool = by_class[c];
      std::shuffle(pool.begin(), pool.end(), rng);
      const auto props = sample_dirichlet(spec.gamma, k, rng);
      auto parts = split_by_proportions(pool, props);
      for (std::size_t i = 0; i < k; ++i)
        shards[i].indices.insert(shards[i].indices.end(), parts[i].begin(), parts[i].end());
    }
    const bool any_empty = std::any_of(shards.begin(), shards.end(),
                                       [](const ClientShard& s) { return s.indices.empty(); });
    if (any_empty) continue;
    for (auto& s : shards) std::sort(s.indices.begin(), s.indices.end());
    return shards;
  }
  throw Error("dirichlet_partition: a client stayed empty after 100 redraws");
}

std::vector<std::vector<std::size_t>> shard_class_counts(const Dataset& data,
                                                         const std::vector<ClientShard>& shards) {
  std::vector<std::vector<std::size_t>> counts(shards.size(),
                                               std::vector<std::size_t>(data.num_classes, 0));
  for (std::size_t s = 0; s < shards.size(); ++s)
    for (std::size_t i : shards[s].indices) ++counts[s][data.labels[i]];
  return counts;
}

bool AugmentParams::is_identity() const {
  return !flip && shift_x == 0 && shift_y == 0 && contrast == 1.0 && brightness == 1.0 && !erase;
}

AugmentParams draw_augment(AugmentMode mode, CounterRng& rng, bool allow_flip,
                           std::uint32_t height, std::uint32_t width) {
  AugmentParams a;
  const bool coin = rng.uniform() < 0.5;
  a.flip = allow_flip && coin;
  a.shift_x = static_cast<int>(rng.below(2 * kMaxShift + 1)) - kMaxShift;
  a.shift_y = static_cast<int>(rng.below(2 * kMaxShift + 1)) - kMaxShift;
  if (mode == AugmentMode::kStrong) {
    a.contrast = rng.uniform(1.0 - kJitter, 1.0 + kJitter);
    a.brightness = rng.uniform(1.0 - kJitter, 1.0 + kJitter);
    if (height >= kEraseSize && width >= kEraseSize) {
      a.erase = true;
      a.erase_x = static_cast<int>(rng.below(width - kEraseSize + 1));
      a.erase_y = static_cast<int>(rng.below(height - kEraseSize + 1));
    }
  }
  return a;
}

void render_image(const Dataset& data, std::size_t index, const AugmentParams& aug,
                  const NormStats& stats, std::span<double> out) {
  const int h = static_cast<int>(data.height), w = static_cast<int>(data.width);
  const std::size_t c = data.channels;
  if (out.size() != data.image_len()) throw ShapeError("render_image: output buffer size mismatch");
  const auto img = data.image(index);

  for (std::size_t ch = 0; ch < c; ++ch) {
    double* plane = out.data() + ch * static_cast<std::size_t>(h * w);
    double img_mean = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sx0 = x - aug.shift_x, sy = y - aug.shift_y;
        double v = 0.0;
        if (sx0 >= 0 && sx0 < w && sy >= 0 && sy < h) {
          const int sx = aug.flip ? w - 1 - sx0 : sx0;
          v = img[(static_cast<std::size_t>(sy) * w + sx) * c + ch];
        }
        plane[y * w + x] = v;
        img_mean += v;
      }
    img_mean /= static_cast<double>(h * w);

    const bool photometric = aug.contrast != 1.0 || aug.brightness != 1.0;
    const double inv_std = 1.0 / stats.stddev[ch];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = plane[y * w + x];
        if (photometric)
          v = std::clamp(((v - img_mean) * aug.contrast + img_mean) * aug.brightness, 0.0, 255.0);
        if (aug.erase && x >= aug.erase_x && x < aug.erase_x + kEraseSize && y >= aug.erase_y &&
            y < aug.erase_y + kEraseSize)
          v = stats.mean[ch];
        plane[y * w + x] = (v - stats.mean[ch]) * inv_std;
      }
  }
}

Tensor augment(const Dataset& data, std::size_t index, AugmentMode mode, const NormStats& stats,
               CounterRng& rng, bool allow_flip) {
  const AugmentParams a = draw_augment(mode, rng, allow_flip, data.height, data.width);
  std::vector<double> buf(data.image_len());
  render_image(data, index, a, stats, buf);
  return Tensor({1, data.channels, data.height, data.width}, std::move(buf));
}

namespace {

Tensor render_batch(const Dataset& data, std::span<const std::size_t> indices,
                    const NormStats& stats, std::optional<AugmentMode> mode, CounterRng* rng,
                    bool allow_flip) {
  const std::size_t len = data.image_len();
  std::vector<double> buf(indices.size() * len);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const AugmentParams a = mode ? draw_augment(*mode, *rng, allow_flip, data.height, data.width)
                                 : AugmentParams::identity();
    render_image(data, indices[b], a, stats, std::span<double>(buf).subspan(b * len, len));
  }
  return Tensor({indices.size(), data.channels, data.height, data.width}, std::move(buf));
}

}  // namespace

Tensor clean_batch(const Dataset& data, std::span<const std::size_t> indices,
                   const NormStats& stats) {
  return render_batch(data, indices, stats, std::nullopt, nullptr, false);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> indices,
                                                    std::size_t batch_size, CounterRng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

BatchStream::BatchStream(const Dataset& data, const ClientShard& shard, const NormStats& stats,
                         std::size_t batch_size, BatchViews views, CounterRng rng,
                         bool allow_flip)
    : data_(data),
      shard_(shard),
      stats_(stats),
      batch_size_(batch_size),
      views_(views),
      rng_(rng),
      allow_flip_(allow_flip) {
  if (shard.indices.empty())
    throw Error("client " + std::to_string(shard.client_id) + " has an empty shard");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

void BatchStream::begin_epoch() {
  CounterRng shuffle_rng = rng_.derive({epoch_, 0});
  aug_rng_ = rng_.derive({epoch_, 1});
  order_ = epoch_batches(shard_.indices, batch_size_, shuffle_rng);
  cursor_ = 0;
  ++epoch_;
}

std::optional<Batch> BatchStream::next() {
  if (epoch_ == 0) throw Error("BatchStream::next called before begin_epoch");
  if (cursor_ >= order_.size()) return std::nullopt;
  Batch b;
  b.indices = order_[cursor_++];
  switch (views_) {
    case BatchViews::kClean:
      b.weak = clean_batch(data_, b.indices, stats_);
      break;
    case BatchViews::kWeak:
      b.weak = render_batch(data_, b.indices, stats_, AugmentMode::kWeak, &aug_rng_, allow_flip_);
      break;
    case BatchViews::kPaired:
      b.weak = render_batch(data_, b.indices, stats_, AugmentMode::kWeak, &aug_rng_, allow_flip_);
      b.strong =
          render_batch(data_, b.indices, stats_, AugmentMode::kStrong, &aug_rng_, allow_flip_);
      break;
  }
  return b;
}

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(static_cast<int>(data.labels[i]));
  return out;
}

}  // namespace isofed
