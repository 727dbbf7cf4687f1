#include "isofed_cli/synth.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "isofed/errors.h"
#include "isofed/rng.h"

namespace isofed::cli {

Dataset make_blob_dataset(const BlobSpec& spec) {
  if (spec.classes < 2 || spec.classes > 65535) throw ConfigError("synth: classes must be in [2, 65535]");
  if (spec.samples < spec.classes) throw ConfigError("synth: need at least one sample per class");
  if (spec.image_size < 14) throw ConfigError("synth: image_size must be >= 14");

  Dataset d;
  d.height = d.width = spec.image_size;
  d.channels = 1;
  d.num_classes = static_cast<std::uint32_t>(spec.classes);
  d.labels.resize(spec.samples);
  d.pixels.resize(spec.samples * d.image_len());

  const double mid = (spec.image_size - 1) / 2.0;
  const CounterRng root(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t c = i % spec.classes;
    CounterRng rng = root.derive({i});
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / spec.classes;
    const double sigma = 1.5 + 0.75 * static_cast<double>(c % 3);
    const double cx = mid + spec.ring_radius * std::cos(angle) + spec.center_jitter * normal(rng);
    const double cy = mid + spec.ring_radius * std::sin(angle) + spec.center_jitter * normal(rng);
    const double amp = rng.uniform(0.6, 1.0);
    d.labels[i] = static_cast<std::uint16_t>(c);
    std::uint8_t* px = d.pixels.data() + i * d.image_len();
    for (std::uint32_t y = 0; y < spec.image_size; ++y)
      for (std::uint32_t x = 0; x < spec.image_size; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double v = amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) +
                         spec.pixel_noise * normal(rng);
        px[y * spec.image_size + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
  }
  return d;
}

}  // namespace isofed::cli
