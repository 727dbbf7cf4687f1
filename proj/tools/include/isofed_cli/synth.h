#pragma once

#include <cstddef>
#include <cstdint>

#include "isofed/data.h"

namespace isofed::cli {

/// Knobs of the Gaussian-blob generator. Class c draws a blob centred on a
/// circle around the image centre (angle 2*pi*c/classes) with a class-specific
/// width; samples add centre jitter, amplitude variation and pixel noise.
/// Class geometry depends only on `classes`, so splits generated with
/// different seeds share one distribution.
struct BlobSpec {
  std::size_t classes = 8;
  std::size_t samples = 8000;
  std::uint64_t seed = 0;
  std::uint32_t image_size = 28;
  double ring_radius = 7.0;
  double center_jitter = 1.0;  // pixels, per axis std
  double pixel_noise = 0.2;    // fraction of full scale, std
};

/// Labels are assigned round-robin, so class counts differ by at most one.
Dataset make_blob_dataset(const BlobSpec& spec);

}  // namespace isofed::cli
