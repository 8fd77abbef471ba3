#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "resinsort/dataset.hpp"
#include "resinsort/image.hpp"

namespace resinsort {

class Rng;

inline constexpr std::size_t kMaxSynthClasses = 8;

struct SynthOptions {
    std::size_t num_classes = 5;
    std::size_t per_class = 100;
    std::uint64_t seed = 7;
    std::size_t image_size = 64;
};

/// Class k is shape k % 4 (circle, square, triangle, bar) in hue band k of
/// eight, drawn at a random position, scale and rotation on a noisy background.
RgbImage render_synthetic(std::size_t class_id, std::size_t image_size, Rng& rng);

std::string synthetic_class_dir(std::size_t class_id);

/// Writes out_dir/<class_dir>/img_NNNN.ppm for every image, splits 80:10:10
/// with the same seed and saves out_dir/manifest.json (statistics measured on
/// the training split at 105x105). Throws std::invalid_argument unless
/// 1 <= num_classes <= 8 and per_class >= 4.
DatasetManifest synth_generate(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace resinsort
