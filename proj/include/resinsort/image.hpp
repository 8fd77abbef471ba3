#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "resinsort/tensor.hpp"

namespace resinsort {

/// Malformed input data: unreadable image, bad manifest, empty class.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB raster.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary PPM (P6, maxval 255) codec.
RgbImage read_ppm(const std::filesystem::path& path);
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Pixel values scaled to [0, 1] as an (h, w, 3) tensor.
Tensor to_tensor(const RgbImage& image);

/// Bilinear resampling of an (h, w, c) tensor with half-pixel centers.
/// Sample coordinates are clamped to the source border.
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);

struct ChannelStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> var{1.0, 1.0, 1.0};

    friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

inline constexpr double kNormalizeEpsilon = 1e-8;

/// Population mean and variance of each channel over a set of (h, w, 3) tensors.
ChannelStats compute_channel_stats(const std::vector<Tensor>& images);

/// (x - mean) / sqrt(var + 1e-8) per channel.
Tensor normalize(const Tensor& image, const ChannelStats& stats);

/// Resize to out x out, then normalize.
Tensor preprocess(const RgbImage& image, const ChannelStats& stats, std::size_t extent = 105);

}  // namespace resinsort
