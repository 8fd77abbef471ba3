#include "resinsort/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace resinsort {

namespace {

class HeaderReader {
public:
    HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::size_t number() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected a number in header");
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_++] - '0');
            if (value > (1u << 24)) fail("header value too large");
        }
        return value;
    }

    void magic() {
        if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') fail("not a binary PPM (missing P6 magic)");
        pos_ = 2;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing whitespace before raster");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const std::string& why) const { throw DataError(origin_ + ": " + why); }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    HeaderReader reader(bytes, origin);
    reader.magic();
    const std::size_t width = reader.number();
    const std::size_t height = reader.number();
    const std::size_t maxval = reader.number();
    if (width == 0 || height == 0) reader.fail("zero image extent");
    if (maxval != 255) reader.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    const std::size_t start = reader.raster_start();
    const std::size_t need = width * height * 3;
    if (bytes.size() - start < need) {
        reader.fail("truncated raster: expected " + std::to_string(need) + " bytes, found " +
                    std::to_string(bytes.size() - start));
    }
    RgbImage img{width, height, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                                          bytes.begin() + static_cast<std::ptrdiff_t>(start + need))};
    return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open image");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes, path.string());
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) {
        throw DimensionError("write_ppm: pixel buffer does not match " + std::to_string(image.width) + "x" +
                             std::to_string(image.height));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot write image");
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw DataError(path.string() + ": write failed");
}

Tensor to_tensor(const RgbImage& image) {
    Tensor t({image.height, image.width, 3});
    for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] / 255.0;
    return t;
}

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 3) throw DimensionError("resize expects (h, w, c), got " + shape_to_string(input.shape()));
    if (out_h == 0 || out_w == 0) throw DimensionError("resize target must be positive");
    const std::size_t in_h = input.extent(0), in_w = input.extent(1), depth = input.extent(2);

    struct Tap {
        std::size_t i0, i1;
        double frac;
    };
    auto taps = [](std::size_t out, std::size_t in) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            t[o] = {i0, i1, src - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(out_h, in_h);
    const auto tx = taps(out_w, in_w);

    Tensor out({out_h, out_w, depth});
    for (std::size_t i = 0; i < out_h; ++i) {
        const Tap& y = ty[i];
        for (std::size_t j = 0; j < out_w; ++j) {
            const Tap& x = tx[j];
            for (std::size_t c = 0; c < depth; ++c) {
                const double top = input.at(y.i0, x.i0, c) * (1.0 - x.frac) + input.at(y.i0, x.i1, c) * x.frac;
                const double bottom = input.at(y.i1, x.i0, c) * (1.0 - x.frac) + input.at(y.i1, x.i1, c) * x.frac;
                out.at(i, j, c) = top * (1.0 - y.frac) + bottom * y.frac;
            }
        }
    }
    return out;
}

ChannelStats compute_channel_stats(const std::vector<Tensor>& images) {
    std::array<double, 3> sum{}, sum_sq{};
    double count = 0.0;
    for (const Tensor& t : images) {
        if (t.rank() != 3 || t.extent(2) != 3) throw DimensionError("channel stats expect (h, w, 3) tensors");
        for (std::size_t i = 0; i < t.size(); i += 3) {
            for (std::size_t c = 0; c < 3; ++c) sum[c] += t[i + c];
        }
        count += static_cast<double>(t.size() / 3);
    }
    if (count == 0.0) throw DataError("cannot compute channel statistics of an empty image set");
    ChannelStats stats;
    for (std::size_t c = 0; c < 3; ++c) stats.mean[c] = sum[c] / count;
    // Second pass around the mean keeps the variance accurate.
    for (const Tensor& t : images) {
        for (std::size_t i = 0; i < t.size(); i += 3) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double d = t[i + c] - stats.mean[c];
                sum_sq[c] += d * d;
            }
        }
    }
    for (std::size_t c = 0; c < 3; ++c) stats.var[c] = sum_sq[c] / count;
    return stats;
}

Tensor normalize(const Tensor& image, const ChannelStats& stats) {
    if (image.rank() != 3 || image.extent(2) != 3) throw DimensionError("normalize expects (h, w, 3)");
    Tensor out = image;
    std::array<double, 3> inv{};
    for (std::size_t c = 0; c < 3; ++c) inv[c] = 1.0 / std::sqrt(stats.var[c] + kNormalizeEpsilon);
    for (std::size_t i = 0; i < out.size(); i += 3) {
        for (std::size_t c = 0; c < 3; ++c) out[i + c] = (out[i + c] - stats.mean[c]) * inv[c];
    }
    return out;
}

Tensor preprocess(const RgbImage& image, const ChannelStats& stats, std::size_t extent) {
    return normalize(resize_bilinear(to_tensor(image), extent, extent), stats);
}

}  // namespace resinsort
