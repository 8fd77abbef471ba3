#include "resinsort/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "resinsort/random.hpp"

namespace resinsort {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::array<const char*, 4> kShapeNames{"circle", "square", "triangle", "bar"};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 360.0);
    if (h < 0) h += 360.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    std::array<double, 3> rgb{};
    switch (static_cast<int>(h / 60.0)) {
        case 0: rgb = {c, x, 0}; break;
        case 1: rgb = {x, c, 0}; break;
        case 2: rgb = {0, c, x}; break;
        case 3: rgb = {0, x, c}; break;
        case 4: rgb = {x, 0, c}; break;
        default: rgb = {c, 0, x}; break;
    }
    for (auto& ch : rgb) ch += m;
    return rgb;
}

bool inside(std::size_t shape, double u, double v) {
    switch (shape) {
        case 0: return u * u + v * v <= 1.0;
        case 1: return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
        case 2: {
            const double s3 = std::sqrt(3.0);
            return v >= -0.5 && s3 * u + v <= 1.0 && -s3 * u + v <= 1.0;
        }
        default: return std::abs(u) <= 1.0 && std::abs(v) <= 0.3;
    }
}

std::uint8_t to_byte(double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); }

}  // namespace

std::string synthetic_class_dir(std::size_t class_id) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%02zu-%s_h%03zu", class_id + 1, kShapeNames[class_id % 4],
                  class_id * 360 / kMaxSynthClasses);
    return buf;
}

RgbImage render_synthetic(std::size_t class_id, std::size_t image_size, Rng& rng) {
    const double size = static_cast<double>(image_size);
    const std::size_t shape = class_id % 4;
    const double hue = static_cast<double>(class_id) * 360.0 / kMaxSynthClasses + rng.uniform(-12.0, 12.0);
    const auto color = hsv_to_rgb(hue, rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0));

    const double gray = rng.uniform(0.2, 0.8);
    const std::array<double, 3> background{gray + rng.uniform(-0.05, 0.05), gray + rng.uniform(-0.05, 0.05),
                                           gray + rng.uniform(-0.05, 0.05)};
    const double cx = rng.uniform(0.3, 0.7) * size;
    const double cy = rng.uniform(0.3, 0.7) * size;
    const double radius = rng.uniform(0.18, 0.3) * size;
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double shade_dir = rng.uniform(0.0, 2.0 * kPi);
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);

    RgbImage img{image_size, image_size, std::vector<std::uint8_t>(image_size * image_size * 3)};
    for (std::size_t y = 0; y < image_size; ++y) {
        for (std::size_t x = 0; x < image_size; ++x) {
            const double dx = (static_cast<double>(x) + 0.5 - cx) / radius;
            const double dy = (static_cast<double>(y) + 0.5 - cy) / radius;
            const double u = cos_t * dx + sin_t * dy;
            const double v = -sin_t * dx + cos_t * dy;
            const bool in = inside(shape, u, v);
            // A soft linear shading gradient gives the object some texture.
            const double shade = in ? 0.15 * (std::cos(shade_dir) * dx + std::sin(shade_dir) * dy) : 0.0;
            const std::size_t o = (y * image_size + x) * 3;
            for (std::size_t c = 0; c < 3; ++c) {
                const double base = in ? color[c] * (1.0 + shade) : background[c];
                img.pixels[o + c] = to_byte(base + 0.04 * rng.normal());
            }
        }
    }
    return img;
}

DatasetManifest synth_generate(const SynthOptions& options, const fs::path& out_dir) {
    if (options.num_classes == 0 || options.num_classes > kMaxSynthClasses) {
        throw std::invalid_argument("synthetic class count must be in [1, 8], got " +
                                    std::to_string(options.num_classes));
    }
    if (options.per_class < 4) throw std::invalid_argument("synthetic images per class must be >= 4");
    if (options.image_size < 8) throw std::invalid_argument("synthetic image size must be >= 8");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError(out_dir.string() + ": cannot create directory: " + ec.message());

    Rng master(options.seed);
    DatasetManifest manifest;
    manifest.root = out_dir;
    for (std::size_t c = 0; c < options.num_classes; ++c) {
        const std::string dir = synthetic_class_dir(c);
        fs::create_directories(out_dir / dir, ec);
        if (ec) throw DataError((out_dir / dir).string() + ": cannot create directory: " + ec.message());
        const auto dash = dir.find('-');
        manifest.classes.push_back({dir.substr(0, dash), dir.substr(dash + 1)});
        for (std::size_t i = 0; i < options.per_class; ++i) {
            Rng rng = master.fork();
            char name[32];
            std::snprintf(name, sizeof name, "img_%04zu", i);
            const std::string rel = dir + "/" + name + ".ppm";
            write_ppm(out_dir / rel, render_synthetic(c, options.image_size, rng));
            manifest.records.push_back({dir + "/" + name, static_cast<int>(c), Split::unassigned, rel});
        }
    }
    manifest = split_dataset(std::move(manifest), SplitRatios{}, options.seed);
    manifest.stats = measure_stats(manifest, 105, StatsScope::train);
    save_manifest(manifest, out_dir / kManifestFile);
    return manifest;
}

}  // namespace resinsort
