#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resinsort/image.hpp"
#include "resinsort/tensor.hpp"

namespace resinsort {

enum class Split { train, val, test, unassigned };

std::string to_string(Split split);
Split parse_split(std::string_view text);

struct ClassEntry {
    std::string code;  // "01"
    std::string name;  // "PET"

    friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

struct ImageRecord {
    std::string id;    // path relative to the dataset root, without extension
    int class_id = 0;  // index into the class table
    Split split = Split::unassigned;
    std::string path;  // relative to the dataset root, '/' separated

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetStats {
    ChannelStats channels;
    std::size_t extent = 105;  // resize target the statistics were measured at

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

/// Class table, records and split assignment of an on-disk dataset.
struct DatasetManifest {
    std::filesystem::path root;  // not serialized; records resolve against it
    std::vector<ClassEntry> classes;
    std::vector<ImageRecord> records;
    std::optional<DatasetStats> stats;

    std::size_t num_classes() const noexcept { return classes.size(); }
    std::vector<std::size_t> indices_in(Split split) const;
    /// Records per class, optionally restricted to one split.
    std::vector<std::size_t> class_counts(std::optional<Split> split = std::nullopt) const;
    std::filesystem::path resolve(const ImageRecord& record) const { return root / record.path; }
    /// Class id by code ("07"), name ("Other") or directory name ("07-Other").
    int find_class(std::string_view key) const;
};

/// Decoder used for files with a given lowercase extension (".ppm" is built in).
using ImageDecoder = std::function<RgbImage(const std::filesystem::path&)>;
void register_image_decoder(const std::string& extension, ImageDecoder decoder);
RgbImage decode_image(const std::filesystem::path& path);

/// Scans root/<class_dir>/<image>. Class ids follow sorted directory order,
/// records are sorted by path. Every image is decoded once to validate it.
DatasetManifest load_dataset(const std::filesystem::path& root);

struct SplitRatios {
    unsigned train = 80;
    unsigned val = 10;
    unsigned test = 10;
};

/// Splits `n` items by `ratios` with largest-remainder rounding. Ties in the
/// fractional part go to the earlier bucket.
std::array<std::size_t, 3> largest_remainder_split(std::size_t n, const SplitRatios& ratios);

/// Per-class seeded shuffle, then partition by largest remainder. Classes with
/// fewer than three images go entirely to train; a warning is appended.
DatasetManifest split_dataset(DatasetManifest manifest, const SplitRatios& ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Reads a manifest; its root becomes the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestFile = "manifest.json";

/// Uses root/manifest.json when present, otherwise scans and splits.
DatasetManifest open_dataset(const std::filesystem::path& root, std::uint64_t seed);

enum class StatsScope { train, all };

std::string to_string(StatsScope scope);
StatsScope parse_stats_scope(std::string_view text);

/// Preprocessed tensors aligned with the manifest records.
struct ImageSet {
    std::vector<Tensor> images;
    ChannelStats stats;
    std::size_t extent = 105;
};

/// Decodes and resizes every record, measures channel statistics over the
/// chosen scope, then normalizes everything with them.
ImageSet load_images(const DatasetManifest& manifest, std::size_t extent, StatsScope scope);
/// Same, with statistics supplied (e.g. from a checkpoint).
ImageSet load_images(const DatasetManifest& manifest, std::size_t extent, const ChannelStats& stats);

/// Channel statistics at `extent` over the given scope, without normalizing.
DatasetStats measure_stats(const DatasetManifest& manifest, std::size_t extent, StatsScope scope);

}  // namespace resinsort
