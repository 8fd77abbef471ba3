#include "resinsort/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include <json.hpp>

#include "resinsort/parallel.hpp"
#include "resinsort/random.hpp"

namespace resinsort {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::unassigned: break;
    }
    return "unassigned";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "val") return Split::val;
    if (text == "test") return Split::test;
    if (text == "unassigned") return Split::unassigned;
    throw DataError("unknown split '" + std::string(text) + "'");
}

std::string to_string(StatsScope scope) { return scope == StatsScope::train ? "train" : "all"; }

StatsScope parse_stats_scope(std::string_view text) {
    if (text == "train") return StatsScope::train;
    if (text == "all") return StatsScope::all;
    throw std::invalid_argument("unknown stats scope '" + std::string(text) + "' (expected train or all)");
}

std::vector<std::size_t> DatasetManifest::indices_in(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == split) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> DatasetManifest::class_counts(std::optional<Split> split) const {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (const auto& r : records) {
        if (!split || r.split == *split) ++counts.at(static_cast<std::size_t>(r.class_id));
    }
    return counts;
}

int DatasetManifest::find_class(std::string_view key) const {
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& e = classes[c];
        if (key == e.code || key == e.name || key == e.code + "-" + e.name) return static_cast<int>(c);
    }
    throw DataError("no class matches '" + std::string(key) + "'");
}

namespace {

std::map<std::string, ImageDecoder>& decoders() {
    static std::map<std::string, ImageDecoder> table{{".ppm", [](const fs::path& p) { return read_ppm(p); }}};
    return table;
}

std::mutex& decoders_mutex() {
    static std::mutex m;
    return m;
}

std::string lower_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::optional<ImageDecoder> decoder_for(const fs::path& p) {
    std::lock_guard lock(decoders_mutex());
    auto it = decoders().find(lower_extension(p));
    if (it == decoders().end()) return std::nullopt;
    return it->second;
}

ClassEntry class_entry_from_dir(const std::string& dir) {
    const auto dash = dir.find_first_of("-_");
    if (dash != std::string::npos && dash > 0 && dash + 1 < dir.size()) {
        return {dir.substr(0, dash), dir.substr(dash + 1)};
    }
    return {dir, dir};
}

}  // namespace

void register_image_decoder(const std::string& extension, ImageDecoder decoder) {
    std::lock_guard lock(decoders_mutex());
    decoders()[lower_extension(fs::path("x" + extension))] = std::move(decoder);
}

RgbImage decode_image(const fs::path& path) {
    auto decoder = decoder_for(path);
    if (!decoder) throw DataError(path.string() + ": no decoder for extension '" + path.extension().string() + "'");
    return (*decoder)(path);
}

DatasetManifest load_dataset(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw DataError(root.string() + ": dataset root is not a directory");

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError(root.string() + ": no class subdirectories");

    DatasetManifest manifest;
    manifest.root = root;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        const std::string dir = class_dirs[c].filename().string();
        manifest.classes.push_back(class_entry_from_dir(dir));
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
            if (entry.is_regular_file() && decoder_for(entry.path())) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("class '" + dir + "' contains no images");
        for (const auto& f : files) {
            const std::string rel = dir + "/" + f.filename().string();
            const std::string id = dir + "/" + f.stem().string();
            manifest.records.push_back({id, static_cast<int>(c), Split::unassigned, rel});
        }
    }

    // Decode everything once so a corrupt file fails here, naming its path.
    std::vector<std::string> failures(manifest.records.size());
    parallel_for(manifest.records.size(), [&](std::size_t i) {
        try {
            (void)decode_image(manifest.resolve(manifest.records[i]));
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    std::string message;
    for (const auto& f : failures) {
        if (!f.empty()) message += (message.empty() ? "" : "; ") + f;
    }
    if (!message.empty()) throw DataError("unreadable images: " + message);
    return manifest;
}

std::array<std::size_t, 3> largest_remainder_split(std::size_t n, const SplitRatios& ratios) {
    const std::array<std::size_t, 3> r{ratios.train, ratios.val, ratios.test};
    const std::size_t total = r[0] + r[1] + r[2];
    if (total != 100) throw std::invalid_argument("split ratios must sum to 100, got " + std::to_string(total));
    std::array<std::size_t, 3> out{};
    std::array<std::size_t, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        out[k] = n * r[k] / total;
        rem[k] = n * r[k] % total;
        assigned += out[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % 3]];
    return out;
}

DatasetManifest split_dataset(DatasetManifest manifest, const SplitRatios& ratios, std::uint64_t seed,
                              std::vector<std::string>* warnings) {
    (void)largest_remainder_split(0, ratios);  // validates the ratios up front
    Rng rng(seed);
    for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            if (manifest.records[i].class_id == static_cast<int>(c)) members.push_back(i);
        }
        rng.shuffle(std::span<std::size_t>(members));
        if (members.size() < 3) {
            for (auto i : members) manifest.records[i].split = Split::train;
            if (warnings) {
                warnings->push_back("class '" + manifest.classes[c].code + "-" + manifest.classes[c].name + "' has " +
                                    std::to_string(members.size()) + " image(s); all assigned to train");
            }
            continue;
        }
        const auto sizes = largest_remainder_split(members.size(), ratios);
        for (std::size_t k = 0; k < members.size(); ++k) {
            Split s = Split::test;
            if (k < sizes[0]) s = Split::train;
            else if (k < sizes[0] + sizes[1]) s = Split::val;
            manifest.records[members[k]].split = s;
        }
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    json doc;
    doc["classes"] = json::array();
    for (const auto& c : manifest.classes) doc["classes"].push_back({{"code", c.code}, {"name", c.name}});
    doc["records"] = json::array();
    for (const auto& r : manifest.records) {
        doc["records"].push_back({{"id", r.id}, {"class", r.class_id}, {"split", to_string(r.split)}, {"path", r.path}});
    }
    if (manifest.stats) {
        const auto& s = *manifest.stats;
        doc["stats"] = {{"mean", s.channels.mean}, {"var", s.channels.var}, {"extent", s.extent}};
    }
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot write manifest");
    out << doc.dump(2) << '\n';
    if (!out) throw DataError(path.string() + ": write failed");
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open manifest");
    DatasetManifest m;
    m.root = path.parent_path();
    try {
        const json doc = json::parse(in);
        for (const auto& c : doc.at("classes")) m.classes.push_back({c.at("code"), c.at("name")});
        for (const auto& r : doc.at("records")) {
            ImageRecord rec{r.at("id"), r.at("class").get<int>(), parse_split(r.at("split").get<std::string>()),
                            r.at("path")};
            if (rec.class_id < 0 || static_cast<std::size_t>(rec.class_id) >= m.classes.size()) {
                throw DataError("record '" + rec.id + "' has class " + std::to_string(rec.class_id) +
                                " outside the class table");
            }
            m.records.push_back(std::move(rec));
        }
        if (doc.contains("stats")) {
            const auto& s = doc.at("stats");
            DatasetStats stats;
            stats.channels.mean = s.at("mean").get<std::array<double, 3>>();
            stats.channels.var = s.at("var").get<std::array<double, 3>>();
            stats.extent = s.value("extent", std::size_t{105});
            m.stats = stats;
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed manifest: " + e.what());
    }
    return m;
}

DatasetManifest open_dataset(const fs::path& root, std::uint64_t seed) {
    const fs::path manifest_path = root / kManifestFile;
    if (fs::exists(manifest_path)) return load_manifest(manifest_path);
    std::vector<std::string> warnings;
    auto m = split_dataset(load_dataset(root), SplitRatios{}, seed, &warnings);
    for (const auto& w : warnings) std::clog << "warning: " << w << '\n';
    return m;
}

namespace {

std::vector<Tensor> decode_resized(const DatasetManifest& manifest, std::size_t extent) {
    std::vector<Tensor> raw(manifest.records.size());
    parallel_for(raw.size(), [&](std::size_t i) {
        raw[i] = resize_bilinear(to_tensor(decode_image(manifest.resolve(manifest.records[i]))), extent, extent);
    });
    return raw;
}

ChannelStats stats_over(const DatasetManifest& manifest, const std::vector<Tensor>& raw, StatsScope scope) {
    if (scope == StatsScope::all) return compute_channel_stats(raw);
    std::vector<Tensor> subset;
    for (auto i : manifest.indices_in(Split::train)) subset.push_back(raw[i]);
    if (subset.empty()) throw DataError("no training records to measure normalization statistics on");
    return compute_channel_stats(subset);
}

}  // namespace

DatasetStats measure_stats(const DatasetManifest& manifest, std::size_t extent, StatsScope scope) {
    return {stats_over(manifest, decode_resized(manifest, extent), scope), extent};
}

ImageSet load_images(const DatasetManifest& manifest, std::size_t extent, StatsScope scope) {
    auto raw = decode_resized(manifest, extent);
    const ChannelStats stats = stats_over(manifest, raw, scope);
    for (auto& t : raw) t = normalize(t, stats);
    return {std::move(raw), stats, extent};
}

ImageSet load_images(const DatasetManifest& manifest, std::size_t extent, const ChannelStats& stats) {
    auto raw = decode_resized(manifest, extent);
    for (auto& t : raw) t = normalize(t, stats);
    return {std::move(raw), stats, extent};
}

}  // namespace resinsort
