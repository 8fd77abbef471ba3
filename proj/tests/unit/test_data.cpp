#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "helpers.hpp"
#include "resinsort/dataset.hpp"
#include "resinsort/image.hpp"
#include "resinsort/sampling.hpp"
#include "resinsort/synth.hpp"

using namespace resinsort;
namespace fs = std::filesystem;

namespace {

// Hat-kernel bilinear weights over clamped half-pixel source coordinates.
Tensor hat_resize(const Tensor& in, size_t oh, size_t ow) {
    const size_t ih = in.extent(0), iw = in.extent(1), depth = in.extent(2);
    auto src = [](size_t o, size_t out, size_t n) {
        double s = (static_cast<double>(o) + 0.5) * static_cast<double>(n) / static_cast<double>(out) - 0.5;
        return std::min(std::max(s, 0.0), static_cast<double>(n - 1));
    };
    Tensor out({oh, ow, depth});
    for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) {
            const double sy = src(i, oh, ih), sx = src(j, ow, iw);
            for (size_t c = 0; c < depth; ++c) {
                double acc = 0.0;
                for (size_t y = 0; y < ih; ++y) {
                    const double wy = std::max(0.0, 1.0 - std::abs(sy - static_cast<double>(y)));
                    if (wy == 0.0) continue;
                    for (size_t x = 0; x < iw; ++x) {
                        const double wx = std::max(0.0, 1.0 - std::abs(sx - static_cast<double>(x)));
                        acc += wy * wx * in.at(y, x, c);
                    }
                }
                out.at(i, j, c) = acc;
            }
        }
    return out;
}

DatasetManifest in_memory(const std::vector<size_t>& counts) {
    DatasetManifest m;
    for (size_t c = 0; c < counts.size(); ++c) {
        m.classes.push_back({"0" + std::to_string(c + 1), "class" + std::to_string(c)});
        for (size_t i = 0; i < counts[c]; ++i) {
            const std::string id = m.classes.back().code + "/img" + std::to_string(i);
            m.records.push_back({id, static_cast<int>(c), Split::unassigned, id + ".ppm"});
        }
    }
    return m;
}

RgbImage solid(size_t w, size_t h, uint8_t r, uint8_t g, uint8_t b) {
    RgbImage img{w, h, {}};
    for (size_t i = 0; i < w * h; ++i) img.pixels.insert(img.pixels.end(), {r, g, b});
    return img;
}

}  // namespace

TEST_CASE("largest remainder split sizes") {
    CHECK(largest_remainder_split(2200, {}) == std::array<size_t, 3>{1760, 220, 220});
    CHECK(largest_remainder_split(40, {}) == std::array<size_t, 3>{32, 4, 4});
    CHECK(largest_remainder_split(5, {}) == std::array<size_t, 3>{4, 1, 0});
    CHECK(largest_remainder_split(0, {}) == std::array<size_t, 3>{0, 0, 0});
    CHECK_THROWS(largest_remainder_split(10, {50, 10, 10}));
}

TEST_CASE("split is a seeded per-class partition") {
    auto m = in_memory({2200, 600, 640, 520, 40});
    auto a = split_dataset(m, {}, 42);
    auto b = split_dataset(m, {}, 42);
    auto c = split_dataset(m, {}, 43);
    CHECK(a.records == b.records);
    CHECK(a.records != c.records);
    CHECK(a.indices_in(Split::train).size() == 3200);
    CHECK(a.indices_in(Split::val).size() == 400);
    CHECK(a.indices_in(Split::test).size() == 400);
    CHECK(a.class_counts(Split::train)[0] == 1760);
    CHECK(a.class_counts(Split::test)[4] == 4);
    CHECK(a.indices_in(Split::unassigned).empty());
}

TEST_CASE("tiny classes go to train with a warning") {
    std::vector<std::string> warnings;
    auto m = split_dataset(in_memory({10, 2}), {}, 1, &warnings);
    CHECK(m.class_counts(Split::train)[1] == 2);
    CHECK(warnings.size() == 1);
}

TEST_CASE("pair sampling honours counts and labels") {
    std::vector<int> labels;
    for (int c = 0; c < 5; ++c) labels.insert(labels.end(), 80, c);
    Rng rng(9);
    auto four = sample_pairs(labels, 4, 0.5, rng);
    CHECK(std::count_if(four.begin(), four.end(), [](const PairSample& p) { return p.y == 0; }) == 2);
    auto same = sample_pairs(labels, 50, 1.0, rng);
    CHECK(std::all_of(same.begin(), same.end(), [](const PairSample& p) { return p.y == 0; }));

    const size_t n = 5000;
    auto pairs = sample_pairs(labels, n, 0.5, rng);
    std::array<double, 5> first{}, second{};
    for (const auto& p : pairs) {
        CHECK(p.first != p.second);
        CHECK((labels[p.first] == labels[p.second]) == (p.y == 0));
        first[static_cast<size_t>(labels[p.first])] += 1;
        second[static_cast<size_t>(labels[p.second])] += 1;
    }
    const double mean = n / 5.0, sigma = std::sqrt(n * 0.2 * 0.8);
    for (int c = 0; c < 5; ++c) {
        CHECK(std::abs(first[c] - mean) < 3 * sigma);
        CHECK(std::abs(second[c] - mean) < 3 * sigma);
    }
    CHECK_THROWS_AS(sample_pairs(std::vector<int>{0, 1}, 2, 1.0, rng), DataError);
}

TEST_CASE("triplet sampling covers the whole support") {
    const std::vector<int> labels{0, 0, 1, 1};
    Rng rng(4);
    auto ts = sample_triplets(labels, 10000, rng);
    std::set<std::tuple<size_t, size_t, size_t>> seen;
    for (const auto& t : ts) {
        CHECK(t.anchor != t.positive);
        CHECK(labels[t.anchor] == labels[t.positive]);
        CHECK(labels[t.anchor] != labels[t.negative]);
        seen.insert({t.anchor, t.positive, t.negative});
    }
    CHECK(seen.size() == 8);
    Rng r1(5), r2(5);
    CHECK(sample_triplets(labels, 100, r1) == sample_triplets(labels, 100, r2));
}

TEST_CASE("bilinear resize against the hat-kernel oracle") {
    Tensor board({210, 210, 3});
    for (size_t y = 0; y < 210; ++y)
        for (size_t x = 0; x < 210; ++x)
            for (size_t c = 0; c < 3; ++c) board.at(y, x, c) = ((y / 3 + x / 3 + c) % 2) ? 1.0 : 0.0;
    for (auto [oh, ow] : {std::pair<size_t, size_t>{105, 105}, {77, 131}}) {
        auto got = resize_bilinear(board, oh, ow);
        auto want = hat_resize(board, oh, ow);
        double worst = 0.0;
        for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
        CHECK(worst < 1e-9);
    }
    Rng rng(3);
    auto x = rs_test::random_tensor({105, 105, 3}, rng);
    CHECK(resize_bilinear(x, 105, 105) == x);
}

TEST_CASE("normalization zeroes a constant image") {
    auto t = to_tensor(solid(4, 4, 10, 200, 30));
    auto stats = compute_channel_stats({t});
    auto n = normalize(t, stats);
    for (double v : n.values()) CHECK(std::abs(v) < 1e-9);

    Rng rng(8);
    std::vector<Tensor> set;
    for (int i = 0; i < 6; ++i) set.push_back(rs_test::random_tensor({5, 5, 3}, rng, 0.0, 1.0));
    const auto s = compute_channel_stats(set);
    std::array<double, 3> sum{}, sq{};
    for (const auto& im : set) {
        auto z = normalize(im, s);
        for (size_t i = 0; i < z.size(); ++i) {
            sum[i % 3] += z[i];
            sq[i % 3] += z[i] * z[i];
        }
    }
    for (int c = 0; c < 3; ++c) {
        const double n_px = 6 * 25;
        CHECK(std::abs(sum[c] / n_px) < 1e-6);
        CHECK(std::abs(sq[c] / n_px - 1.0) < 1e-6);
    }
}

TEST_CASE("ppm round trip and malformed input") {
    auto dir = rs_test::scratch_dir("ppm");
    RgbImage img{3, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
    write_ppm(dir / "a.ppm", img);
    CHECK(read_ppm(dir / "a.ppm") == img);
    CHECK_THROWS_AS(decode_ppm({'P', '3', '\n'}), DataError);
    std::vector<uint8_t> cut{'P', '6', ' ', '2', ' ', '2', ' ', '2', '5', '5', '\n', 1, 2, 3};
    CHECK_THROWS_AS(decode_ppm(cut), DataError);
}

TEST_CASE("dataset loading, corrupt files and manifest round trip") {
    auto root = rs_test::scratch_dir("tree");
    fs::create_directories(root / "01-PET");
    fs::create_directories(root / "02-HDPE");
    for (int i = 0; i < 5; ++i) {
        write_ppm(root / "01-PET" / ("a" + std::to_string(i) + ".ppm"), solid(4, 4, 200, 10, 10));
        write_ppm(root / "02-HDPE" / ("b" + std::to_string(i) + ".ppm"), solid(4, 4, 10, 10, 200));
    }
    auto m = load_dataset(root);
    CHECK(m.num_classes() == 2);
    CHECK(m.records.size() == 10);
    CHECK(m.classes[1].code == "02");
    CHECK(m.classes[1].name == "HDPE");
    CHECK(m.find_class("HDPE") == 1);
    CHECK(m.find_class("01-PET") == 0);

    auto split = split_dataset(m, {}, 3);
    split.stats = measure_stats(split, 8, StatsScope::train);
    save_manifest(split, root / kManifestFile);
    auto back = load_manifest(root / kManifestFile);
    CHECK(back.records == split.records);
    CHECK(back.classes == split.classes);
    CHECK(back.stats == split.stats);
    CHECK(open_dataset(root, 999).records == split.records);

    std::ofstream(root / "02-HDPE" / "broken.ppm") << "not an image";
    try {
        load_dataset(root);
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("broken.ppm") != std::string::npos);
    }

    auto one = rs_test::scratch_dir("single");
    fs::create_directories(one / "07-Other");
    write_ppm(one / "07-Other" / "x.ppm", solid(2, 2, 1, 2, 3));
    auto single = load_dataset(one);
    CHECK(single.num_classes() == 1);
    CHECK(single.records.size() == 1);
}

TEST_CASE("synthetic generator: counts, determinism and separability") {
    auto a = rs_test::scratch_dir("synth_a"), b = rs_test::scratch_dir("synth_b");
    SynthOptions opt{5, 100, 7, 32};
    auto m = synth_generate(opt, a);
    synth_generate(opt, b);
    CHECK(m.records.size() == 500);
    for (auto n : m.class_counts()) CHECK(n == 100);
    for (const auto& r : m.records) CHECK(read_ppm(a / r.path) == read_ppm(b / r.path));
    CHECK_THROWS_AS(synth_generate({0, 10, 1, 32}, rs_test::scratch_dir("synth_bad")), std::invalid_argument);

    // Nearest class centroid on 8x8 thumbnails, fitted on train and scored on test.
    auto thumb = [&](const ImageRecord& r) { return resize_bilinear(to_tensor(read_ppm(a / r.path)), 8, 8); };
    std::vector<std::vector<double>> centroid(5, std::vector<double>(8 * 8 * 3, 0.0));
    std::vector<double> count(5, 0.0);
    for (auto i : m.indices_in(Split::train)) {
        auto t = thumb(m.records[i]);
        const auto c = static_cast<size_t>(m.records[i].class_id);
        for (size_t k = 0; k < t.size(); ++k) centroid[c][k] += t[k];
        count[c] += 1;
    }
    for (size_t c = 0; c < 5; ++c)
        for (auto& v : centroid[c]) v /= count[c];
    size_t right = 0, total = 0;
    for (auto i : m.indices_in(Split::test)) {
        auto t = thumb(m.records[i]);
        size_t best = 0;
        double best_d = 1e300;
        for (size_t c = 0; c < 5; ++c) {
            double d = 0.0;
            for (size_t k = 0; k < t.size(); ++k) d += (t[k] - centroid[c][k]) * (t[k] - centroid[c][k]);
            if (d < best_d) best_d = d, best = c;
        }
        right += best == static_cast<size_t>(m.records[i].class_id);
        ++total;
    }
    CHECK(static_cast<double>(right) / static_cast<double>(total) > 0.2);
}
