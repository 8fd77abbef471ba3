#include "resinsort/sampling.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "resinsort/image.hpp"
#include "resinsort/random.hpp"

namespace resinsort {

namespace {

struct ClassIndex {
    std::map<int, std::vector<std::size_t>> members;
    std::vector<std::size_t> with_partner;  // images whose class has >= 2 members

    explicit ClassIndex(std::span<const int> labels) {
        for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (members[labels[i]].size() >= 2) with_partner.push_back(i);
        }
    }

    std::size_t same_class_partner(std::size_t first, int label, Rng& rng) const {
        const auto& pool = members.at(label);
        // Uniform over the pool minus `first`: a hit on `first` maps to the last slot.
        std::size_t k = rng.index(pool.size() - 1);
        if (pool[k] == first) k = pool.size() - 1;
        return pool[k];
    }

    std::size_t other_class_member(std::span<const int> labels, int label, Rng& rng) const {
        const std::size_t others = labels.size() - members.at(label).size();
        std::size_t k = rng.index(others);
        for (const auto& [cls, pool] : members) {
            if (cls == label) continue;
            if (k < pool.size()) return pool[k];
            k -= pool.size();
        }
        throw std::logic_error("other_class_member: index past end");
    }
};

}  // namespace

std::vector<PairSample> sample_pairs(std::span<const int> labels, std::size_t n, double positive_fraction, Rng& rng) {
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
        throw std::invalid_argument("positive fraction must be in [0, 1]");
    }
    const ClassIndex index(labels);
    const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_fraction));
    const std::size_t negatives = n - positives;
    if (positives > 0 && index.with_partner.empty()) {
        throw DataError("cannot draw same-class pairs: no class has two images");
    }
    if (negatives > 0 && index.members.size() < 2) {
        throw DataError("cannot draw cross-class pairs from a single class");
    }

    std::vector<PairSample> pairs;
    pairs.reserve(n);
    for (std::size_t k = 0; k < positives; ++k) {
        const std::size_t first = index.with_partner[rng.index(index.with_partner.size())];
        pairs.push_back({first, index.same_class_partner(first, labels[first], rng), 0});
    }
    for (std::size_t k = 0; k < negatives; ++k) {
        const std::size_t first = rng.index(labels.size());
        pairs.push_back({first, index.other_class_member(labels, labels[first], rng), 1});
    }
    rng.shuffle(std::span<PairSample>(pairs));
    return pairs;
}

std::vector<TripletSample> sample_triplets(std::span<const int> labels, std::size_t n, Rng& rng) {
    const ClassIndex index(labels);
    if (index.members.size() < 2) throw DataError("cannot draw triplets from fewer than two classes");
    if (index.with_partner.empty()) throw DataError("cannot draw triplets: no class has two images");

    std::vector<TripletSample> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t anchor = index.with_partner[rng.index(index.with_partner.size())];
        const int label = labels[anchor];
        const std::size_t positive = index.same_class_partner(anchor, label, rng);
        const std::size_t negative = index.other_class_member(labels, label, rng);
        out.push_back({anchor, positive, negative});
    }
    return out;
}

}  // namespace resinsort
