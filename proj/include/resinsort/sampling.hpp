#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resinsort {

class Rng;

/// Indices refer to positions in the label list handed to the sampler.
struct PairSample {
    std::size_t first = 0;
    std::size_t second = 0;
    int y = 0;  // 0 when both images share a class, 1 otherwise

    friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct TripletSample {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;

    friend bool operator==(const TripletSample&, const TripletSample&) = default;
};

/// Exactly n pairs, round(n * positive_fraction) of them same-class, in
/// shuffled order. Same-class pairs pick the first image uniformly among
/// images whose class has a second member, then a distinct partner from that
/// class. Cross-class pairs pick the first image uniformly, then a partner
/// uniformly from all other classes. Throws DataError when the labels cannot
/// supply the requested mix.
std::vector<PairSample> sample_pairs(std::span<const int> labels, std::size_t n, double positive_fraction, Rng& rng);

/// Anchor uniform among images with a same-class partner, positive a distinct
/// image of that class, negative uniform among images of other classes.
std::vector<TripletSample> sample_triplets(std::span<const int> labels, std::size_t n, Rng& rng);

}  // namespace resinsort
