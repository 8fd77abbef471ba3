#include "resinsort/distance.hpp"

#include <cmath>
#include <string>

#include "resinsort/tensor.hpp"

namespace resinsort {

namespace {
void require_equal_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": length " + std::to_string(a.size()) + " != " +
                             std::to_string(b.size()));
    }
}
}  // namespace

EmbeddingVector l1_distance(std::span<const double> a, std::span<const double> b) {
    require_equal_length(a, b, "l1_distance");
    EmbeddingVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i] - b[i]);
    return out;
}

double squared_euclidean_distance(std::span<const double> a, std::span<const double> b) {
    require_equal_length(a, b, "euclidean_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_euclidean_distance(a, b));
}

}  // namespace resinsort
