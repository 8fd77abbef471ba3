#pragma once

#include <span>
#include <vector>

namespace resinsort {

using EmbeddingVector = std::vector<double>;

/// Elementwise |a_i - b_i|. The result is a vector, not a norm.
EmbeddingVector l1_distance(std::span<const double> a, std::span<const double> b);

double squared_euclidean_distance(std::span<const double> a, std::span<const double> b);
double euclidean_distance(std::span<const double> a, std::span<const double> b);

}  // namespace resinsort
