#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resinsort/dataset.hpp"
#include "resinsort/distance.hpp"
#include "resinsort/nets.hpp"

namespace resinsort {

/// One embedding row per image, with aligned labels and ids.
struct EmbeddingIndex {
    std::vector<EmbeddingVector> rows;
    std::vector<int> labels;
    std::vector<std::string> ids;

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t width() const noexcept { return rows.empty() ? 0 : rows.front().size(); }
    /// Throws DimensionError if the three columns disagree in length or rows differ in width.
    void validate() const;
    /// Rows selected by position, in the given order.
    EmbeddingIndex subset(std::span<const std::size_t> positions) const;
};

/// Embeds every manifest record (or only `records`, in that order).
EmbeddingIndex build_index(const Model& model, const DatasetManifest& manifest, const ImageSet& images,
                           std::optional<std::vector<std::size_t>> records = std::nullopt);

/// Lower means more alike.
using Dissimilarity = std::function<double(std::span<const double>, std::span<const double>)>;

Dissimilarity euclidean_dissimilarity();

/// 1 - p for the Siamese head, i.e. the predicted pair label y (0 = same class).
/// Taking the least of these picks the most similar support image, which keeps
/// the "least output" rule consistent with the loss convention.
Dissimilarity siamese_dissimilarity(const SiameseModel& model);

/// Siamese head for Siamese models, Euclidean distance for triplet models.
Dissimilarity dissimilarity_for(const Model& model);

/// Which end of the score wins an episode.
enum class ScorePolarity { least, greatest };

std::string to_string(ScorePolarity polarity);
ScorePolarity parse_score_polarity(std::string_view text);

struct SupportItem {
    int class_id = 0;
    std::size_t row = 0;  // row of the support image in the index
};

/// Scores the query against every support image and returns the class whose
/// mean score wins under `polarity`. Ties go to the lowest class id. Throws
/// std::invalid_argument when a candidate class has no support image.
int one_shot_episode(const EmbeddingIndex& index, std::span<const double> query, std::span<const SupportItem> support,
                     std::span<const int> classes, const Dissimilarity& score,
                     ScorePolarity polarity = ScorePolarity::least);

struct EvalConfig {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t episodes = 0;  // 0: one episode per query
    std::vector<std::size_t> knn_ks{3, 5, 7};
    std::uint64_t seed = 0;
    ScorePolarity polarity = ScorePolarity::least;

    void validate() const;
};

struct OneShotResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }

    std::string to_text(std::string_view method, const EvalConfig& config) const;
    std::string to_csv(std::string_view method, const EvalConfig& config) const;
};

/// N-way K-shot protocol: for each query, the candidate classes are its own
/// class plus n_way - 1 others drawn at random from the support pool, each
/// represented by k_shot random support images other than the query itself.
OneShotResult one_shot_accuracy(const EmbeddingIndex& index, std::span<const std::size_t> query_rows,
                                std::span<const std::size_t> support_rows, const EvalConfig& config,
                                const Dissimilarity& score);

/// Majority vote among the k nearest rows by Euclidean distance, skipping rows
/// whose id equals `query_id`. Neighbors are ordered by (distance, id); a tied
/// vote goes to the tied class seen first in that order. Throws
/// std::invalid_argument unless 1 <= k <= available rows.
int knn_classify(const EmbeddingIndex& index, std::span<const double> query, std::string_view query_id, std::size_t k);

/// Classifies row `query_row` against every other row.
int knn_classify(const EmbeddingIndex& index, std::size_t query_row, std::size_t k);

struct KnnRow {
    std::size_t k = 0;
    std::vector<std::size_t> correct;  // per class
    std::vector<std::size_t> total;    // per class
    double average = 0.0;              // unweighted mean of per-class accuracies
    double overall = 0.0;              // correct / total over all queries

    double class_accuracy(std::size_t c) const;
};

struct KnnReport {
    std::vector<std::string> class_names;
    std::vector<KnnRow> rows;

    /// Aligned table: one row per K, one column per class, then the average (percent).
    std::string to_text() const;
    std::string to_csv() const;
};

/// Runs knn_classify for each query against `index` at every K.
KnnReport knn_report(const EmbeddingIndex& index, const EmbeddingIndex& queries, std::span<const std::size_t> ks,
                     std::vector<std::string> class_names);

}  // namespace resinsort
