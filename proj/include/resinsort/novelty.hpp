#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resinsort/dataset.hpp"
#include "resinsort/distance.hpp"
#include "resinsort/eval.hpp"

namespace resinsort {

enum class ProjectionKind { pca, lda };

std::string to_string(ProjectionKind kind);
ProjectionKind parse_projection_kind(std::string_view text);

/// Fitted linear projection: (x - mean) . directions^T.
struct ProjectionModel {
    ProjectionKind kind = ProjectionKind::pca;
    EmbeddingVector mean;
    std::vector<EmbeddingVector> directions;  // orthonormal, most informative first
    std::vector<double> eigenvalues;          // PCA: variances; LDA: Fisher criteria

    std::size_t dims() const noexcept { return directions.size(); }
    std::size_t width() const noexcept { return mean.size(); }
};

/// Top `dims` eigenvectors of the sample covariance (n - 1 denominator).
/// Throws std::invalid_argument unless 1 <= dims <= min(width, samples) and samples >= 2.
ProjectionModel fit_pca(std::span<const EmbeddingVector> rows, std::size_t dims);

inline constexpr double kLdaRidge = 1e-6;

/// Generalized eigenvectors of (S_b, S_w + ridge I), ordered by eigenvalue and
/// then Gram-Schmidt orthonormalized. Throws std::invalid_argument when dims
/// exceeds C - 1 or any class has fewer than two samples.
ProjectionModel fit_lda(std::span<const EmbeddingVector> rows, std::span<const int> labels, std::size_t dims,
                        double ridge = kLdaRidge);

EmbeddingVector project(const ProjectionModel& model, std::span<const double> row);
std::vector<EmbeddingVector> project(const ProjectionModel& model, std::span<const EmbeddingVector> rows);

struct OutlierParams {
    double radius = 1.0;            // X
    std::size_t min_neighbors = 1;  // Y

    void validate() const;
};

/// Flags item i when fewer than Y reference points lie within distance X
/// (inclusive). When both id lists are given, a reference point with the same
/// id as the item is not counted.
std::vector<bool> detect_outliers(std::span<const EmbeddingVector> items, std::span<const EmbeddingVector> reference,
                                  const OutlierParams& params, std::span<const std::string> item_ids = {},
                                  std::span<const std::string> reference_ids = {});

struct ConfusionCounts {
    std::size_t tp = 0;  // new, flagged
    std::size_t fp = 0;  // known, flagged
    std::size_t tn = 0;  // known, not flagged
    std::size_t fn = 0;  // new, not flagged

    double tp_rate() const;
    double fp_rate() const;
    double youden() const { return tp_rate() - fp_rate(); }
};

/// `truth[i]` is true when item i belongs to the new class.
ConfusionCounts confusion(const std::vector<bool>& flags, const std::vector<bool>& truth);

/// Y candidates 1..20.
std::vector<std::size_t> default_count_grid();

/// `size` X candidates spread evenly over the quantiles of the distances from
/// `items` to their nearest max(count_grid) reference points.
std::vector<double> default_radius_grid(std::span<const EmbeddingVector> items,
                                        std::span<const EmbeddingVector> reference,
                                        std::span<const std::size_t> count_grid, std::size_t size = 64);

struct TuneResult {
    OutlierParams params;
    ConfusionCounts counts;
};

/// Exhaustive search for the (X, Y) maximizing Youden's J on the tuning items.
/// Ties prefer the smaller X, then the smaller Y.
TuneResult tune_params(std::span<const EmbeddingVector> known, std::span<const EmbeddingVector> fresh,
                       std::span<const EmbeddingVector> reference, std::span<const double> radius_grid,
                       std::span<const std::size_t> count_grid, std::span<const std::string> known_ids = {},
                       std::span<const std::string> fresh_ids = {}, std::span<const std::string> reference_ids = {});

/// Projected points with their provenance, as written to CSV.
struct ProjectionTable {
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<bool> is_new;
    std::vector<EmbeddingVector> points;

    std::size_t size() const noexcept { return points.size(); }
};

/// Header `id,label,is_new,c1..cD`; values at 17 significant digits.
std::string projection_csv(const ProjectionTable& table);
void export_projection_csv(const ProjectionTable& table, const std::filesystem::path& path);
ProjectionTable parse_projection_csv(std::string_view text);
ProjectionTable read_projection_csv(const std::filesystem::path& path);

/// Which points the radius/count rule counts as neighbours.
enum class ReferenceSet { train, pool };

std::string to_string(ReferenceSet reference);
ReferenceSet parse_reference_set(std::string_view text);

struct NoveltyConfig {
    ProjectionKind method = ProjectionKind::lda;
    std::vector<std::size_t> dims{1, 2, 3};
    int holdout_class = 0;
    ReferenceSet reference = ReferenceSet::train;
    std::size_t radius_grid_size = 64;
    std::vector<double> radius_grid;  // empty: default_radius_grid per dimension
    std::vector<std::size_t> count_grid = default_count_grid();

    void validate() const;
};

struct NoveltyRow {
    std::size_t dims = 0;
    OutlierParams params;
    ConfusionCounts tuning;
    ConfusionCounts test;
};

struct NoveltyReport {
    ProjectionKind method = ProjectionKind::lda;
    std::vector<NoveltyRow> rows;

    /// One row per dimension: TP, FP, TN, FN and the two rates in percent.
    std::string to_text() const;
    std::string to_csv() const;
};

struct NoveltyRun {
    NoveltyReport report;
    std::vector<ProjectionTable> projections;  // test pool, one per row of the report
    std::size_t pool_size = 0;
};

/// Record indices of the evaluation pool: test-split images of the known
/// classes plus every image of the held-out class.
std::vector<std::size_t> novelty_pool(const DatasetManifest& manifest, int holdout_class);

/// Fits on training-split embeddings of the known classes, tunes (X, Y) per
/// dimension on validation-split embeddings (known and held-out), then scores
/// the pool. `index` must hold one row per manifest record, in record order.
NoveltyRun run_novelty(const EmbeddingIndex& index, const DatasetManifest& manifest, const NoveltyConfig& config);

}  // namespace resinsort
