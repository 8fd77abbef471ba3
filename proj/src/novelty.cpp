#include "resinsort/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "resinsort/linalg.hpp"
#include "resinsort/parallel.hpp"

namespace resinsort {

std::string to_string(ProjectionKind kind) { return kind == ProjectionKind::pca ? "pca" : "lda"; }

ProjectionKind parse_projection_kind(std::string_view text) {
    if (text == "pca") return ProjectionKind::pca;
    if (text == "lda") return ProjectionKind::lda;
    throw std::invalid_argument("unknown projection method '" + std::string(text) + "' (expected pca or lda)");
}

namespace {

std::size_t common_width(std::span<const EmbeddingVector> rows) {
    if (rows.empty()) throw std::invalid_argument("no embeddings to fit");
    const std::size_t w = rows.front().size();
    if (w == 0) throw DimensionError("embeddings have zero width");
    for (const auto& r : rows) {
        if (r.size() != w) throw DimensionError("embeddings differ in width");
    }
    return w;
}

EmbeddingVector mean_of(std::span<const EmbeddingVector> rows, std::size_t width) {
    EmbeddingVector m(width, 0.0);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < width; ++j) m[j] += r[j];
    }
    for (auto& v : m) v /= static_cast<double>(rows.size());
    return m;
}

// Adds weight * (x - mu)(x - mu)^T into s.
void add_outer(Matrix& s, std::span<const double> x, std::span<const double> mu, double weight) {
    const std::size_t n = s.rows;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - mu[i];
    for (std::size_t i = 0; i < n; ++i) {
        const double di = weight * d[i];
        for (std::size_t j = 0; j < n; ++j) s(i, j) += di * d[j];
    }
}

void sign_normalize(EmbeddingVector& v) {
    std::size_t big = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > std::abs(v[big])) big = i;
    }
    if (v[big] < 0.0) {
        for (auto& x : v) x = -x;
    }
}

// Solves L y = b for lower-triangular L.
std::vector<double> forward_solve(const Matrix& l, std::vector<double> b) {
    for (std::size_t i = 0; i < l.rows; ++i) {
        for (std::size_t k = 0; k < i; ++k) b[i] -= l(i, k) * b[k];
        b[i] /= l(i, i);
    }
    return b;
}

// Solves L^T y = b for lower-triangular L.
std::vector<double> backward_solve(const Matrix& l, std::vector<double> b) {
    for (std::size_t i = l.rows; i-- > 0;) {
        for (std::size_t k = i + 1; k < l.rows; ++k) b[i] -= l(k, i) * b[k];
        b[i] /= l(i, i);
    }
    return b;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Distances from each item to every counted reference point, ascending.
std::vector<std::vector<double>> neighbor_distances(std::span<const EmbeddingVector> items,
                                                    std::span<const EmbeddingVector> reference,
                                                    std::span<const std::string> item_ids,
                                                    std::span<const std::string> reference_ids) {
    const bool by_id = !item_ids.empty() && !reference_ids.empty();
    if (by_id && (item_ids.size() != items.size() || reference_ids.size() != reference.size())) {
        throw DimensionError("outlier id lists do not match the point lists");
    }
    std::vector<std::vector<double>> out(items.size());
    parallel_for(items.size(), [&](std::size_t i) {
        auto& d = out[i];
        d.reserve(reference.size());
        for (std::size_t r = 0; r < reference.size(); ++r) {
            if (by_id && item_ids[i] == reference_ids[r]) continue;
            d.push_back(euclidean_distance(items[i], reference[r]));
        }
        std::sort(d.begin(), d.end());
    });
    return out;
}

std::size_t within(const std::vector<double>& sorted, double radius) {
    return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), radius) - sorted.begin());
}

}  // namespace

ProjectionModel fit_pca(std::span<const EmbeddingVector> rows, std::size_t dims) {
    const std::size_t w = common_width(rows);
    if (rows.size() < 2) throw std::invalid_argument("PCA needs at least two samples");
    if (dims == 0 || dims > std::min(w, rows.size())) {
        throw std::invalid_argument("PCA dims must be in [1, " + std::to_string(std::min(w, rows.size())) + "], got " +
                                    std::to_string(dims));
    }
    ProjectionModel model;
    model.kind = ProjectionKind::pca;
    model.mean = mean_of(rows, w);
    Matrix cov(w, w);
    const double scale = 1.0 / static_cast<double>(rows.size() - 1);
    for (const auto& r : rows) add_outer(cov, r, model.mean, scale);
    auto eig = symmetric_eigen(cov);
    for (std::size_t k = 0; k < dims; ++k) {
        model.directions.push_back(std::move(eig.vectors[k]));
        model.eigenvalues.push_back(eig.values[k]);
    }
    return model;
}

ProjectionModel fit_lda(std::span<const EmbeddingVector> rows, std::span<const int> labels, std::size_t dims,
                        double ridge) {
    const std::size_t w = common_width(rows);
    if (labels.size() != rows.size()) throw DimensionError("LDA labels do not match the embeddings");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    const std::size_t classes = members.size();
    if (classes < 2) throw std::invalid_argument("LDA needs at least two classes");
    if (dims == 0 || dims > classes - 1) {
        throw std::invalid_argument("LDA yields at most C - 1 = " + std::to_string(classes - 1) +
                                    " directions for C = " + std::to_string(classes) + " classes; requested " +
                                    std::to_string(dims));
    }
    if (dims > w) throw std::invalid_argument("LDA dims exceed the embedding width");
    for (const auto& [cls, idx] : members) {
        if (idx.size() < 2) throw std::invalid_argument("LDA class " + std::to_string(cls) + " has fewer than two samples");
    }

    ProjectionModel model;
    model.kind = ProjectionKind::lda;
    model.mean = mean_of(rows, w);
    Matrix sw(w, w);
    Matrix sb(w, w);
    for (const auto& [cls, idx] : members) {
        EmbeddingVector mu(w, 0.0);
        for (auto i : idx) {
            for (std::size_t j = 0; j < w; ++j) mu[j] += rows[i][j];
        }
        for (auto& v : mu) v /= static_cast<double>(idx.size());
        for (auto i : idx) add_outer(sw, rows[i], mu, 1.0);
        add_outer(sb, mu, model.mean, static_cast<double>(idx.size()));
    }
    for (std::size_t i = 0; i < w; ++i) sw(i, i) += ridge;

    // Whitened problem: M = L^-1 S_b L^-T, with S_w = L L^T.
    const Matrix l = cholesky(sw);
    Matrix x(w, w);  // row c holds L^-1 times column c of S_b
    for (std::size_t c = 0; c < w; ++c) {
        std::vector<double> col(w);
        for (std::size_t r = 0; r < w; ++r) col[r] = sb(r, c);
        const auto y = forward_solve(l, std::move(col));
        for (std::size_t r = 0; r < w; ++r) x(c, r) = y[r];
    }
    Matrix m(w, w);
    for (std::size_t c = 0; c < w; ++c) {
        std::vector<double> col(w);
        for (std::size_t r = 0; r < w; ++r) col[r] = x(r, c);
        const auto y = forward_solve(l, std::move(col));
        for (std::size_t r = 0; r < w; ++r) m(r, c) = y[r];
    }
    for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = i + 1; j < w; ++j) m(i, j) = m(j, i) = 0.5 * (m(i, j) + m(j, i));
    }
    auto eig = symmetric_eigen(m);

    for (std::size_t k = 0; k < dims; ++k) {
        auto v = backward_solve(l, eig.vectors[k]);
        for (const auto& prev : model.directions) {
            const double p = dot(v, prev);
            for (std::size_t j = 0; j < w; ++j) v[j] -= p * prev[j];
        }
        const double norm = std::sqrt(dot(v, v));
        if (!(norm > 0.0)) throw std::domain_error("LDA direction collapsed during orthonormalization");
        for (auto& e : v) e /= norm;
        sign_normalize(v);
        model.directions.push_back(std::move(v));
        model.eigenvalues.push_back(eig.values[k]);
    }
    return model;
}

EmbeddingVector project(const ProjectionModel& model, std::span<const double> row) {
    if (row.size() != model.width()) {
        throw DimensionError("embedding width " + std::to_string(row.size()) + " does not match the projection width " +
                             std::to_string(model.width()));
    }
    EmbeddingVector centered(row.begin(), row.end());
    for (std::size_t j = 0; j < centered.size(); ++j) centered[j] -= model.mean[j];
    EmbeddingVector out;
    out.reserve(model.dims());
    for (const auto& d : model.directions) out.push_back(dot(centered, d));
    return out;
}

std::vector<EmbeddingVector> project(const ProjectionModel& model, std::span<const EmbeddingVector> rows) {
    std::vector<EmbeddingVector> out(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) { out[i] = project(model, rows[i]); });
    return out;
}

void OutlierParams::validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("outlier radius X must be > 0");
    if (min_neighbors == 0) throw std::invalid_argument("outlier count Y must be >= 1");
}

std::vector<bool> detect_outliers(std::span<const EmbeddingVector> items, std::span<const EmbeddingVector> reference,
                                  const OutlierParams& params, std::span<const std::string> item_ids,
                                  std::span<const std::string> reference_ids) {
    params.validate();
    if (reference.empty()) throw std::invalid_argument("outlier reference set is empty");
    const auto dist = neighbor_distances(items, reference, item_ids, reference_ids);
    std::vector<bool> flags(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) flags[i] = within(dist[i], params.radius) < params.min_neighbors;
    return flags;
}

double ConfusionCounts::tp_rate() const {
    return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

double ConfusionCounts::fp_rate() const {
    return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
}

ConfusionCounts confusion(const std::vector<bool>& flags, const std::vector<bool>& truth) {
    if (flags.size() != truth.size()) {
        throw DimensionError("confusion needs aligned flags and truth, got " + std::to_string(flags.size()) + " and " +
                             std::to_string(truth.size()));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (truth[i]) flags[i] ? ++c.tp : ++c.fn;
        else flags[i] ? ++c.fp : ++c.tn;
    }
    return c;
}

std::vector<std::size_t> default_count_grid() {
    std::vector<std::size_t> g;
    for (std::size_t y = 1; y <= 20; ++y) g.push_back(y);
    return g;
}

std::vector<double> default_radius_grid(std::span<const EmbeddingVector> items,
                                        std::span<const EmbeddingVector> reference,
                                        std::span<const std::size_t> count_grid, std::size_t size) {
    if (size == 0) throw std::invalid_argument("radius grid size must be positive");
    const std::size_t depth = count_grid.empty() ? 1 : *std::max_element(count_grid.begin(), count_grid.end());
    const auto dist = neighbor_distances(items, reference, {}, {});
    std::vector<double> pooled;
    for (const auto& d : dist) {
        for (std::size_t k = 0; k < std::min(depth, d.size()); ++k) {
            if (d[k] > 0.0) pooled.push_back(d[k]);
        }
    }
    if (pooled.empty()) return {1.0};
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> grid;
    for (std::size_t j = 0; j < size; ++j) {
        const std::size_t pos = size == 1 ? pooled.size() / 2 : j * (pooled.size() - 1) / (size - 1);
        if (grid.empty() || pooled[pos] > grid.back()) grid.push_back(pooled[pos]);
    }
    return grid;
}

TuneResult tune_params(std::span<const EmbeddingVector> known, std::span<const EmbeddingVector> fresh,
                       std::span<const EmbeddingVector> reference, std::span<const double> radius_grid,
                       std::span<const std::size_t> count_grid, std::span<const std::string> known_ids,
                       std::span<const std::string> fresh_ids, std::span<const std::string> reference_ids) {
    if (radius_grid.empty() || count_grid.empty()) throw std::invalid_argument("tuning grids must be non-empty");
    if (reference.empty()) throw std::invalid_argument("outlier reference set is empty");
    std::vector<double> xs(radius_grid.begin(), radius_grid.end());
    std::vector<std::size_t> ys(count_grid.begin(), count_grid.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    for (double x : xs) OutlierParams{x, 1}.validate();
    if (ys.front() == 0) throw std::invalid_argument("outlier count Y must be >= 1");

    const auto dk = neighbor_distances(known, reference, known_ids, reference_ids);
    const auto dn = neighbor_distances(fresh, reference, fresh_ids, reference_ids);

    std::optional<TuneResult> best;
    for (double x : xs) {
        std::vector<std::size_t> ck(dk.size());
        std::vector<std::size_t> cn(dn.size());
        for (std::size_t i = 0; i < dk.size(); ++i) ck[i] = within(dk[i], x);
        for (std::size_t i = 0; i < dn.size(); ++i) cn[i] = within(dn[i], x);
        for (std::size_t y : ys) {
            ConfusionCounts c;
            for (auto n : ck) n < y ? ++c.fp : ++c.tn;
            for (auto n : cn) n < y ? ++c.tp : ++c.fn;
            if (!best || c.youden() > best->counts.youden()) best = TuneResult{{x, y}, c};
        }
    }
    return *best;
}

std::string projection_csv(const ProjectionTable& table) {
    const std::size_t n = table.size();
    if (table.ids.size() != n || table.labels.size() != n || table.is_new.size() != n) {
        throw DimensionError("projection table columns differ in length");
    }
    const std::size_t dims = n ? table.points.front().size() : 0;
    std::ostringstream out;
    out.precision(17);
    out << "id,label,is_new";
    for (std::size_t d = 1; d <= dims; ++d) out << ",c" << d;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        if (table.points[i].size() != dims) throw DimensionError("projection rows differ in width");
        if (table.ids[i].find_first_of(",\n\"") != std::string::npos) {
            throw DataError("image id '" + table.ids[i] + "' cannot be written to CSV");
        }
        out << table.ids[i] << ',' << table.labels[i] << ',' << (table.is_new[i] ? 1 : 0);
        for (double v : table.points[i]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

void export_projection_csv(const ProjectionTable& table, const std::filesystem::path& path) {
    const std::string text = projection_csv(table);
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot write projection CSV");
    out << text;
}

ProjectionTable parse_projection_csv(std::string_view text) {
    auto split = [](std::string_view line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.emplace_back(line.substr(start, comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return cells;
    };
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw DataError("projection CSV is empty");
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "is_new") {
        throw DataError("projection CSV header must start with id,label,is_new");
    }
    const std::size_t dims = header.size() - 3;
    ProjectionTable table;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw DataError("projection CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        try {
            table.ids.push_back(cells[0]);
            table.labels.push_back(std::stoi(cells[1]));
            table.is_new.push_back(cells[2] == "1");
            EmbeddingVector p;
            for (std::size_t d = 0; d < dims; ++d) p.push_back(std::stod(cells[3 + d]));
            table.points.push_back(std::move(p));
        } catch (const std::logic_error&) {
            throw DataError("projection CSV line " + std::to_string(line_no) + " has a malformed number");
        }
    }
    return table;
}

ProjectionTable read_projection_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open projection CSV");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_projection_csv(buf.str());
}

std::string to_string(ReferenceSet reference) { return reference == ReferenceSet::train ? "train" : "pool"; }

ReferenceSet parse_reference_set(std::string_view text) {
    if (text == "train") return ReferenceSet::train;
    if (text == "pool") return ReferenceSet::pool;
    throw std::invalid_argument("unknown reference set '" + std::string(text) + "' (expected train or pool)");
}

void NoveltyConfig::validate() const {
    if (dims.empty()) throw std::invalid_argument("novelty needs at least one projection dimension");
    for (auto d : dims) {
        if (d == 0) throw std::invalid_argument("projection dimension must be >= 1");
    }
    if (radius_grid_size == 0) throw std::invalid_argument("radius grid size must be positive");
    if (count_grid.empty()) throw std::invalid_argument("count grid must be non-empty");
    for (auto x : radius_grid) OutlierParams{x, 1}.validate();
    for (auto y : count_grid) {
        if (y == 0) throw std::invalid_argument("count grid values must be >= 1");
    }
}

std::string NoveltyReport::to_text() const {
    std::ostringstream out;
    out << "Method: " << (method == ProjectionKind::pca ? "PCA" : "LDA") << '\n';
    out << std::setw(9) << "Dimension" << " | " << std::setw(4) << "TP" << " | " << std::setw(4) << "FP" << " | "
        << std::setw(4) << "TN" << " | " << std::setw(4) << "FN" << " | " << std::setw(7) << "TP rate" << " | "
        << std::setw(7) << "FP rate" << " | " << std::setw(10) << "X" << " | " << std::setw(3) << "Y" << '\n';
    for (const auto& r : rows) {
        out << std::setw(9) << r.dims << " | " << std::setw(4) << r.test.tp << " | " << std::setw(4) << r.test.fp
            << " | " << std::setw(4) << r.test.tn << " | " << std::setw(4) << r.test.fn << " | " << std::fixed
            << std::setprecision(2) << std::setw(6) << 100.0 * r.test.tp_rate() << "% | " << std::setw(6)
            << 100.0 * r.test.fp_rate() << "% | " << std::setprecision(4) << std::setw(10) << r.params.radius << " | "
            << std::setw(3) << r.params.min_neighbors << '\n';
    }
    return out.str();
}

std::string NoveltyReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "method,dims,tp,fp,tn,fn,tp_rate,fp_rate,radius,min_neighbors,tune_tp,tune_fp,tune_tn,tune_fn\n";
    for (const auto& r : rows) {
        out << to_string(method) << ',' << r.dims << ',' << r.test.tp << ',' << r.test.fp << ',' << r.test.tn << ','
            << r.test.fn << ',' << r.test.tp_rate() << ',' << r.test.fp_rate() << ',' << r.params.radius << ','
            << r.params.min_neighbors << ',' << r.tuning.tp << ',' << r.tuning.fp << ',' << r.tuning.tn << ','
            << r.tuning.fn << '\n';
    }
    return out.str();
}

std::vector<std::size_t> novelty_pool(const DatasetManifest& manifest, int holdout_class) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (r.class_id == holdout_class || r.split == Split::test) pool.push_back(i);
    }
    return pool;
}

NoveltyRun run_novelty(const EmbeddingIndex& index, const DatasetManifest& manifest, const NoveltyConfig& config) {
    config.validate();
    index.validate();
    if (index.size() != manifest.records.size()) {
        throw DataError("embedding index must hold one row per manifest record");
    }
    if (config.holdout_class < 0 || static_cast<std::size_t>(config.holdout_class) >= manifest.num_classes()) {
        throw std::invalid_argument("held-out class " + std::to_string(config.holdout_class) + " is not in the dataset");
    }
    const int holdout = config.holdout_class;

    struct Group {
        std::vector<EmbeddingVector> rows;
        std::vector<std::string> ids;
        std::vector<int> labels;
        std::vector<bool> is_new;

        void add(const EmbeddingIndex& index, std::size_t i, bool fresh) {
            rows.push_back(index.rows[i]);
            ids.push_back(index.ids[i]);
            labels.push_back(index.labels[i]);
            is_new.push_back(fresh);
        }
    };
    Group fit, tune_known, tune_new, pool;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        const bool fresh = r.class_id == holdout;
        if (r.split == Split::train && !fresh) fit.add(index, i, false);
        if (r.split == Split::val) (fresh ? tune_new : tune_known).add(index, i, fresh);
    }
    for (auto i : novelty_pool(manifest, holdout)) pool.add(index, i, manifest.records[i].class_id == holdout);
    if (fit.rows.empty()) throw DataError("no training images of the known classes");
    if (tune_known.rows.empty() || tune_new.rows.empty()) {
        throw DataError("validation split needs images of both the known classes and the held-out class");
    }

    NoveltyRun run;
    run.report.method = config.method;
    run.pool_size = pool.rows.size();
    for (auto dims : config.dims) {
        const ProjectionModel model = config.method == ProjectionKind::pca ? fit_pca(fit.rows, dims)
                                                                           : fit_lda(fit.rows, fit.labels, dims);
        const auto ref = project(model, fit.rows);
        const auto pk = project(model, tune_known.rows);
        const auto pn = project(model, tune_new.rows);
        const auto pp = project(model, pool.rows);

        std::vector<EmbeddingVector> tune_ref = ref;
        std::vector<std::string> tune_ref_ids = fit.ids;
        if (config.reference == ReferenceSet::pool) {
            tune_ref = pk;
            tune_ref.insert(tune_ref.end(), pn.begin(), pn.end());
            tune_ref_ids = tune_known.ids;
            tune_ref_ids.insert(tune_ref_ids.end(), tune_new.ids.begin(), tune_new.ids.end());
        }
        std::vector<EmbeddingVector> tune_all = pk;
        tune_all.insert(tune_all.end(), pn.begin(), pn.end());
        const auto grid = config.radius_grid.empty()
                              ? default_radius_grid(tune_all, tune_ref, config.count_grid, config.radius_grid_size)
                              : config.radius_grid;
        const auto tuned = tune_params(pk, pn, tune_ref, grid, config.count_grid, tune_known.ids, tune_new.ids,
                                       tune_ref_ids);

        const bool pooled = config.reference == ReferenceSet::pool;
        const auto flags = detect_outliers(pp, pooled ? pp : ref, tuned.params, pool.ids, pooled ? pool.ids : fit.ids);
        run.report.rows.push_back({dims, tuned.params, tuned.counts, confusion(flags, pool.is_new)});
        run.projections.push_back({pool.ids, pool.labels, pool.is_new, pp});
    }
    return run;
}

}  // namespace resinsort
