#include "resinsort/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "resinsort/parallel.hpp"
#include "resinsort/random.hpp"

namespace resinsort {

void EmbeddingIndex::validate() const {
    if (labels.size() != rows.size() || ids.size() != rows.size()) {
        throw DimensionError("embedding index has " + std::to_string(rows.size()) + " rows, " +
                             std::to_string(labels.size()) + " labels and " + std::to_string(ids.size()) + " ids");
    }
    for (const auto& r : rows) {
        if (r.size() != width()) throw DimensionError("embedding index rows differ in width");
    }
}

EmbeddingIndex EmbeddingIndex::subset(std::span<const std::size_t> positions) const {
    EmbeddingIndex out;
    for (auto p : positions) {
        out.rows.push_back(rows.at(p));
        out.labels.push_back(labels.at(p));
        out.ids.push_back(ids.at(p));
    }
    return out;
}

EmbeddingIndex build_index(const Model& model, const DatasetManifest& manifest, const ImageSet& images,
                           std::optional<std::vector<std::size_t>> records) {
    if (images.images.size() != manifest.records.size()) {
        throw DataError("image set is not aligned with the manifest records");
    }
    std::vector<std::size_t> order;
    if (records) {
        order = std::move(*records);
    } else {
        order.resize(manifest.records.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    EmbeddingIndex index;
    index.rows.resize(order.size());
    parallel_for(order.size(), [&](std::size_t j) { index.rows[j] = embed(model, images.images.at(order[j])); });
    for (auto i : order) {
        index.labels.push_back(manifest.records[i].class_id);
        index.ids.push_back(manifest.records[i].id);
    }
    return index;
}

Dissimilarity euclidean_dissimilarity() {
    return [](std::span<const double> a, std::span<const double> b) { return euclidean_distance(a, b); };
}

Dissimilarity siamese_dissimilarity(const SiameseModel& model) {
    return [&model](std::span<const double> a, std::span<const double> b) { return 1.0 - model.probability(a, b); };
}

Dissimilarity dissimilarity_for(const Model& model) {
    if (const auto* s = std::get_if<SiameseModel>(&model)) return siamese_dissimilarity(*s);
    return euclidean_dissimilarity();
}

std::string to_string(ScorePolarity polarity) { return polarity == ScorePolarity::least ? "least" : "greatest"; }

ScorePolarity parse_score_polarity(std::string_view text) {
    if (text == "least") return ScorePolarity::least;
    if (text == "greatest") return ScorePolarity::greatest;
    throw std::invalid_argument("unknown score polarity '" + std::string(text) + "' (expected least or greatest)");
}

int one_shot_episode(const EmbeddingIndex& index, std::span<const double> query, std::span<const SupportItem> support,
                     std::span<const int> classes, const Dissimilarity& score, ScorePolarity polarity) {
    if (classes.empty()) throw std::invalid_argument("episode has no candidate classes");
    std::map<int, std::pair<double, std::size_t>> totals;
    for (int c : classes) totals[c] = {0.0, 0};
    for (const auto& s : support) {
        auto it = totals.find(s.class_id);
        if (it == totals.end()) continue;
        it->second.first += score(query, index.rows.at(s.row));
        ++it->second.second;
    }
    int best = 0;
    double best_score = 0.0;
    bool first = true;
    for (const auto& [cls, acc] : totals) {
        if (acc.second == 0) {
            throw std::invalid_argument("support set has no image for class " + std::to_string(cls));
        }
        const double mean = acc.first / static_cast<double>(acc.second);
        const bool better = polarity == ScorePolarity::least ? mean < best_score : mean > best_score;
        if (first || better) {
            best = cls;
            best_score = mean;
            first = false;
        }
    }
    return best;
}

void EvalConfig::validate() const {
    if (n_way == 0) throw std::invalid_argument("n_way must be positive");
    if (k_shot == 0) throw std::invalid_argument("k_shot must be positive");
    for (auto k : knn_ks) {
        if (k == 0 || k % 2 == 0) throw std::invalid_argument("KNN K must be odd and >= 1, got " + std::to_string(k));
    }
}

std::string OneShotResult::to_text(std::string_view method, const EvalConfig& config) const {
    std::ostringstream out;
    out << config.k_shot << "-shot " << config.n_way << "-way accuracy (" << method << "): " << std::fixed
        << std::setprecision(2) << 100.0 * accuracy() << "% (" << correct << "/" << total << ")\n";
    return out.str();
}

std::string OneShotResult::to_csv(std::string_view method, const EvalConfig& config) const {
    std::ostringstream out;
    out.precision(17);
    out << "method,n_way,k_shot,correct,total,accuracy\n"
        << method << ',' << config.n_way << ',' << config.k_shot << ',' << correct << ',' << total << ',' << accuracy()
        << '\n';
    return out.str();
}

OneShotResult one_shot_accuracy(const EmbeddingIndex& index, std::span<const std::size_t> query_rows,
                                std::span<const std::size_t> support_rows, const EvalConfig& config,
                                const Dissimilarity& score) {
    config.validate();
    index.validate();
    std::map<int, std::vector<std::size_t>> pool;
    for (auto r : support_rows) pool[index.labels.at(r)].push_back(r);
    if (config.n_way > pool.size()) {
        throw std::invalid_argument("n_way " + std::to_string(config.n_way) + " exceeds the " +
                                    std::to_string(pool.size()) + " classes in the support pool");
    }

    const std::size_t episodes = config.episodes ? std::min(config.episodes, query_rows.size()) : query_rows.size();
    Rng rng(config.seed);
    OneShotResult result;
    for (std::size_t e = 0; e < episodes; ++e) {
        const std::size_t q = query_rows[e];
        const int truth = index.labels.at(q);
        if (!pool.contains(truth)) {
            throw std::invalid_argument("support pool has no image of query class " + std::to_string(truth));
        }
        std::vector<int> others;
        for (const auto& [cls, rows] : pool) {
            if (cls != truth) others.push_back(cls);
        }
        std::vector<int> classes{truth};
        for (std::size_t k = 0; k + 1 < config.n_way; ++k) {
            const std::size_t pick = k + rng.index(others.size() - k);
            std::swap(others[k], others[pick]);
            classes.push_back(others[k]);
        }
        std::sort(classes.begin(), classes.end());

        std::vector<SupportItem> support;
        for (int cls : classes) {
            std::vector<std::size_t> eligible;
            for (auto r : pool[cls]) {
                if (index.ids[r] != index.ids[q]) eligible.push_back(r);
            }
            if (eligible.size() < config.k_shot) {
                throw std::invalid_argument("class " + std::to_string(cls) + " has fewer than k_shot support images");
            }
            for (std::size_t k = 0; k < config.k_shot; ++k) {
                const std::size_t pick = k + rng.index(eligible.size() - k);
                std::swap(eligible[k], eligible[pick]);
                support.push_back({cls, eligible[k]});
            }
        }
        if (one_shot_episode(index, index.rows[q], support, classes, score, config.polarity) == truth) {
            ++result.correct;
        }
        ++result.total;
    }
    return result;
}

int knn_classify(const EmbeddingIndex& index, std::span<const double> query, std::string_view query_id, std::size_t k) {
    struct Neighbor {
        double distance;
        const std::string* id;
        int label;
    };
    std::vector<Neighbor> candidates;
    candidates.reserve(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index.ids[r] == query_id) continue;
        candidates.push_back({squared_euclidean_distance(query, index.rows[r]), &index.ids[r], index.labels[r]});
    }
    if (k == 0 || k > candidates.size()) {
        throw std::invalid_argument("K = " + std::to_string(k) + " must be in [1, " + std::to_string(candidates.size()) +
                                    "] for this index");
    }
    auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : *a.id < *b.id;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), closer);

    std::map<int, std::size_t> votes;
    std::size_t top = 0;
    for (std::size_t i = 0; i < k; ++i) top = std::max(top, ++votes[candidates[i].label]);
    for (std::size_t i = 0; i < k; ++i) {
        if (votes[candidates[i].label] == top) return candidates[i].label;
    }
    return candidates.front().label;
}

int knn_classify(const EmbeddingIndex& index, std::size_t query_row, std::size_t k) {
    return knn_classify(index, index.rows.at(query_row), index.ids.at(query_row), k);
}

double KnnRow::class_accuracy(std::size_t c) const {
    return total.at(c) ? static_cast<double>(correct[c]) / static_cast<double>(total[c]) : 0.0;
}

std::string KnnReport::to_text() const {
    std::ostringstream out;
    int w = 9;
    for (const auto& name : class_names) w = std::max(w, static_cast<int>(name.size()));
    out << std::setw(3) << "K";
    for (const auto& name : class_names) out << " | " << std::setw(w) << name;
    out << " | " << std::setw(w) << "Average" << '\n';
    for (const auto& row : rows) {
        out << std::setw(3) << row.k << std::fixed << std::setprecision(2);
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            out << " | " << std::setw(w);
            if (row.total[c]) out << 100.0 * row.class_accuracy(c);
            else out << "-";
        }
        out << " | " << std::setw(w) << 100.0 * row.average << '\n';
    }
    return out.str();
}

std::string KnnReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "K";
    for (const auto& name : class_names) out << ',' << name;
    out << ",average,overall\n";
    for (const auto& row : rows) {
        out << row.k;
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            out << ',';
            if (row.total[c]) out << 100.0 * row.class_accuracy(c);
        }
        out << ',' << 100.0 * row.average << ',' << 100.0 * row.overall << '\n';
    }
    return out.str();
}

KnnReport knn_report(const EmbeddingIndex& index, const EmbeddingIndex& queries, std::span<const std::size_t> ks,
                     std::vector<std::string> class_names) {
    index.validate();
    queries.validate();
    KnnReport report{std::move(class_names), {}};
    const std::size_t num_classes = report.class_names.size();
    for (auto k : ks) {
        std::vector<int> predicted(queries.size());
        parallel_for(queries.size(), [&](std::size_t q) {
            predicted[q] = knn_classify(index, queries.rows[q], queries.ids[q], k);
        });
        KnnRow row{k, std::vector<std::size_t>(num_classes, 0), std::vector<std::size_t>(num_classes, 0), 0.0, 0.0};
        std::size_t hits = 0;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            const auto c = static_cast<std::size_t>(queries.labels[q]);
            if (c >= num_classes) throw std::invalid_argument("query label outside the class table");
            ++row.total[c];
            if (predicted[q] == queries.labels[q]) {
                ++row.correct[c];
                ++hits;
            }
        }
        std::size_t present = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (row.total[c]) {
                row.average += row.class_accuracy(c);
                ++present;
            }
        }
        row.average = present ? row.average / static_cast<double>(present) : 0.0;
        row.overall = queries.size() ? static_cast<double>(hits) / static_cast<double>(queries.size()) : 0.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace resinsort
