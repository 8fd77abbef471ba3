// resinsort command-line tool: synth, train, eval and novelty subcommands.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "resinsort/checkpoint.hpp"
#include "resinsort/dataset.hpp"
#include "resinsort/eval.hpp"
#include "resinsort/novelty.hpp"
#include "resinsort/synth.hpp"
#include "resinsort/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace resinsort;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

constexpr const char* kLockFile = "config.lock.json";

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Options of one subcommand, serializable to and from the lock file.
class Settings {
public:
    Settings(CLI::App* app, std::string command) : app_(app), command_(std::move(command)) {
        app_->add_option("--from-lock", lock_path_, "Re-run from a config.lock.json; explicit flags still win");
    }

    template <class T>
    CLI::Option* add(const std::string& key, T& var, const std::string& help) {
        auto* opt = app_->add_option("--" + flag_name(key), var, help)->capture_default_str();
        entries_.push_back({key, opt, [&var] { return json(var); }, [&var](const json& j) { var = j.get<T>(); }});
        return opt;
    }

    CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
        auto* opt = app_->add_flag("--" + flag_name(key), var, help);
        entries_.push_back({key, opt, [&var] { return json(var); }, [&var](const json& j) { var = j.get<bool>(); }});
        return opt;
    }

    /// Applies lock values to every option not given on the command line.
    void apply_lock() {
        if (lock_path_.empty()) return;
        std::ifstream in(lock_path_);
        if (!in) throw DataError(lock_path_ + ": cannot open lock file");
        json lock;
        try {
            lock = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError(lock_path_ + ": malformed lock file: " + e.what());
        }
        for (const auto& [key, value] : lock.items()) {
            if (key != "command" && key != "options") throw UsageError("unknown lock key '" + key + "'");
        }
        if (lock.value("command", "") != command_) {
            throw UsageError("lock file is for '" + lock.value("command", "?") + "', not '" + command_ + "'");
        }
        const json& options = lock.at("options");
        for (const auto& [key, value] : options.items()) {
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
            if (it == entries_.end()) throw UsageError("unknown option '" + key + "' in lock file");
            if (it->option->count() > 0) continue;
            try {
                it->read(value);
            } catch (const json::exception&) {
                throw UsageError("lock option '" + key + "' has the wrong type");
            }
        }
    }

    void write_lock(const fs::path& dir) const {
        json options = json::object();
        for (const auto& e : entries_) options[e.key] = e.write();
        const json lock{{"command", command_}, {"options", options}};
        std::ofstream out(dir / kLockFile);
        if (!out) throw DataError((dir / kLockFile).string() + ": cannot write lock file");
        out << lock.dump(2) << '\n';
    }

private:
    struct Entry {
        std::string key;
        CLI::Option* option;
        std::function<json()> write;
        std::function<void(const json&)> read;
    };

    static std::string flag_name(std::string key) {
        std::replace(key.begin(), key.end(), '_', '-');
        return key;
    }

    CLI::App* app_;
    std::string command_;
    std::string lock_path_;
    std::vector<Entry> entries_;
};

// "3,5,7", "1..5" or a mix such as "1,3..5".
std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string part;
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw UsageError("bad " + what + " list '" + text + "'");
        return static_cast<std::size_t>(v);
    };
    while (std::getline(in, part, ',')) {
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(number(part));
            continue;
        }
        const auto lo = number(part.substr(0, dots));
        const auto hi = number(part.substr(dots + 2));
        if (lo > hi) throw UsageError("bad " + what + " range '" + part + "'");
        for (auto v = lo; v <= hi; ++v) out.push_back(v);
    }
    if (out.empty()) throw UsageError("empty " + what + " list");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot write");
    out << text;
}

fs::path prepare_out(const std::string& out) {
    if (out.empty()) throw UsageError("--out is required");
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError(out + ": cannot create output directory");
    return dir;
}

std::vector<std::size_t> without_class(std::vector<std::size_t> rows, const DatasetManifest& manifest,
                                       std::optional<int> excluded) {
    if (!excluded) return rows;
    std::erase_if(rows, [&](std::size_t i) { return manifest.records[i].class_id == *excluded; });
    return rows;
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t classes = 5;
    std::size_t per_class = 100;
    std::uint64_t seed = 7;
    std::size_t image_size = 64;
};

void register_synth(Settings& s, SynthArgs& a) {
    s.add("out", a.out, "Dataset directory to create");
    s.add("classes", a.classes, "Number of classes (1-8)");
    s.add("per_class", a.per_class, "Images per class");
    s.add("seed", a.seed, "Generator and split seed");
    s.add("image_size", a.image_size, "Side length of the generated images");
}

int run_synth(const Settings& s, const SynthArgs& a) {
    const fs::path dir = prepare_out(a.out);
    SynthOptions options{a.classes, a.per_class, a.seed, a.image_size};
    const auto manifest = synth_generate(options, dir);
    s.write_lock(dir);
    std::cout << "wrote " << manifest.records.size() << " images in " << manifest.num_classes() << " classes\n"
              << (dir / kManifestFile).string() << '\n';
    return kExitOk;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::string out;
    std::string kind = "triplet";
    std::string profile = "full";
    std::size_t epochs = 0;
    std::size_t samples_per_epoch = 5000;
    std::size_t batch_size = 50;
    double lr = 0.001;
    double momentum = 0.9;
    double margin = kDefaultMargin;
    double positive_fraction = 0.5;
    std::size_t val_samples = 1000;
    std::uint64_t seed = 0;
    std::string stats_scope = "train";
    std::string holdout;
    bool save_init = false;
};

void register_train(Settings& s, TrainArgs& a) {
    s.add("dataset", a.dataset, "Dataset root");
    s.add("out", a.out, "Output directory");
    s.add("kind", a.kind, "siamese or triplet");
    s.add("profile", a.profile, "Trunk profile: full (105px) or mini (32px)");
    s.add("epochs", a.epochs, "Epochs (0: 50 for siamese, 100 for triplet)");
    s.add("samples_per_epoch", a.samples_per_epoch, "Pairs or triplets drawn per epoch");
    s.add("batch_size", a.batch_size, "Samples per optimizer step");
    s.add("lr", a.lr, "Learning rate");
    s.add("momentum", a.momentum, "Momentum");
    s.add("margin", a.margin, "Triplet margin");
    s.add("positive_fraction", a.positive_fraction, "Share of same-class Siamese pairs");
    s.add("val_samples", a.val_samples, "Fixed validation pairs or triplets");
    s.add("seed", a.seed, "Training seed (also splits a dataset without a manifest)");
    s.add("stats_scope", a.stats_scope, "Normalization statistics over train or all images");
    s.add("holdout", a.holdout, "Class left out of training (code, name or directory)");
    s.flag("save_init", a.save_init, "Also write the initial weights to init.rsrt");
}

int run_train(Settings& s, TrainArgs& a) {
    if (a.dataset.empty()) throw UsageError("--dataset is required");
    const fs::path dir = prepare_out(a.out);
    TrainConfig config = TrainConfig::defaults(parse_network_kind(a.kind));
    if (a.epochs == 0) a.epochs = config.epochs;
    config.epochs = a.epochs;
    config.profile = a.profile;
    config.samples_per_epoch = a.samples_per_epoch;
    config.batch_size = a.batch_size;
    config.learning_rate = a.lr;
    config.momentum = a.momentum;
    config.margin = a.margin;
    config.positive_fraction = a.positive_fraction;
    config.val_samples = a.val_samples;
    config.seed = a.seed;
    config.stats_scope = parse_stats_scope(a.stats_scope);
    config.validate();

    const auto manifest = open_dataset(a.dataset, a.seed);
    if (!a.holdout.empty()) config.holdout_class = manifest.find_class(a.holdout);
    s.write_lock(dir);

    const auto trunk = config.trunk();
    const auto images = load_images(manifest, trunk.height, config.stats_scope);
    if (a.save_init) save_checkpoint(initialize_model(config), images.stats, dir / "init.rsrt");
    const auto result = train(config, manifest, images, [](const EpochLoss& e) {
        std::clog << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << '\n';
    });
    save_checkpoint(result.model, images.stats, dir / "checkpoint.rsrt");
    result.history.write_csv(dir / "loss_history.csv");
    std::cout << "checkpoint: " << (dir / "checkpoint.rsrt").string() << '\n'
              << "loss history: " << (dir / "loss_history.csv").string() << '\n';
    return kExitOk;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::string protocol = "both";
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t episodes = 0;
    std::string k = "3,5,7";
    std::uint64_t seed = 0;
    std::string polarity = "least";
    std::string knn_index = "all";
    std::string knn_queries = "all";
    std::string exclude;
};

void register_eval(Settings& s, EvalArgs& a) {
    s.add("checkpoint", a.checkpoint, "Trained checkpoint");
    s.add("dataset", a.dataset, "Dataset root");
    s.add("out", a.out, "Output directory");
    s.add("protocol", a.protocol, "one-shot, knn or both");
    s.add("n_way", a.n_way, "Classes per one-shot episode");
    s.add("k_shot", a.k_shot, "Support images per class");
    s.add("episodes", a.episodes, "Episodes to run (0: one per test image)");
    s.add("k", a.k, "KNN neighbour counts, e.g. 3,5,7");
    s.add("seed", a.seed, "Episode sampling seed");
    s.add("polarity", a.polarity, "Winning end of the one-shot score: least or greatest");
    s.add("knn_index", a.knn_index, "Images searched by KNN: all or train");
    s.add("knn_queries", a.knn_queries, "Images classified by KNN: all or test");
    s.add("exclude", a.exclude, "Class dropped from every evaluation (e.g. a held-out class)");
}

int run_eval(const Settings& s, const EvalArgs& a) {
    if (a.checkpoint.empty() || a.dataset.empty()) throw UsageError("--checkpoint and --dataset are required");
    if (a.protocol != "one-shot" && a.protocol != "knn" && a.protocol != "both") {
        throw UsageError("--protocol must be one-shot, knn or both");
    }
    if (a.knn_index != "all" && a.knn_index != "train") throw UsageError("--knn-index must be all or train");
    if (a.knn_queries != "all" && a.knn_queries != "test") throw UsageError("--knn-queries must be all or test");
    EvalConfig config;
    config.n_way = a.n_way;
    config.k_shot = a.k_shot;
    config.episodes = a.episodes;
    config.knn_ks = parse_list(a.k, "K");
    config.seed = a.seed;
    config.polarity = parse_score_polarity(a.polarity);
    config.validate();
    const fs::path dir = prepare_out(a.out);

    const auto ck = load_checkpoint(a.checkpoint);
    const auto manifest = open_dataset(a.dataset, a.seed);
    std::optional<int> excluded;
    if (!a.exclude.empty()) excluded = manifest.find_class(a.exclude);
    s.write_lock(dir);

    const auto extent = trunk_of(ck.model).config().height;
    const auto images = load_images(manifest, extent, ck.stats);
    const auto index = build_index(ck.model, manifest, images);
    const std::string method = to_string(kind_of(ck.model));

    if (a.protocol != "knn") {
        const auto queries = without_class(manifest.indices_in(Split::test), manifest, excluded);
        const auto support = without_class(manifest.indices_in(Split::train), manifest, excluded);
        const auto result = one_shot_accuracy(index, queries, support, config, dissimilarity_for(ck.model));
        write_text(dir / "one_shot.txt", result.to_text(method, config));
        write_text(dir / "one_shot.csv", result.to_csv(method, config));
        std::cout << result.to_text(method, config);
    }
    if (a.protocol != "one-shot") {
        std::vector<std::size_t> all(manifest.records.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto index_rows =
            without_class(a.knn_index == "train" ? manifest.indices_in(Split::train) : all, manifest, excluded);
        const auto query_rows =
            without_class(a.knn_queries == "test" ? manifest.indices_in(Split::test) : all, manifest, excluded);
        std::vector<std::string> names;
        for (const auto& c : manifest.classes) names.push_back(c.name);
        const auto report = knn_report(index.subset(index_rows), index.subset(query_rows), config.knn_ks, names);
        write_text(dir / "knn.txt", report.to_text());
        write_text(dir / "knn.csv", report.to_csv());
        std::cout << report.to_text();
    }
    return kExitOk;
}

// ---- novelty -----------------------------------------------------------

struct NoveltyArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
    std::string holdout;
    std::string method = "lda";
    std::string dims = "1..3";
    std::string reference = "train";
    std::size_t x_grid_size = 64;
    std::string y_grid = "1..20";
    double radius = 0.0;
    std::size_t min_neighbors = 0;
    std::uint64_t seed = 0;
};

void register_novelty(Settings& s, NoveltyArgs& a) {
    s.add("checkpoint", a.checkpoint, "Checkpoint trained without the held-out class");
    s.add("dataset", a.dataset, "Dataset root");
    s.add("out", a.out, "Output directory");
    s.add("holdout", a.holdout, "New-plastic class (default: last class)");
    s.add("method", a.method, "pca or lda");
    s.add("dims", a.dims, "Projection dimensions, e.g. 1..3");
    s.add("reference", a.reference, "Neighbours counted among train points or the pool itself");
    s.add("x_grid_size", a.x_grid_size, "Radius candidates tried while tuning");
    s.add("y_grid", a.y_grid, "Count thresholds tried while tuning");
    s.add("radius", a.radius, "Fixed radius X (0: tune)");
    s.add("min_neighbors", a.min_neighbors, "Fixed count threshold Y (0: tune)");
    s.add("seed", a.seed, "Split seed for a dataset without a manifest");
}

int run_novelty_cmd(const Settings& s, const NoveltyArgs& a) {
    if (a.checkpoint.empty() || a.dataset.empty()) throw UsageError("--checkpoint and --dataset are required");
    NoveltyConfig config;
    config.method = parse_projection_kind(a.method);
    config.dims = parse_list(a.dims, "dimension");
    config.reference = parse_reference_set(a.reference);
    config.radius_grid_size = a.x_grid_size;
    config.count_grid = parse_list(a.y_grid, "count");
    if (a.radius > 0.0) config.radius_grid = {a.radius};
    if (a.min_neighbors > 0) config.count_grid = {a.min_neighbors};
    const fs::path dir = prepare_out(a.out);

    const auto ck = load_checkpoint(a.checkpoint);
    const auto manifest = open_dataset(a.dataset, a.seed);
    config.holdout_class = a.holdout.empty() ? static_cast<int>(manifest.num_classes()) - 1
                                             : manifest.find_class(a.holdout);
    config.validate();
    s.write_lock(dir);

    const auto extent = trunk_of(ck.model).config().height;
    const auto images = load_images(manifest, extent, ck.stats);
    const auto index = build_index(ck.model, manifest, images);
    const auto run = run_novelty(index, manifest, config);

    const std::string stem = "novelty_" + a.method;
    write_text(dir / (stem + ".txt"), run.report.to_text());
    write_text(dir / (stem + ".csv"), run.report.to_csv());
    for (std::size_t r = 0; r < run.projections.size(); ++r) {
        export_projection_csv(run.projections[r],
                              dir / ("projection_" + a.method + "_d" + std::to_string(run.report.rows[r].dims) + ".csv"));
    }
    std::cout << "pool: " << run.pool_size << " images, new class "
              << manifest.classes[static_cast<std::size_t>(config.holdout_class)].code << '\n'
              << run.report.to_text();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"resinsort: metric-learning resin code classifier and new-plastic detector"};
    app.require_subcommand(1);

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    auto* train_cmd = app.add_subcommand("train", "Train a Siamese or triplet network");
    auto* eval_cmd = app.add_subcommand("eval", "One-shot and KNN accuracy of a checkpoint");
    auto* novelty_cmd = app.add_subcommand("novelty", "PCA/LDA new-plastic detection");

    Settings synth_settings(synth_cmd, "synth");
    Settings train_settings(train_cmd, "train");
    Settings eval_settings(eval_cmd, "eval");
    Settings novelty_settings(novelty_cmd, "novelty");
    SynthArgs synth_args;
    TrainArgs train_args;
    EvalArgs eval_args;
    NoveltyArgs novelty_args;
    register_synth(synth_settings, synth_args);
    register_train(train_settings, train_args);
    register_eval(eval_settings, eval_args);
    register_novelty(novelty_settings, novelty_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) {
            synth_settings.apply_lock();
            return run_synth(synth_settings, synth_args);
        }
        if (train_cmd->parsed()) {
            train_settings.apply_lock();
            return run_train(train_settings, train_args);
        }
        if (eval_cmd->parsed()) {
            eval_settings.apply_lock();
            return run_eval(eval_settings, eval_args);
        }
        novelty_settings.apply_lock();
        return run_novelty_cmd(novelty_settings, novelty_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
