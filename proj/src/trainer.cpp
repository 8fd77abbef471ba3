#include "resinsort/trainer.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "resinsort/optim.hpp"
#include "resinsort/parallel.hpp"
#include "resinsort/random.hpp"
#include "resinsort/sampling.hpp"

namespace resinsort {

TrainConfig TrainConfig::defaults(NetworkKind kind) {
    TrainConfig c;
    c.kind = kind;
    c.epochs = kind == NetworkKind::siamese ? 50 : 100;
    return c;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (samples_per_epoch == 0) throw std::invalid_argument("samples per epoch must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (batch_size > samples_per_epoch) throw std::invalid_argument("batch size exceeds samples per epoch");
    if (samples_per_epoch % batch_size != 0) {
        throw std::invalid_argument("samples per epoch (" + std::to_string(samples_per_epoch) +
                                    ") must be a multiple of the batch size (" + std::to_string(batch_size) + ")");
    }
    if (val_samples == 0) throw std::invalid_argument("validation sample count must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw std::invalid_argument("margin must be >= 0");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
        throw std::invalid_argument("positive fraction must be in [0, 1]");
    }
    (void)trunk();
}

std::string LossHistory::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    return out.str();
}

void LossHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot write loss history");
    out << to_csv();
}

namespace {

// Sub-streams of the training seed, in a fixed order.
struct Streams {
    Rng init;
    Rng validation;
    Rng epochs;

    explicit Streams(std::uint64_t seed) : init(0), validation(0), epochs(0) {
        Rng master(seed);
        init = master.fork();
        validation = master.fork();
        epochs = master.fork();
    }
};

// Pairs or triplets, indexing into a pool of record indices.
struct Workload {
    std::vector<PairSample> pairs;
    std::vector<TripletSample> triplets;

    std::size_t size() const { return pairs.empty() ? triplets.size() : pairs.size(); }
};

std::vector<int> labels_of(const DatasetManifest& manifest, const std::vector<std::size_t>& pool) {
    std::vector<int> labels;
    labels.reserve(pool.size());
    for (auto i : pool) labels.push_back(manifest.records[i].class_id);
    return labels;
}

Workload draw(const TrainConfig& config, std::span<const int> labels, std::size_t n, Rng& rng) {
    Workload w;
    if (config.kind == NetworkKind::siamese) {
        w.pairs = sample_pairs(labels, n, config.positive_fraction, rng);
    } else {
        w.triplets = sample_triplets(labels, n, rng);
    }
    return w;
}

double item_loss_and_grad(const Model& model, const Workload& work, std::size_t k, const std::vector<std::size_t>& pool,
                          const ImageSet& images, std::span<Tensor> grads) {
    const auto& img = images.images;
    if (const auto* siamese = std::get_if<SiameseModel>(&model)) {
        const PairSample& p = work.pairs[k];
        return siamese_loss_and_grad(*siamese, img[pool[p.first]], img[pool[p.second]], p.y, grads);
    }
    const auto& triplet = std::get<TripletModel>(model);
    const TripletSample& t = work.triplets[k];
    return triplet_loss_and_grad(triplet, img[pool[t.anchor]], img[pool[t.positive]], img[pool[t.negative]], grads);
}

double validation_loss(const Model& model, const Workload& work, const std::vector<std::size_t>& pool,
                       const ImageSet& images) {
    // Embed each referenced image once; the losses only need embeddings.
    std::set<std::size_t> used;
    for (const auto& p : work.pairs) used.insert({p.first, p.second});
    for (const auto& t : work.triplets) used.insert({t.anchor, t.positive, t.negative});
    const std::vector<std::size_t> order(used.begin(), used.end());
    std::vector<EmbeddingVector> cache(pool.size());
    parallel_for(order.size(), [&](std::size_t j) { cache[order[j]] = embed(model, images.images[pool[order[j]]]); });

    double total = 0.0;
    if (const auto* siamese = std::get_if<SiameseModel>(&model)) {
        for (const auto& p : work.pairs) total += siamese_loss(siamese->probability(cache[p.first], cache[p.second]), p.y);
    } else {
        const double margin = std::get<TripletModel>(model).margin();
        for (const auto& t : work.triplets) {
            total += triplet_loss(cache[t.anchor], cache[t.positive], cache[t.negative], margin);
        }
    }
    return total / static_cast<double>(work.size());
}

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& delta) {
    for (std::size_t k = 0; k < acc.size(); ++k) {
        for (std::size_t i = 0; i < acc[k].size(); ++i) acc[k][i] += delta[k][i];
    }
}

void zero(std::vector<Tensor>& grads) {
    for (auto& g : grads) g.fill(0.0);
}

}  // namespace

Model initialize_model(const TrainConfig& config) {
    config.validate();
    Streams streams(config.seed);
    Model model = make_model(config.kind, config.trunk(), config.margin);
    std::visit([&](auto& m) { m.initialize(streams.init); }, model);
    return model;
}

std::vector<std::size_t> training_pool(const DatasetManifest& manifest, Split split, std::optional<int> holdout) {
    std::vector<std::size_t> pool;
    for (auto i : manifest.indices_in(split)) {
        if (!holdout || manifest.records[i].class_id != *holdout) pool.push_back(i);
    }
    return pool;
}

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest, const ImageSet& images,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (images.images.size() != manifest.records.size()) {
        throw DataError("image set holds " + std::to_string(images.images.size()) + " tensors for " +
                        std::to_string(manifest.records.size()) + " records");
    }
    const TrunkConfig trunk = config.trunk();
    if (images.extent != trunk.height || images.extent != trunk.width) {
        throw DimensionError("images are " + std::to_string(images.extent) + "px but the " + config.profile +
                             " trunk expects " + std::to_string(trunk.height) + "px");
    }

    const auto train_pool = training_pool(manifest, Split::train, config.holdout_class);
    const auto val_pool = training_pool(manifest, Split::val, config.holdout_class);
    const auto train_labels = labels_of(manifest, train_pool);
    const auto val_labels = labels_of(manifest, val_pool);
    if (std::set<int>(train_labels.begin(), train_labels.end()).size() < 2) {
        throw DataError("training split needs images from at least two classes");
    }
    if (std::set<int>(val_labels.begin(), val_labels.end()).size() < 2) {
        throw DataError("validation split needs images from at least two classes");
    }

    Streams streams(config.seed);
    TrainResult result{make_model(config.kind, trunk, config.margin), {}, 0};
    Model& model = result.model;
    std::visit([&](auto& m) { m.initialize(streams.init); }, model);

    const Workload val_work = draw(config, val_labels, config.val_samples, streams.validation);

    MomentumState optimizer{config.learning_rate, config.momentum, {}};
    const std::size_t batches = config.samples_per_epoch / config.batch_size;
    const std::size_t workers = std::max<std::size_t>(1, std::min(worker_count(), config.batch_size));
    std::vector<Tensor> batch_grads = zero_gradients(model);
    std::vector<std::vector<Tensor>> slots(workers, batch_grads);
    std::vector<double> slot_loss(workers, 0.0);
    const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const Workload work = draw(config, train_labels, config.samples_per_epoch, streams.epochs);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            zero(batch_grads);
            double batch_loss = 0.0;
            const std::size_t begin = b * config.batch_size;
            // Items run in waves of `workers`; each wave's per-item gradients are
            // summed in batch order, so the result is independent of the worker count.
            for (std::size_t wave = 0; wave < config.batch_size; wave += workers) {
                const std::size_t width = std::min(workers, config.batch_size - wave);
                parallel_for(width, [&](std::size_t s) {
                    zero(slots[s]);
                    slot_loss[s] = item_loss_and_grad(model, work, begin + wave + s, train_pool, images, slots[s]);
                });
                for (std::size_t s = 0; s < width; ++s) {
                    batch_loss += slot_loss[s];
                    add_into(batch_grads, slots[s]);
                }
            }
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
            }
            for (auto& g : batch_grads) {
                for (auto& v : g.values()) v *= inv_batch;
            }
            sgd_momentum_step(parameters_of(model), batch_grads, optimizer);
            ++result.optimizer_steps;
            epoch_loss += batch_loss;
        }

        EpochLoss entry{epoch, epoch_loss / static_cast<double>(batches), validation_loss(model, val_work, val_pool, images)};
        if (!std::isfinite(entry.val_loss)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.epochs.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

}  // namespace resinsort
