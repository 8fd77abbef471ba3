#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "resinsort/dataset.hpp"
#include "resinsort/nets.hpp"

namespace resinsort {

/// Training produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    NetworkKind kind = NetworkKind::triplet;
    std::size_t epochs = 100;
    std::size_t samples_per_epoch = 5000;
    std::size_t batch_size = 50;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double margin = kDefaultMargin;
    double positive_fraction = 0.5;  // Siamese pairs only
    std::size_t val_samples = 1000;
    std::uint64_t seed = 0;
    std::string profile = "full";
    StatsScope stats_scope = StatsScope::train;
    /// Class left out of training entirely (novelty experiments).
    std::optional<int> holdout_class;

    /// 50 epochs for the Siamese network, 100 for the triplet network.
    static TrainConfig defaults(NetworkKind kind);

    /// Throws std::invalid_argument on non-positive sizes, a batch larger than
    /// an epoch, an epoch that is not a whole number of batches, or
    /// out-of-range optimizer settings.
    void validate() const;

    TrunkConfig trunk() const { return trunk_config_for(profile, kind); }
};

struct EpochLoss {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;

    friend bool operator==(const EpochLoss&, const EpochLoss&) = default;
};

struct LossHistory {
    std::vector<EpochLoss> epochs;

    /// "epoch,train_loss,val_loss" followed by one row per epoch.
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;

    friend bool operator==(const LossHistory&, const LossHistory&) = default;
};

struct TrainResult {
    Model model;
    LossHistory history;
    std::size_t optimizer_steps = 0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Seeded Glorot initialization, the same one train() starts from.
Model initialize_model(const TrainConfig& config);

/// Record indices of `split`, minus the held-out class if any.
std::vector<std::size_t> training_pool(const DatasetManifest& manifest, Split split, std::optional<int> holdout);

/// Each epoch draws samples_per_epoch fresh pairs or triplets from the
/// training split and applies one momentum step per batch on the mean batch
/// loss. Validation loss is measured after every epoch on one fixed set of
/// val_samples pairs or triplets from the validation split. `images` must be
/// aligned with the manifest records and sized for the trunk input.
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest, const ImageSet& images,
                  const EpochCallback& on_epoch = {});

}  // namespace resinsort
