#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "resinsort/distance.hpp"
#include "resinsort/layers.hpp"
#include "resinsort/tensor.hpp"

namespace resinsort {

class Rng;

enum class NetworkKind { siamese, triplet };

std::string to_string(NetworkKind kind);
NetworkKind parse_network_kind(std::string_view text);

enum class LayerKind { conv, pool, fc };

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    std::size_t units = 0;   // filters (conv) or output neurons (fc)
    std::size_t kernel = 0;  // square kernel (conv) or pool window
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool relu = false;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

LayerSpec conv_spec(std::size_t filters, std::size_t kernel, bool relu = true, std::size_t stride = 1,
                    std::size_t padding = 0);
LayerSpec pool_spec(std::size_t window, std::size_t stride);
LayerSpec fc_spec(std::size_t units, bool relu = false);

struct TrunkConfig {
    std::string profile;
    std::size_t height = 105;
    std::size_t width = 105;
    std::size_t channels = 3;
    std::vector<LayerSpec> layers;
    std::size_t embedding_width = 0;

    Shape input_shape() const { return {height, width, channels}; }

    /// Output shape after each layer; throws DimensionError if the layers do
    /// not compose or the last output is not `embedding_width` wide.
    std::vector<Shape> layer_shapes() const;
    void validate() const { (void)layer_shapes(); }

    friend bool operator==(const TrunkConfig&, const TrunkConfig&) = default;
};

/// Four conv layers (64/128/128/256 filters, kernels 10/7/4/4) with ReLU,
/// 2x2 max-pool after the first three, then a fully connected embedding
/// layer: 4096 units for the Siamese trunk, 128 for the triplet trunk.
TrunkConfig full_trunk_config(NetworkKind kind);

/// Same layer pattern scaled down to a 32x32 input for tests and desk-scale runs.
TrunkConfig mini_trunk_config(NetworkKind kind);

TrunkConfig trunk_config_for(std::string_view profile, NetworkKind kind);

/// Shared convolutional tower. Parameters are listed in declaration order:
/// for each conv or fc layer, its weights then its bias.
class Trunk {
public:
    /// Intermediate values kept by a training forward pass.
    struct Trace {
        std::vector<Tensor> inputs;        // input of every layer
        std::vector<Tensor> pre_relu;      // conv/fc output before ReLU (empty when no ReLU)
        std::vector<std::vector<std::size_t>> argmax;  // pool layers only
    };

    Trunk() = default;
    explicit Trunk(TrunkConfig config);

    const TrunkConfig& config() const noexcept { return config_; }

    void initialize(Rng& rng);

    EmbeddingVector embed(const Tensor& input) const;
    EmbeddingVector forward(const Tensor& input, Trace& trace) const;

    /// Adds d(loss)/d(parameter) to `grads`, which is aligned with parameters().
    void backward(const Trace& trace, std::span<const double> grad_embedding, std::span<Tensor> grads) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

private:
    struct Slot {
        LayerKind kind;
        std::size_t index;  // into convs_ or fcs_
    };

    void check_input(const Tensor& input) const;

    TrunkConfig config_;
    std::vector<ConvLayer> convs_;
    std::vector<FcLayer> fcs_;
    std::vector<Slot> slots_;
};

double sigmoid(double z);

/// Two weight-shared branches joined by an L1 distance vector and a single-logit head.
class SiameseModel {
public:
    SiameseModel() = default;
    explicit SiameseModel(TrunkConfig config);

    void initialize(Rng& rng);

    Trunk& trunk() noexcept { return trunk_; }
    const Trunk& trunk() const noexcept { return trunk_; }
    FcLayer& head() noexcept { return head_; }
    const FcLayer& head() const noexcept { return head_; }

    /// Head output for two already-computed embeddings.
    double probability(std::span<const double> e1, std::span<const double> e2) const;

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

private:
    Trunk trunk_;
    FcLayer head_;
};

/// Probability that x1 and x2 show the same class: sigmoid(head(|f(x1) - f(x2)|)).
double siamese_forward(const SiameseModel& model, const Tensor& x1, const Tensor& x2);

/// Binary cross-entropy against target t = 1 - y, with y = 0 for a same-class
/// pair. A same-class pair therefore pushes p toward 1. p is clamped to
/// [1e-12, 1 - 1e-12] before taking logs.
double siamese_loss(double p, int y);

/// Loss for one pair; accumulates parameter gradients into `grads`.
double siamese_loss_and_grad(const SiameseModel& model, const Tensor& x1, const Tensor& x2, int y,
                             std::span<Tensor> grads);

inline constexpr double kDefaultMargin = 0.4;

/// Three weight-shared branches producing embeddings for the hinge triplet loss.
class TripletModel {
public:
    TripletModel() = default;
    explicit TripletModel(TrunkConfig config, double margin = kDefaultMargin);

    void initialize(Rng& rng);

    Trunk& trunk() noexcept { return trunk_; }
    const Trunk& trunk() const noexcept { return trunk_; }
    double margin() const noexcept { return margin_; }

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

private:
    Trunk trunk_;
    double margin_ = kDefaultMargin;
};

EmbeddingVector triplet_embed(const TripletModel& model, const Tensor& x);

/// max(0, |fa - fp|^2 - |fa - fn|^2 + margin)
double triplet_loss(std::span<const double> fa, std::span<const double> fp, std::span<const double> fn,
                    double margin = kDefaultMargin);

double triplet_loss_and_grad(const TripletModel& model, const Tensor& anchor, const Tensor& positive,
                             const Tensor& negative, std::span<Tensor> grads);

using Model = std::variant<SiameseModel, TripletModel>;

NetworkKind kind_of(const Model& model);
const Trunk& trunk_of(const Model& model);
std::vector<Tensor*> parameters_of(Model& model);
std::vector<const Tensor*> parameters_of(const Model& model);
/// Zeroed tensors shaped like parameters_of(model).
std::vector<Tensor> zero_gradients(const Model& model);
EmbeddingVector embed(const Model& model, const Tensor& x);

Model make_model(NetworkKind kind, TrunkConfig config, double margin = kDefaultMargin);

}  // namespace resinsort
