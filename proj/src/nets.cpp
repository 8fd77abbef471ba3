#include "resinsort/nets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "resinsort/random.hpp"

namespace resinsort {

std::string to_string(NetworkKind kind) { return kind == NetworkKind::siamese ? "siamese" : "triplet"; }

NetworkKind parse_network_kind(std::string_view text) {
    if (text == "siamese") return NetworkKind::siamese;
    if (text == "triplet") return NetworkKind::triplet;
    throw std::invalid_argument("unknown network kind '" + std::string(text) + "' (expected siamese or triplet)");
}

LayerSpec conv_spec(std::size_t filters, std::size_t kernel, bool relu, std::size_t stride, std::size_t padding) {
    return {LayerKind::conv, filters, kernel, stride, padding, relu};
}

LayerSpec pool_spec(std::size_t window, std::size_t stride) { return {LayerKind::pool, 0, window, stride, 0, false}; }

LayerSpec fc_spec(std::size_t units, bool relu) { return {LayerKind::fc, units, 0, 1, 0, relu}; }

std::vector<Shape> TrunkConfig::layer_shapes() const {
    if (height == 0 || width == 0 || channels == 0) throw DimensionError("trunk input extents must be positive");
    std::vector<Shape> shapes;
    Shape cur = input_shape();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& spec = layers[l];
        const std::string where = "trunk layer " + std::to_string(l) + ": ";
        switch (spec.kind) {
            case LayerKind::conv: {
                if (cur.size() != 3) throw DimensionError(where + "conv needs a rank-3 input, got " + shape_to_string(cur));
                if (spec.units == 0 || spec.kernel == 0 || spec.stride == 0) {
                    throw DimensionError(where + "conv filters, kernel and stride must be positive");
                }
                const auto oh = conv_output_extent(cur[0], spec.kernel, spec.stride, spec.padding);
                const auto ow = conv_output_extent(cur[1], spec.kernel, spec.stride, spec.padding);
                if (oh == 0 || ow == 0) {
                    throw DimensionError(where + "kernel " + std::to_string(spec.kernel) + " does not fit " +
                                         shape_to_string(cur));
                }
                cur = {oh, ow, spec.units};
                break;
            }
            case LayerKind::pool: {
                if (cur.size() != 3) throw DimensionError(where + "pool needs a rank-3 input, got " + shape_to_string(cur));
                if (spec.kernel == 0 || spec.stride == 0 || spec.kernel > cur[0] || spec.kernel > cur[1]) {
                    throw DimensionError(where + "pool window " + std::to_string(spec.kernel) + " does not fit " +
                                         shape_to_string(cur));
                }
                cur = {(cur[0] - spec.kernel) / spec.stride + 1, (cur[1] - spec.kernel) / spec.stride + 1, cur[2]};
                break;
            }
            case LayerKind::fc:
                if (spec.units == 0) throw DimensionError(where + "fc units must be positive");
                cur = {spec.units};
                break;
        }
        shapes.push_back(cur);
    }
    if (shapes.empty() || shapes.back().size() != 1 || shapes.back()[0] != embedding_width) {
        throw DimensionError("trunk output " + (shapes.empty() ? std::string("(none)") : shape_to_string(shapes.back())) +
                             " does not match embedding width " + std::to_string(embedding_width));
    }
    return shapes;
}

namespace {

std::vector<LayerSpec> tower(std::size_t f1, std::size_t f2, std::size_t f3, std::size_t f4, std::size_t k1,
                             std::size_t k2, std::size_t k3, std::size_t k4, std::size_t embedding) {
    return {conv_spec(f1, k1), pool_spec(2, 2), conv_spec(f2, k2), pool_spec(2, 2), conv_spec(f3, k3),
            pool_spec(2, 2), conv_spec(f4, k4), fc_spec(embedding)};
}

std::size_t embedding_width_for(NetworkKind kind) { return kind == NetworkKind::siamese ? 4096 : 128; }

}  // namespace

TrunkConfig full_trunk_config(NetworkKind kind) {
    const std::size_t width = embedding_width_for(kind);
    return TrunkConfig{"full", 105, 105, 3, tower(64, 128, 128, 256, 10, 7, 4, 4, width), width};
}

TrunkConfig mini_trunk_config(NetworkKind kind) {
    const std::size_t width = embedding_width_for(kind);
    return TrunkConfig{"mini", 32, 32, 3, tower(8, 16, 16, 32, 5, 3, 3, 2, width), width};
}

TrunkConfig trunk_config_for(std::string_view profile, NetworkKind kind) {
    if (profile == "full") return full_trunk_config(kind);
    if (profile == "mini") return mini_trunk_config(kind);
    throw std::invalid_argument("unknown trunk profile '" + std::string(profile) + "' (expected full or mini)");
}

Trunk::Trunk(TrunkConfig config) : config_(std::move(config)) {
    const auto shapes = config_.layer_shapes();
    Shape prev = config_.input_shape();
    for (std::size_t l = 0; l < config_.layers.size(); ++l) {
        const LayerSpec& spec = config_.layers[l];
        switch (spec.kind) {
            case LayerKind::conv:
                slots_.push_back({LayerKind::conv, convs_.size()});
                convs_.push_back(make_conv_layer(spec.units, spec.kernel, spec.kernel, prev[2], spec.stride, spec.padding));
                break;
            case LayerKind::pool:
                slots_.push_back({LayerKind::pool, 0});
                break;
            case LayerKind::fc:
                slots_.push_back({LayerKind::fc, fcs_.size()});
                fcs_.push_back(make_fc_layer(spec.units, shape_volume(prev)));
                break;
        }
        prev = shapes[l];
    }
}

void Trunk::initialize(Rng& rng) {
    for (const Slot& s : slots_) {
        if (s.kind == LayerKind::conv) glorot_init(convs_[s.index], rng);
        if (s.kind == LayerKind::fc) glorot_init(fcs_[s.index], rng);
    }
}

void Trunk::check_input(const Tensor& input) const {
    if (input.shape() != config_.input_shape()) {
        throw DimensionError("trunk expects input " + shape_to_string(config_.input_shape()) + ", got " +
                             shape_to_string(input.shape()));
    }
}

EmbeddingVector Trunk::embed(const Tensor& input) const {
    Trace trace;
    return forward(input, trace);
}

EmbeddingVector Trunk::forward(const Tensor& input, Trace& trace) const {
    check_input(input);
    const std::size_t n = slots_.size();
    trace.inputs.assign(n, Tensor());
    trace.pre_relu.assign(n, Tensor());
    trace.argmax.assign(n, {});

    Tensor cur = input;
    for (std::size_t l = 0; l < n; ++l) {
        const LayerSpec& spec = config_.layers[l];
        Tensor out;
        switch (slots_[l].kind) {
            case LayerKind::conv:
                out = conv2d_forward(cur, convs_[slots_[l].index]);
                break;
            case LayerKind::pool: {
                PoolResult r = maxpool_forward(cur, spec.kernel, spec.stride);
                trace.argmax[l] = std::move(r.argmax);
                out = std::move(r.output);
                break;
            }
            case LayerKind::fc:
                out = fc_forward(cur, fcs_[slots_[l].index]);
                break;
        }
        trace.inputs[l] = std::move(cur);
        if (spec.relu) {
            cur = relu(out);
            trace.pre_relu[l] = std::move(out);
        } else {
            cur = std::move(out);
        }
    }
    return EmbeddingVector(cur.values().begin(), cur.values().end());
}

namespace {
void add_into(Tensor& acc, const Tensor& delta) {
    require_same_shape(acc, delta, "gradient accumulation");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += delta[i];
}
}  // namespace

void Trunk::backward(const Trace& trace, std::span<const double> grad_embedding, std::span<Tensor> grads) const {
    const std::size_t n = slots_.size();
    if (trace.inputs.size() != n) throw std::invalid_argument("trunk backward: trace does not match this trunk");
    if (grad_embedding.size() != config_.embedding_width) {
        throw DimensionError("trunk backward: gradient length " + std::to_string(grad_embedding.size()) +
                             " != embedding width " + std::to_string(config_.embedding_width));
    }
    if (grads.size() < 2 * (convs_.size() + fcs_.size())) {
        throw DimensionError("trunk backward: gradient list too short for trunk parameters");
    }

    // Parameter pair offset of each layer, in declaration order.
    std::vector<std::size_t> offset(n, 0);
    std::size_t next = 0;
    for (std::size_t l = 0; l < n; ++l) {
        if (slots_[l].kind != LayerKind::pool) {
            offset[l] = next;
            next += 2;
        }
    }

    Tensor g({grad_embedding.size()}, std::vector<double>(grad_embedding.begin(), grad_embedding.end()));
    for (std::size_t l = n; l-- > 0;) {
        const LayerSpec& spec = config_.layers[l];
        if (spec.relu) g = relu_backward(trace.pre_relu[l], g);
        switch (slots_[l].kind) {
            case LayerKind::conv: {
                ConvGrads cg = conv2d_backward(trace.inputs[l], convs_[slots_[l].index], g, l != 0);
                add_into(grads[offset[l]], cg.filters);
                add_into(grads[offset[l] + 1], cg.bias);
                g = std::move(cg.input);
                break;
            }
            case LayerKind::pool:
                g = maxpool_backward(trace.inputs[l].shape(), trace.argmax[l], g);
                break;
            case LayerKind::fc: {
                FcGrads fg = fc_backward(trace.inputs[l], fcs_[slots_[l].index], g);
                add_into(grads[offset[l]], fg.weights);
                add_into(grads[offset[l] + 1], fg.bias);
                g = std::move(fg.input);
                break;
            }
        }
    }
}

std::vector<Tensor*> Trunk::parameters() {
    std::vector<Tensor*> out;
    for (const Slot& s : slots_) {
        if (s.kind == LayerKind::conv) {
            out.push_back(&convs_[s.index].filters);
            out.push_back(&convs_[s.index].bias);
        } else if (s.kind == LayerKind::fc) {
            out.push_back(&fcs_[s.index].weights);
            out.push_back(&fcs_[s.index].bias);
        }
    }
    return out;
}

std::vector<const Tensor*> Trunk::parameters() const {
    auto mutable_params = const_cast<Trunk*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

SiameseModel::SiameseModel(TrunkConfig config)
    : trunk_(std::move(config)), head_(make_fc_layer(1, trunk_.config().embedding_width)) {}

void SiameseModel::initialize(Rng& rng) {
    trunk_.initialize(rng);
    glorot_init(head_, rng);
}

double SiameseModel::probability(std::span<const double> e1, std::span<const double> e2) const {
    const EmbeddingVector d = l1_distance(e1, e2);
    const Tensor z = fc_forward(Tensor({d.size()}, d), head_);
    return sigmoid(z[0]);
}

std::vector<Tensor*> SiameseModel::parameters() {
    auto out = trunk_.parameters();
    out.push_back(&head_.weights);
    out.push_back(&head_.bias);
    return out;
}

std::vector<const Tensor*> SiameseModel::parameters() const {
    auto mutable_params = const_cast<SiameseModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

double siamese_forward(const SiameseModel& model, const Tensor& x1, const Tensor& x2) {
    const auto e1 = model.trunk().embed(x1);
    const auto e2 = model.trunk().embed(x2);
    return model.probability(e1, e2);
}

namespace {
constexpr double kProbClamp = 1e-12;

void require_pair_label(int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("pair label must be 0 (same class) or 1 (different class)");
}
}  // namespace

double siamese_loss(double p, int y) {
    require_pair_label(y);
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    const double target = 1.0 - static_cast<double>(y);
    return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

double siamese_loss_and_grad(const SiameseModel& model, const Tensor& x1, const Tensor& x2, int y,
                             std::span<Tensor> grads) {
    require_pair_label(y);
    const Trunk& trunk = model.trunk();
    const std::size_t trunk_params = grads.size() - 2;
    Trunk::Trace t1, t2;
    const EmbeddingVector e1 = trunk.forward(x1, t1);
    const EmbeddingVector e2 = trunk.forward(x2, t2);
    const EmbeddingVector d = l1_distance(e1, e2);
    const Tensor dt({d.size()}, d);
    const double z = fc_forward(dt, model.head())[0];
    const double p = sigmoid(z);
    const double loss = siamese_loss(p, y);

    // d(BCE)/dz for a sigmoid output is p - target.
    const double dz = p - (1.0 - static_cast<double>(y));
    const FcGrads hg = fc_backward(dt, model.head(), Tensor({1}, {dz}));
    add_into(grads[trunk_params], hg.weights);
    add_into(grads[trunk_params + 1], hg.bias);

    EmbeddingVector g1(d.size()), g2(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double diff = e1[i] - e2[i];
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        g1[i] = hg.input[i] * s;
        g2[i] = -g1[i];
    }
    trunk.backward(t1, g1, grads.first(trunk_params));
    trunk.backward(t2, g2, grads.first(trunk_params));
    return loss;
}

TripletModel::TripletModel(TrunkConfig config, double margin) : trunk_(std::move(config)), margin_(margin) {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw std::invalid_argument("triplet margin must be finite and >= 0");
}

void TripletModel::initialize(Rng& rng) { trunk_.initialize(rng); }

std::vector<Tensor*> TripletModel::parameters() { return trunk_.parameters(); }
std::vector<const Tensor*> TripletModel::parameters() const { return trunk_.parameters(); }

EmbeddingVector triplet_embed(const TripletModel& model, const Tensor& x) { return model.trunk().embed(x); }

double triplet_loss(std::span<const double> fa, std::span<const double> fp, std::span<const double> fn,
                    double margin) {
    const double ap = squared_euclidean_distance(fa, fp);
    const double an = squared_euclidean_distance(fa, fn);
    return std::max(0.0, ap - an + margin);
}

double triplet_loss_and_grad(const TripletModel& model, const Tensor& anchor, const Tensor& positive,
                             const Tensor& negative, std::span<Tensor> grads) {
    const Trunk& trunk = model.trunk();
    Trunk::Trace ta, tp, tn;
    const EmbeddingVector fa = trunk.forward(anchor, ta);
    const EmbeddingVector fp = trunk.forward(positive, tp);
    const EmbeddingVector fn = trunk.forward(negative, tn);
    const double loss = triplet_loss(fa, fp, fn, model.margin());
    if (loss <= 0.0) return loss;

    const std::size_t n = fa.size();
    EmbeddingVector ga(n), gp(n), gn(n);
    for (std::size_t i = 0; i < n; ++i) {
        ga[i] = 2.0 * (fn[i] - fp[i]);
        gp[i] = -2.0 * (fa[i] - fp[i]);
        gn[i] = 2.0 * (fa[i] - fn[i]);
    }
    trunk.backward(ta, ga, grads);
    trunk.backward(tp, gp, grads);
    trunk.backward(tn, gn, grads);
    return loss;
}

NetworkKind kind_of(const Model& model) {
    return std::holds_alternative<SiameseModel>(model) ? NetworkKind::siamese : NetworkKind::triplet;
}

const Trunk& trunk_of(const Model& model) {
    return std::visit([](const auto& m) -> const Trunk& { return m.trunk(); }, model);
}

std::vector<Tensor*> parameters_of(Model& model) {
    return std::visit([](auto& m) { return m.parameters(); }, model);
}

std::vector<const Tensor*> parameters_of(const Model& model) {
    return std::visit([](const auto& m) { return m.parameters(); }, model);
}

std::vector<Tensor> zero_gradients(const Model& model) {
    std::vector<Tensor> out;
    for (const Tensor* p : parameters_of(model)) out.emplace_back(p->shape());
    return out;
}

EmbeddingVector embed(const Model& model, const Tensor& x) { return trunk_of(model).embed(x); }

Model make_model(NetworkKind kind, TrunkConfig config, double margin) {
    if (kind == NetworkKind::siamese) return SiameseModel(std::move(config));
    return TripletModel(std::move(config), margin);
}

}  // namespace resinsort
