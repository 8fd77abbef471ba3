#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "resinsort/nets.hpp"

using namespace resinsort;
using rs_test::numeric_gradient;
using rs_test::random_tensor;
using rs_test::relative_error;

namespace {

// 12x12x3 -> conv(3, k3) -> pool 2 -> fc(4) -> fc(6): small enough for full finite differences.
TrunkConfig tiny_trunk() {
    TrunkConfig t;
    t.profile = "tiny";
    t.height = 12;
    t.width = 12;
    t.channels = 3;
    t.layers = {conv_spec(3, 3), pool_spec(2, 2), fc_spec(4, true), fc_spec(6)};
    t.embedding_width = 6;
    return t;
}

// 12x12x3 -> linear conv(3, k3) -> fc(6): smooth, so a 1e-3 step never crosses a kink.
TrunkConfig smooth_trunk() {
    TrunkConfig t = tiny_trunk();
    t.profile = "smooth";
    t.layers = {conv_spec(3, 3, false), fc_spec(6)};
    return t;
}

std::vector<double> flatten(const std::vector<Tensor>& ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

// Finite differences over every parameter of the model.
std::vector<double> numeric_param_gradient(Model& model, const std::function<double()>& loss, double eps = 1e-3) {
    std::vector<double> out;
    for (Tensor* p : parameters_of(model)) {
        auto g = numeric_gradient(loss, p->values(), eps);
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

}  // namespace

TEST_CASE("siamese loss values") {
    CHECK(siamese_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(siamese_loss(0.5, 1) - std::log(2.0)) < 1e-12);
    CHECK(siamese_loss(0.9, 1) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(siamese_loss(1.0 - 1e-15, 0) < 1e-11);
    CHECK(std::isfinite(siamese_loss(0.0, 0)));
}

TEST_CASE("triplet loss values") {
    EmbeddingVector a{0, 0};
    CHECK(triplet_loss(a, a, a) == 0.4);
    EmbeddingVector p1{std::sqrt(0.1), 0}, n1{std::sqrt(0.9), 0};
    CHECK(triplet_loss(a, p1, n1) == 0.0);
    CHECK(triplet_loss(a, n1, p1) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(triplet_loss(a, a, EmbeddingVector{1, 0}, 0.4) == 0.0);
}

TEST_CASE("trunk configurations compose") {
    for (auto kind : {NetworkKind::siamese, NetworkKind::triplet}) {
        const auto width = kind == NetworkKind::siamese ? 4096u : 128u;
        auto full = full_trunk_config(kind);
        CHECK(full.height == 105);
        CHECK(full.layer_shapes().back() == Shape{width});
        CHECK(mini_trunk_config(kind).layer_shapes().back() == Shape{width});
    }
    auto bad = tiny_trunk();
    bad.embedding_width = 7;
    CHECK_THROWS_AS(bad.validate(), DimensionError);
    CHECK_THROWS(trunk_config_for("huge", NetworkKind::triplet));
}

TEST_CASE("siamese forward is symmetric and hits the head bias on identical inputs") {
    Rng rng(1);
    SiameseModel m(tiny_trunk());
    m.initialize(rng);
    auto a = random_tensor({12, 12, 3}, rng), b = random_tensor({12, 12, 3}, rng);
    CHECK(siamese_forward(m, a, b) == siamese_forward(m, b, a));
    CHECK(siamese_forward(m, a, a) == doctest::Approx(sigmoid(m.head().bias[0])).epsilon(1e-15));
}

TEST_CASE("triplet embedding is deterministic and non-degenerate") {
    Rng rng(2);
    TripletModel m1(tiny_trunk()), m2(tiny_trunk());
    m1.initialize(rng);
    m2.initialize(rng);
    auto x = random_tensor({12, 12, 3}, rng);
    CHECK(triplet_embed(m1, x) == triplet_embed(m1, x));
    CHECK(triplet_embed(m1, x).size() == 6);
    CHECK(triplet_embed(m1, x) != triplet_embed(m2, x));
    CHECK_THROWS_AS(triplet_embed(m1, Tensor({10, 10, 3})), DimensionError);
}

double siamese_gradient_error(const TrunkConfig& trunk, uint64_t seed, double eps) {
    Rng rng(seed);
    Model model = make_model(NetworkKind::siamese, trunk);
    std::get<SiameseModel>(model).initialize(rng);
    auto a = random_tensor({12, 12, 3}, rng), b = random_tensor({12, 12, 3}, rng);
    // Stay off the kink of |e1 - e2|, as with ties in max pooling.
    auto gap = [&] {
        auto e1 = embed(model, a), e2 = embed(model, b);
        double g = INFINITY;
        for (size_t i = 0; i < e1.size(); ++i) g = std::min(g, std::abs(e1[i] - e2[i]));
        return g;
    };
    while (gap() < 0.05) b = random_tensor({12, 12, 3}, rng);
    const int y = static_cast<int>(seed % 2);
    auto grads = zero_gradients(model);
    const auto& m = std::get<SiameseModel>(model);
    siamese_loss_and_grad(m, a, b, y, grads);
    auto loss = [&] { return siamese_loss(siamese_forward(m, a, b), y); };
    return relative_error(flatten(grads), numeric_param_gradient(model, loss, eps));
}

double triplet_gradient_error(const TrunkConfig& trunk, uint64_t seed, double eps) {
    Rng rng(seed);
    Model model = make_model(NetworkKind::triplet, trunk, 100.0);  // wide margin keeps the hinge open
    std::get<TripletModel>(model).initialize(rng);
    auto a = random_tensor({12, 12, 3}, rng), p = random_tensor({12, 12, 3}, rng), n = random_tensor({12, 12, 3}, rng);
    const auto& m = std::get<TripletModel>(model);
    auto grads = zero_gradients(model);
    const double l = triplet_loss_and_grad(m, a, p, n, grads);
    auto loss = [&] { return triplet_loss(triplet_embed(m, a), triplet_embed(m, p), triplet_embed(m, n), m.margin()); };
    CHECK(l == doctest::Approx(loss()).epsilon(1e-12));
    CHECK(l > 0.0);
    return relative_error(flatten(grads), numeric_param_gradient(model, loss, eps));
}

TEST_CASE("siamese loss gradients match finite differences") {
    for (uint64_t seed = 0; seed < 20; ++seed) CHECK(siamese_gradient_error(smooth_trunk(), 500 + seed, 1e-3) < 1e-4);
}

TEST_CASE("triplet loss gradients match finite differences") {
    for (uint64_t seed = 0; seed < 20; ++seed) CHECK(triplet_gradient_error(smooth_trunk(), 600 + seed, 1e-3) < 1e-4);
}

TEST_CASE("gradients flow through pooling and relu in the trunk") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        CHECK(siamese_gradient_error(tiny_trunk(), 700 + seed, 1e-6) < 1e-6);
        CHECK(triplet_gradient_error(tiny_trunk(), 800 + seed, 1e-6) < 1e-6);
    }
}

TEST_CASE("satisfied triplets contribute no gradient") {
    Rng rng(7);
    Model model = make_model(NetworkKind::triplet, tiny_trunk(), 0.0);
    std::get<TripletModel>(model).initialize(rng);
    auto a = random_tensor({12, 12, 3}, rng), n = random_tensor({12, 12, 3}, rng);
    auto grads = zero_gradients(model);
    CHECK(triplet_loss_and_grad(std::get<TripletModel>(model), a, a, n, grads) == 0.0);
    for (double v : flatten(grads)) CHECK(v == 0.0);
}
