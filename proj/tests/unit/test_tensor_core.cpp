#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "resinsort/distance.hpp"
#include "resinsort/layers.hpp"
#include "resinsort/optim.hpp"

using namespace resinsort;
using rs_test::numeric_gradient;
using rs_test::random_tensor;
using rs_test::relative_error;
using rs_test::weighted_sum;

namespace {

constexpr int kSeeds = 20;
constexpr double kTol = 1e-4;

// Direct six-loop convolution, written independently of the library kernel.
Tensor naive_conv(const Tensor& x, const ConvLayer& l) {
    const long H = static_cast<long>(x.extent(0)), W = static_cast<long>(x.extent(1));
    const long C = static_cast<long>(x.extent(2));
    const long K = static_cast<long>(l.count()), kh = static_cast<long>(l.kernel_h()),
               kw = static_cast<long>(l.kernel_w());
    const long s = static_cast<long>(l.stride), p = static_cast<long>(l.padding);
    const long oh = (H + 2 * p - kh) / s + 1, ow = (W + 2 * p - kw) / s + 1;
    Tensor out({static_cast<size_t>(oh), static_cast<size_t>(ow), static_cast<size_t>(K)});
    for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j)
            for (long f = 0; f < K; ++f) {
                double acc = l.bias[static_cast<size_t>(f)];
                for (long u = 0; u < kh; ++u)
                    for (long v = 0; v < kw; ++v)
                        for (long c = 0; c < C; ++c) {
                            const long y = i * s + u - p, z = j * s + v - p;
                            if (y < 0 || z < 0 || y >= H || z >= W) continue;
                            acc += x[static_cast<size_t>((y * W + z) * C + c)] *
                                   l.filters[static_cast<size_t>(((f * kh + u) * kw + v) * C + c)];
                        }
                out[static_cast<size_t>((i * ow + j) * K + f)] = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv maps 7x7x3 to 5x5x2 with two 3x3x3 filters") {
    Tensor x({7, 7, 3}, 1.0);
    auto layer = make_conv_layer(2, 3, 3, 3);
    CHECK(conv2d_forward(x, layer).shape() == Shape{5, 5, 2});
    CHECK(conv2d_output_shape({7, 7, 3}, layer) == Shape{5, 5, 2});
    CHECK(conv2d_output_shape({7, 7, 3}, make_conv_layer(2, 3, 3, 3, 2, 1)) == Shape{4, 4, 2});
}

TEST_CASE("maxpool reduces 4x4 to 2x2") {
    Tensor x({4, 4, 1}, std::vector<double>{1, 1, 2, 4, 5, 6, 7, 8, 3, 2, 1, 0, 1, 2, 3, 4});
    auto r = maxpool_forward(x, 2, 2);
    CHECK(r.output.shape() == Shape{2, 2, 1});
    CHECK(r.output.values()[0] == 6);
    CHECK(r.output.values()[1] == 8);
    CHECK(r.output.values()[2] == 3);
    CHECK(r.output.values()[3] == 4);
}

TEST_CASE("conv on zero input yields the bias") {
    Rng rng(3);
    auto layer = make_conv_layer(3, 2, 2, 2);
    glorot_init(layer, rng);
    layer.bias = Tensor({3}, std::vector<double>{0.5, -1.0, 2.0});
    auto out = conv2d_forward(Tensor({4, 4, 2}, 0.0), layer);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == layer.bias[i % 3]);
}

TEST_CASE("conv matches a direct loop oracle") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(static_cast<uint64_t>(seed));
        const size_t stride = 1 + rng.index(2), pad = rng.index(2);
        auto layer = make_conv_layer(1 + rng.index(3), 3, 3, 2, stride, pad);
        layer.filters = random_tensor(layer.filters.shape(), rng);
        layer.bias = random_tensor(layer.bias.shape(), rng);
        auto x = random_tensor({6, 6, 2}, rng);
        auto got = conv2d_forward(x, layer);
        auto want = naive_conv(x, layer);
        REQUIRE(got.shape() == want.shape());
        for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv output shape law over random geometries") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        const size_t h = 1 + rng.index(12), w = 1 + rng.index(12), k = 1 + rng.index(5);
        const size_t s = 1 + rng.index(3), p = rng.index(3);
        if (h + 2 * p < k || w + 2 * p < k) continue;
        auto layer = make_conv_layer(2, k, k, 1, s, p);
        auto out = conv2d_forward(Tensor({h, w, 1}, 0.5), layer);
        CHECK(out.extent(0) == (h + 2 * p - k) / s + 1);
        CHECK(out.extent(1) == (w + 2 * p - k) / s + 1);
    }
}

TEST_CASE("conv rejects a depth mismatch") {
    auto layer = make_conv_layer(1, 3, 3, 2);
    CHECK_THROWS_AS(conv2d_forward(Tensor({5, 5, 3}), layer), DimensionError);
    CHECK_THROWS_AS(conv2d_forward(Tensor({2, 2, 2}), layer), DimensionError);
}

TEST_CASE("conv backward: zero upstream and the 1x1 bias rule") {
    Rng rng(5);
    auto layer = make_conv_layer(2, 1, 1, 3);
    glorot_init(layer, rng);
    auto x = random_tensor({4, 4, 3}, rng);
    auto zero = conv2d_backward(x, layer, Tensor({4, 4, 2}, 0.0));
    CHECK(std::all_of(zero.input.values().begin(), zero.input.values().end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(zero.filters.values().begin(), zero.filters.values().end(), [](double v) { return v == 0.0; }));
    auto g = random_tensor({4, 4, 2}, rng);
    auto grads = conv2d_backward(x, layer, g);
    for (size_t f = 0; f < 2; ++f) {
        double s = 0.0;
        for (size_t i = f; i < g.size(); i += 2) s += g[i];
        CHECK(grads.bias[f] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("conv gradients match finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(100 + static_cast<uint64_t>(seed));
        auto layer = make_conv_layer(2, 3, 3, 2, 1 + rng.index(2), rng.index(2));
        layer.filters = random_tensor(layer.filters.shape(), rng);
        layer.bias = random_tensor(layer.bias.shape(), rng);
        auto x = random_tensor({6, 5, 2}, rng);
        auto w = random_tensor(conv2d_output_shape(x.shape(), layer), rng);
        auto f = [&] { return weighted_sum(conv2d_forward(x, layer), w); };
        auto g = conv2d_backward(x, layer, w);
        CHECK(relative_error(g.input.values(), numeric_gradient(f, x.values())) < kTol);
        CHECK(relative_error(g.filters.values(), numeric_gradient(f, layer.filters.values())) < kTol);
        CHECK(relative_error(g.bias.values(), numeric_gradient(f, layer.bias.values())) < kTol);
    }
}

TEST_CASE("relu values, idempotence and gradient") {
    Tensor x({3}, std::vector<double>{-1, 0, 2});
    CHECK(relu(x) == Tensor({3}, std::vector<double>{0, 0, 2}));
    CHECK(relu(relu(x)) == relu(x));
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(200 + static_cast<uint64_t>(seed));
        auto in = random_tensor({4, 4, 3}, rng);
        for (auto& v : in.values()) {
            if (std::abs(v) < 0.01) v += 0.05;  // keep clear of the kink
        }
        auto w = random_tensor(in.shape(), rng);
        auto f = [&] { return weighted_sum(relu(in), w); };
        CHECK(relative_error(relu_backward(in, w).values(), numeric_gradient(f, in.values())) < kTol);
    }
}

TEST_CASE("maxpool matches a brute-force scan and finite differences") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(300 + static_cast<uint64_t>(seed));
        // Distinct values 0.05 apart keep every window maximum unique beyond the FD step.
        Tensor x({6, 6, 2});
        for (size_t i = 0; i < x.size(); ++i) x[i] = 0.05 * static_cast<double>(i) - 1.8;
        rng.shuffle(x.values());
        const size_t window = 2 + rng.index(2), stride = 1 + rng.index(2);
        auto r = maxpool_forward(x, window, stride);
        const size_t oh = r.output.extent(0), ow = r.output.extent(1);
        for (size_t i = 0; i < oh; ++i)
            for (size_t j = 0; j < ow; ++j)
                for (size_t c = 0; c < 2; ++c) {
                    double m = -1e300;
                    for (size_t u = 0; u < window; ++u)
                        for (size_t v = 0; v < window; ++v) m = std::max(m, x.at(i * stride + u, j * stride + v, c));
                    CHECK(r.output.at(i, j, c) == m);
                }
        auto w = random_tensor(r.output.shape(), rng);
        auto f = [&] { return weighted_sum(maxpool_forward(x, window, stride).output, w); };
        auto g = maxpool_backward(x.shape(), r.argmax, w);
        CHECK(relative_error(g.values(), numeric_gradient(f, x.values())) < kTol);
    }
}

TEST_CASE("maxpool ties go to the first element") {
    Tensor x({2, 2, 1}, 3.0);
    auto r = maxpool_forward(x, 2, 2);
    auto g = maxpool_backward(x.shape(), r.argmax, Tensor({1, 1, 1}, 1.0));
    CHECK(g == Tensor({2, 2, 1}, std::vector<double>{1, 0, 0, 0}));
    CHECK_THROWS_AS(maxpool_forward(Tensor({1, 1, 1}), 2, 2), DimensionError);
}

TEST_CASE("fc identity, bias and gradients") {
    auto layer = make_fc_layer(3, 3);
    for (size_t i = 0; i < 3; ++i) layer.weights[i * 3 + i] = 1.0;
    Tensor x({3}, std::vector<double>{1, -2, 3});
    CHECK(fc_forward(x, layer) == x);
    layer.bias = Tensor({3}, std::vector<double>{4, 5, 6});
    CHECK(fc_forward(Tensor({3}, 0.0), layer) == layer.bias);
    for (int seed = 0; seed < kSeeds; ++seed) {
        Rng rng(400 + static_cast<uint64_t>(seed));
        auto fc = make_fc_layer(4, 12);
        fc.weights = random_tensor(fc.weights.shape(), rng);
        fc.bias = random_tensor(fc.bias.shape(), rng);
        auto in = random_tensor({2, 2, 3}, rng);
        auto w = random_tensor({4}, rng);
        auto f = [&] { return weighted_sum(fc_forward(in, fc), w); };
        auto g = fc_backward(in, fc, w);
        CHECK(g.input.shape() == in.shape());
        CHECK(relative_error(g.input.values(), numeric_gradient(f, in.values())) < kTol);
        CHECK(relative_error(g.weights.values(), numeric_gradient(f, fc.weights.values())) < kTol);
        CHECK(relative_error(g.bias.values(), numeric_gradient(f, fc.bias.values())) < kTol);
    }
}

TEST_CASE("momentum SGD updates") {
    Tensor p({2}, std::vector<double>{1.0, -1.0});
    Tensor g({2}, std::vector<double>{0.5, 2.0});
    std::vector<Tensor*> params{&p};
    std::vector<Tensor> grads{g};

    SUBCASE("momentum 0 is plain gradient descent") {
        MomentumState s{0.1, 0.0, {}};
        sgd_momentum_step(params, grads, s);
        CHECK(p[0] == 1.0 - 0.1 * 0.5);
        CHECK(p[1] == -1.0 - 0.1 * 2.0);
    }
    SUBCASE("second step with constant gradient moves by 1.9 lr g") {
        MomentumState s{0.01, 0.9, {}};
        sgd_momentum_step(params, grads, s);
        const double after_first = p[1];
        sgd_momentum_step(params, grads, s);
        CHECK(after_first - p[1] == doctest::Approx(0.01 * 1.9 * 2.0).epsilon(1e-12));
    }
    SUBCASE("zero gradient leaves parameters alone") {
        MomentumState s{0.1, 0.9, {}};
        std::vector<Tensor> zeros{Tensor({2}, 0.0)};
        sgd_momentum_step(params, zeros, s);
        CHECK(p == Tensor({2}, std::vector<double>{1.0, -1.0}));
    }
}

TEST_CASE("distances") {
    EmbeddingVector a{1, -2}, b{-1, 1};
    CHECK(l1_distance(a, b) == EmbeddingVector{2, 3});
    CHECK(l1_distance(a, a) == EmbeddingVector{0, 0});
    CHECK(euclidean_distance(EmbeddingVector{1, 0}, EmbeddingVector{0, 1}) == doctest::Approx(std::sqrt(2.0)));
    CHECK(euclidean_distance(a, a) == 0.0);
    CHECK(squared_euclidean_distance(a, b) == 13.0);
    CHECK_THROWS_AS(euclidean_distance(a, EmbeddingVector{1}), DimensionError);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    Tensor t({2, 3}, 1.0);
    CHECK(t.grad().size() == 6);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}
