#include "resinsort/layers.hpp"

#include <algorithm>
#include <cmath>

#include "resinsort/random.hpp"

namespace resinsort {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_to_string(t.shape()));
    }
}

void check_conv_layer(const ConvLayer& layer) {
    require_rank(layer.filters, 4, "conv filters");
    if (layer.bias.rank() != 1 || layer.bias.extent(0) != layer.count()) {
        throw DimensionError("conv bias " + shape_to_string(layer.bias.shape()) + " does not match " +
                             std::to_string(layer.count()) + " filters");
    }
    if (layer.stride == 0) throw DimensionError("conv stride must be positive");
}

// Valid kernel offsets [lo, hi) for output position `out` along one axis.
struct Span1d {
    std::size_t lo;
    std::size_t hi;
    std::ptrdiff_t origin;  // input coordinate of kernel offset 0
};

Span1d kernel_span(std::size_t out, std::size_t stride, std::size_t padding, std::size_t kernel, std::size_t in) {
    const auto origin = static_cast<std::ptrdiff_t>(out * stride) - static_cast<std::ptrdiff_t>(padding);
    const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -origin));
    const auto end = static_cast<std::ptrdiff_t>(in) - origin;
    const auto hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(end, 0, static_cast<std::ptrdiff_t>(kernel)));
    return {lo, std::max(lo, hi), origin};
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0 || in + 2 * padding < kernel) return 0;
    return (in + 2 * padding - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const ConvLayer& layer) {
    check_conv_layer(layer);
    if (input.size() != 3) throw DimensionError("conv input must be rank 3 (h, w, c), got " + shape_to_string(input));
    if (input[2] != layer.in_channels()) {
        throw DimensionError("conv input depth " + std::to_string(input[2]) + " != filter depth " +
                             std::to_string(layer.in_channels()));
    }
    const auto oh = conv_output_extent(input[0], layer.kernel_h(), layer.stride, layer.padding);
    const auto ow = conv_output_extent(input[1], layer.kernel_w(), layer.stride, layer.padding);
    if (oh == 0 || ow == 0) {
        throw DimensionError("conv kernel " + std::to_string(layer.kernel_h()) + "x" +
                             std::to_string(layer.kernel_w()) + " does not fit input " + shape_to_string(input));
    }
    return {oh, ow, layer.count()};
}

ConvLayer make_conv_layer(std::size_t count, std::size_t kernel_h, std::size_t kernel_w, std::size_t in_channels,
                          std::size_t stride, std::size_t padding) {
    return ConvLayer{Tensor({count, kernel_h, kernel_w, in_channels}), Tensor({count}), stride, padding};
}

FcLayer make_fc_layer(std::size_t out_features, std::size_t in_features) {
    return FcLayer{Tensor({out_features, in_features}), Tensor({out_features})};
}

void glorot_init(ConvLayer& layer, Rng& rng) {
    const double receptive = static_cast<double>(layer.kernel_h() * layer.kernel_w());
    const double fan_in = receptive * static_cast<double>(layer.in_channels());
    const double fan_out = receptive * static_cast<double>(layer.count());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& w : layer.filters.values()) w = rng.uniform(-a, a);
    layer.bias.fill(0.0);
}

void glorot_init(FcLayer& layer, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in_features() + layer.out_features()));
    for (auto& w : layer.weights.values()) w = rng.uniform(-a, a);
    layer.bias.fill(0.0);
}

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer) {
    Tensor out(conv2d_output_shape(input.shape(), layer));
    const std::size_t in_h = input.extent(0), in_w = input.extent(1), depth = input.extent(2);
    const std::size_t oh = out.extent(0), ow = out.extent(1), count = layer.count();
    const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
    const double* x = input.data();
    const double* w = layer.filters.data();
    const double* b = layer.bias.data();
    double* y = out.data();

    for (std::size_t i = 0; i < oh; ++i) {
        const auto rows = kernel_span(i, layer.stride, layer.padding, kh, in_h);
        for (std::size_t j = 0; j < ow; ++j) {
            const auto cols = kernel_span(j, layer.stride, layer.padding, kw, in_w);
            const std::size_t run = (cols.hi - cols.lo) * depth;
            double* yo = y + (i * ow + j) * count;
            for (std::size_t f = 0; f < count; ++f) {
                double acc = b[f];
                for (std::size_t ki = rows.lo; ki < rows.hi; ++ki) {
                    const auto ii = static_cast<std::size_t>(rows.origin + static_cast<std::ptrdiff_t>(ki));
                    const auto jj = static_cast<std::size_t>(cols.origin + static_cast<std::ptrdiff_t>(cols.lo));
                    const double* xp = x + (ii * in_w + jj) * depth;
                    const double* wp = w + ((f * kh + ki) * kw + cols.lo) * depth;
                    for (std::size_t t = 0; t < run; ++t) acc += xp[t] * wp[t];
                }
                yo[f] = acc;
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out) {
    return conv2d_backward(input, layer, grad_out, true);
}

ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out, bool with_input_grad) {
    const Shape expected = conv2d_output_shape(input.shape(), layer);
    if (grad_out.shape() != expected) {
        throw DimensionError("conv grad_out shape " + shape_to_string(grad_out.shape()) + " != output shape " +
                             shape_to_string(expected));
    }
    ConvGrads g{Tensor(input.shape()), Tensor(layer.filters.shape()), Tensor(layer.bias.shape())};
    const std::size_t in_h = input.extent(0), in_w = input.extent(1), depth = input.extent(2);
    const std::size_t oh = expected[0], ow = expected[1], count = layer.count();
    const std::size_t kh = layer.kernel_h(), kw = layer.kernel_w();
    const double* x = input.data();
    const double* w = layer.filters.data();
    const double* go = grad_out.data();
    double* gx = g.input.data();
    double* gw = g.filters.data();
    double* gb = g.bias.data();

    for (std::size_t i = 0; i < oh; ++i) {
        const auto rows = kernel_span(i, layer.stride, layer.padding, kh, in_h);
        for (std::size_t j = 0; j < ow; ++j) {
            const auto cols = kernel_span(j, layer.stride, layer.padding, kw, in_w);
            const std::size_t run = (cols.hi - cols.lo) * depth;
            const double* gp = go + (i * ow + j) * count;
            for (std::size_t f = 0; f < count; ++f) {
                const double gval = gp[f];
                gb[f] += gval;
                if (gval == 0.0) continue;
                for (std::size_t ki = rows.lo; ki < rows.hi; ++ki) {
                    const auto ii = static_cast<std::size_t>(rows.origin + static_cast<std::ptrdiff_t>(ki));
                    const auto jj = static_cast<std::size_t>(cols.origin + static_cast<std::ptrdiff_t>(cols.lo));
                    const std::size_t xoff = (ii * in_w + jj) * depth;
                    const std::size_t woff = ((f * kh + ki) * kw + cols.lo) * depth;
                    for (std::size_t t = 0; t < run; ++t) gw[woff + t] += gval * x[xoff + t];
                    if (with_input_grad) {
                        for (std::size_t t = 0; t < run; ++t) gx[xoff + t] += gval * w[woff + t];
                    }
                }
            }
        }
    }
    return g;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "relu_backward");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > 0.0)) g[i] = 0.0;
    }
    return g;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
    require_rank(input, 3, "maxpool input");
    if (window == 0 || stride == 0) throw DimensionError("maxpool window and stride must be positive");
    const std::size_t in_h = input.extent(0), in_w = input.extent(1), depth = input.extent(2);
    if (window > in_h || window > in_w) {
        throw DimensionError("maxpool window " + std::to_string(window) + " larger than input " +
                             shape_to_string(input.shape()));
    }
    const std::size_t oh = (in_h - window) / stride + 1;
    const std::size_t ow = (in_w - window) / stride + 1;
    PoolResult r{Tensor({oh, ow, depth}), std::vector<std::size_t>(oh * ow * depth)};
    const double* x = input.data();

    for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            for (std::size_t c = 0; c < depth; ++c) {
                std::size_t best = ((i * stride) * in_w + j * stride) * depth + c;
                for (std::size_t di = 0; di < window; ++di) {
                    for (std::size_t dj = 0; dj < window; ++dj) {
                        const std::size_t idx = ((i * stride + di) * in_w + (j * stride + dj)) * depth + c;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (i * ow + j) * depth + c;
                r.output[o] = x[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw DimensionError("maxpool_backward: " + std::to_string(argmax.size()) + " argmax entries for grad of " +
                             shape_to_string(grad_out.shape()));
    }
    Tensor g(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        if (argmax[o] >= g.size()) throw DimensionError("maxpool_backward: argmax index out of range");
        g[argmax[o]] += grad_out[o];
    }
    return g;
}

Tensor fc_forward(const Tensor& input, const FcLayer& layer) {
    const std::size_t n_in = layer.in_features(), n_out = layer.out_features();
    if (input.size() != n_in) {
        throw DimensionError("fc input length " + std::to_string(input.size()) + " != weight columns " +
                             std::to_string(n_in));
    }
    Tensor out({n_out});
    const double* x = input.data();
    const double* w = layer.weights.data();
    for (std::size_t o = 0; o < n_out; ++o) {
        double acc = layer.bias[o];
        const double* row = w + o * n_in;
        for (std::size_t t = 0; t < n_in; ++t) acc += row[t] * x[t];
        out[o] = acc;
    }
    return out;
}

FcGrads fc_backward(const Tensor& input, const FcLayer& layer, const Tensor& grad_out) {
    const std::size_t n_in = layer.in_features(), n_out = layer.out_features();
    if (input.size() != n_in) {
        throw DimensionError("fc input length " + std::to_string(input.size()) + " != weight columns " +
                             std::to_string(n_in));
    }
    if (grad_out.size() != n_out) {
        throw DimensionError("fc grad_out length " + std::to_string(grad_out.size()) + " != " + std::to_string(n_out));
    }
    FcGrads g{Tensor(input.shape()), Tensor(layer.weights.shape()), Tensor(layer.bias.shape())};
    const double* x = input.data();
    const double* w = layer.weights.data();
    double* gx = g.input.data();
    double* gw = g.weights.data();
    for (std::size_t o = 0; o < n_out; ++o) {
        const double go = grad_out[o];
        g.bias[o] = go;
        if (go == 0.0) continue;
        const double* row = w + o * n_in;
        double* grow = gw + o * n_in;
        for (std::size_t t = 0; t < n_in; ++t) {
            grow[t] = go * x[t];
            gx[t] += go * row[t];
        }
    }
    return g;
}

}  // namespace resinsort
