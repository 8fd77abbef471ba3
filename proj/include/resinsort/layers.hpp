#pragma once

#include <cstddef>
#include <vector>

#include "resinsort/tensor.hpp"

namespace resinsort {

class Rng;

struct ConvLayer {
    Tensor filters;  // count x kh x kw x in_channels
    Tensor bias;     // count
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t count() const { return filters.extent(0); }
    std::size_t kernel_h() const { return filters.extent(1); }
    std::size_t kernel_w() const { return filters.extent(2); }
    std::size_t in_channels() const { return filters.extent(3); }
};

struct FcLayer {
    Tensor weights;  // out x in
    Tensor bias;     // out

    std::size_t out_features() const { return weights.extent(0); }
    std::size_t in_features() const { return weights.extent(1); }
};

/// floor((in + 2*padding - kernel) / stride) + 1, or 0 when the window does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Output shape of a convolution on an (h, w, c) input; throws DimensionError if invalid.
Shape conv2d_output_shape(const Shape& input, const ConvLayer& layer);

/// Zero filters/bias with the given geometry.
ConvLayer make_conv_layer(std::size_t count, std::size_t kernel_h, std::size_t kernel_w, std::size_t in_channels,
                          std::size_t stride = 1, std::size_t padding = 0);
FcLayer make_fc_layer(std::size_t out_features, std::size_t in_features);

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
void glorot_init(ConvLayer& layer, Rng& rng);
void glorot_init(FcLayer& layer, Rng& rng);

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer);

struct ConvGrads {
    Tensor input;
    Tensor filters;
    Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out);

/// As above; when `with_input_grad` is false the returned input gradient is
/// left at zero, which saves work on a network's first layer.
ConvGrads conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out, bool with_input_grad);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct PoolResult {
    Tensor output;
    /// Flat input index of the maximum selected for each output element.
    std::vector<std::size_t> argmax;
};

/// Channelwise max over window x window patches. Ties resolve to the first
/// element in row-major scan order.
PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride);
Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& grad_out);

/// y = W * flatten(x) + b
Tensor fc_forward(const Tensor& input, const FcLayer& layer);

struct FcGrads {
    Tensor input;  // same shape as the forward input
    Tensor weights;
    Tensor bias;
};

FcGrads fc_backward(const Tensor& input, const FcLayer& layer, const Tensor& grad_out);

}  // namespace resinsort
