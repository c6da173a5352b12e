#pragma once

#include <optional>

#include "svd/rulebook.hpp"
#include "svd/tensor.hpp"

namespace svd {

// Squeeze-excitation parameters: C -> C/r -> C with sigmoid gate.
struct SEParams {
    int channels = 0;
    int reduction = 16;
    std::vector<float> w1; // (C/r) x C row-major: hidden = w1 * squeeze + b1
    std::vector<float> b1;
    std::vector<float> w2; // C x (C/r)
    std::vector<float> b2;

    int hidden() const { return channels / reduction; }
    void validate() const;
};

// Active set preserved; values equal dense convolution at active positions.
SparseTensor3D subm_conv3d(const SparseTensor3D& x, const ConvParams& params);

// Output coords = unique downsampled active set, canonical order.
SparseTensor3D strided_conv3d(const SparseTensor3D& x, const ConvParams& params);

// Output coords = kernel windows around upsampled active inputs, clipped.
SparseTensor3D transpose_conv3d(const SparseTensor3D& x, const ConvParams& params,
                                const std::optional<GridShape>& out_shape = {});

// Union of active sets in canonical order; features add where both active.
SparseTensor3D sparse_add_union(const SparseTensor3D& a, const SparseTensor3D& b);

// Per-row normalization across channels.
SparseTensor3D sparse_layernorm(const SparseTensor3D& x, const std::vector<float>& gain,
                                const std::vector<float>& bias, float eps = 1e-5f);

// Elementwise max(0, .); rows that become all-zero stay active.
SparseTensor3D sparse_relu(const SparseTensor3D& x);

// Channel gate from the mean over active rows of each batch element.
SparseTensor3D squeeze_excitation(const SparseTensor3D& x, const SEParams& se);

// Channelwise max over temporal groups sharing (b, y, x); output has T=1.
SparseTensor3D temporal_max_squeeze(const SparseTensor3D& x);

} // namespace svd
