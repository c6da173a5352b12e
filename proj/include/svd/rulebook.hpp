#pragma once

#include <array>
#include <optional>
#include <vector>

#include "svd/tensor.hpp"

namespace svd {

struct KernelShape {
    int kt = 1;
    int ky = 1;
    int kx = 1;
    int volume() const { return kt * ky * kx; }
    bool operator==(const KernelShape&) const = default;
};

struct Stride3 {
    int st = 1;
    int sy = 1;
    int sx = 1;
    bool operator==(const Stride3&) const = default;
};

// (dt, dy, dx) relative to the kernel center; index k maps to k - floor(K/2).
struct KernelOffset {
    int dt = 0;
    int dy = 0;
    int dx = 0;
    bool operator==(const KernelOffset&) const = default;
};

enum class ConvMode { Submanifold, Strided, Transposed };

struct RulePair {
    int64_t input_row;
    int64_t output_row;
};

// Per-offset gather/scatter index lists driving sparse convolution.
struct Rulebook {
    KernelShape kernel;
    Stride3 stride;
    ConvMode mode = ConvMode::Submanifold;
    std::vector<KernelOffset> offsets;            // row-major over (kt, ky, kx)
    std::vector<std::vector<RulePair>> pairs;     // one list per offset
    std::vector<VoxelCoord> out_coords;
    GridShape out_shape;
};

// Output grid extents: submanifold keeps the input shape, strided uses
// ceil(in/stride), transposed uses in*stride unless an explicit shape is given.
GridShape conv_output_shape(const GridShape& in, const KernelShape& kernel,
                            const Stride3& stride, ConvMode mode,
                            const std::optional<GridShape>& out_shape_override = {});

Rulebook build_rulebook(const SparseTensor3D& input, const KernelShape& kernel,
                        const Stride3& stride, ConvMode mode,
                        const std::optional<GridShape>& out_shape_override = {});

struct ConvParams {
    KernelShape kernel;
    Stride3 stride;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<std::vector<float>> weights; // per offset, C_in x C_out row-major
    std::vector<float> bias;                 // C_out

    void validate() const;
};

// out[j] = bias + sum over (offset, i->j) pairs of features[i] * W[offset].
// Accumulation runs in fixed offset order so results are parallelism-independent.
SparseTensor3D gather_scatter_matmul(const SparseTensor3D& input, const Rulebook& rb,
                                     const ConvParams& params);

} // namespace svd
