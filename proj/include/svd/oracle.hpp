#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "svd/boxes.hpp"
#include "svd/rulebook.hpp"
#include "svd/tensor.hpp"

// Brute-force references used only for verification. Everything here runs in
// 64-bit arithmetic and is desk-scale only; production code never calls it.
namespace svd::oracle {

struct DenseGrid {
    GridShape shape;
    int channels = 0;
    std::vector<double> values; // [b][t][y][x][c] row-major

    DenseGrid() = default;
    DenseGrid(GridShape s, int c);

    double& at(int b, int t, int y, int x, int ch);
    double at(int b, int t, int y, int x, int ch) const;
};

DenseGrid densify(const SparseTensor3D& sparse);
// Keeps positions with at least one nonzero channel.
SparseTensor3D sparsify(const DenseGrid& dense);

// Direct loop convolution with zero padding; strided and transposed variants
// share the centered-offset convention of the sparse engine.
DenseGrid dense_conv3d(const DenseGrid& grid, const ConvParams& params, ConvMode mode,
                       const std::optional<GridShape>& out_shape_override = {});

std::vector<Detection> nms_bruteforce(const std::vector<Detection>& dets,
                                      double iou_threshold, int max_out);

// 101-point interpolated AP by explicit enumeration of every distinct score
// threshold; matching is per-frame greedy highest-IoU.
double ap_bruteforce(const std::vector<FrameRecord>& frames, double iou_threshold);

struct MemoryReport {
    uint64_t dense_bytes = 0;
    uint64_t sparse_bytes = 0;
    double ratio = 0.0;
};

MemoryReport memory_calculator(int64_t t, int64_t h, int64_t w, int64_t c,
                               int64_t bytes_per_scalar, int64_t m,
                               int64_t coord_bytes, int64_t feat_bytes,
                               int64_t header_bytes = 40);

} // namespace svd::oracle
