#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svd/errors.hpp"

namespace svd {

struct GridShape {
    int32_t b = 1;
    int32_t t = 1;
    int32_t h = 1;
    int32_t w = 1;

    bool operator==(const GridShape&) const = default;
    int64_t volume() const {
        return int64_t(b) * int64_t(t) * int64_t(h) * int64_t(w);
    }
};

struct VoxelCoord {
    int32_t batch = 0;
    int32_t t = 0;
    int32_t y = 0;
    int32_t x = 0;

    bool operator==(const VoxelCoord&) const = default;
    // Lexicographic (batch, t, y, x): the canonical order for union/downsample outputs.
    bool operator<(const VoxelCoord& o) const {
        if (batch != o.batch) return batch < o.batch;
        if (t != o.t) return t < o.t;
        if (y != o.y) return y < o.y;
        return x < o.x;
    }
};

// Injective for shapes up to (256, 256, 65536, 65536), which covers the
// spec'd (256, 64, 4096, 4096) envelope.
inline uint64_t pack_coord(const VoxelCoord& c) {
    return (uint64_t(uint32_t(c.batch)) << 40) | (uint64_t(uint32_t(c.t)) << 32) |
           (uint64_t(uint32_t(c.y)) << 16) | uint64_t(uint32_t(c.x));
}

// Sparse 3D tensor over a (B,T,H,W) grid: ordered active coordinates plus an
// M x C row-major feature matrix. Immutable after construction.
class SparseTensor3D {
public:
    SparseTensor3D() = default;
    SparseTensor3D(GridShape shape, int channels,
                   std::vector<VoxelCoord> coords, std::vector<float> features);

    static SparseTensor3D build(GridShape shape, int channels,
                                const std::vector<std::pair<VoxelCoord, std::vector<float>>>& pairs);

    const GridShape& shape() const { return shape_; }
    int channels() const { return channels_; }
    int64_t size() const { return int64_t(coords_.size()); }
    const std::vector<VoxelCoord>& coords() const { return coords_; }
    const std::vector<float>& features() const { return features_; }

    std::span<const float> row(int64_t i) const {
        return {features_.data() + i * channels_, size_t(channels_)};
    }

    // Row position of a coordinate, or -1 if inactive.
    int64_t find(const VoxelCoord& c) const {
        auto it = index_.find(pack_coord(c));
        return it == index_.end() ? -1 : it->second;
    }

    bool in_bounds(const VoxelCoord& c) const {
        return c.batch >= 0 && c.batch < shape_.b && c.t >= 0 && c.t < shape_.t &&
               c.y >= 0 && c.y < shape_.h && c.x >= 0 && c.x < shape_.w;
    }

private:
    void check_and_index();

    GridShape shape_;
    int channels_ = 0;
    std::vector<VoxelCoord> coords_;
    std::vector<float> features_;
    std::unordered_map<uint64_t, int64_t> index_;
};

} // namespace svd
