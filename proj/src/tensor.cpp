#include "svd/tensor.hpp"

#include <string>

namespace svd {

namespace {

void check_bounds(const GridShape& s, const VoxelCoord& c) {
    auto fail = [&](const char* axis, int32_t v, int32_t extent) {
        throw BoundsError(std::string("coordinate out of bounds on axis ") + axis + ": " +
                          std::to_string(v) + " not in [0, " + std::to_string(extent) + ")");
    };
    if (c.batch < 0 || c.batch >= s.b) fail("batch", c.batch, s.b);
    if (c.t < 0 || c.t >= s.t) fail("t", c.t, s.t);
    if (c.y < 0 || c.y >= s.h) fail("y", c.y, s.h);
    if (c.x < 0 || c.x >= s.w) fail("x", c.x, s.w);
}

} // namespace

SparseTensor3D::SparseTensor3D(GridShape shape, int channels,
                               std::vector<VoxelCoord> coords, std::vector<float> features)
    : shape_(shape), channels_(channels),
      coords_(std::move(coords)), features_(std::move(features)) {
    check_and_index();
}

void SparseTensor3D::check_and_index() {
    if (channels_ <= 0) throw ShapeError("channel count must be positive");
    if (features_.size() != coords_.size() * size_t(channels_))
        throw ShapeError("feature matrix rows do not match coordinate count");
    index_.reserve(coords_.size());
    for (size_t i = 0; i < coords_.size(); ++i) {
        check_bounds(shape_, coords_[i]);
        auto [it, inserted] = index_.emplace(pack_coord(coords_[i]), int64_t(i));
        if (!inserted)
            throw DuplicateError("duplicate active coordinate at row " + std::to_string(i));
    }
}

SparseTensor3D SparseTensor3D::build(
    GridShape shape, int channels,
    const std::vector<std::pair<VoxelCoord, std::vector<float>>>& pairs) {
    std::vector<VoxelCoord> coords;
    std::vector<float> features;
    coords.reserve(pairs.size());
    features.reserve(pairs.size() * size_t(channels));
    for (const auto& [coord, feat] : pairs) {
        if (int(feat.size()) != channels)
            throw ShapeError("feature vector length " + std::to_string(feat.size()) +
                             " does not match channel count " + std::to_string(channels));
        coords.push_back(coord);
        features.insert(features.end(), feat.begin(), feat.end());
    }
    return SparseTensor3D(shape, channels, std::move(coords), std::move(features));
}

} // namespace svd
