#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "svd/rulebook.hpp"
#include "svd/tensor.hpp"

namespace svd::testutil {

// Random sparse tensor with at most max_voxels distinct active positions.
inline SparseTensor3D random_tensor(std::mt19937_64& rng, GridShape shape, int channels,
                                    int max_voxels) {
    std::uniform_int_distribution<int> nb(0, shape.b - 1), nt(0, shape.t - 1),
        ny(0, shape.h - 1), nx(0, shape.w - 1);
    std::uniform_int_distribution<int> nvox(0, max_voxels);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    std::set<std::array<int, 4>> seen;
    std::vector<VoxelCoord> coords;
    const int target = nvox(rng);
    for (int tries = 0; tries < target * 4 && int(coords.size()) < target; ++tries) {
        std::array<int, 4> c{nb(rng), nt(rng), ny(rng), nx(rng)};
        if (seen.insert(c).second) coords.push_back({c[0], c[1], c[2], c[3]});
    }
    std::vector<float> feats(coords.size() * size_t(channels));
    for (auto& f : feats) f = val(rng);
    return SparseTensor3D(shape, channels, std::move(coords), std::move(feats));
}

inline ConvParams random_conv(std::mt19937_64& rng, KernelShape kernel, Stride3 stride,
                              int cin, int cout, bool with_bias = true) {
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    ConvParams p;
    p.kernel = kernel;
    p.stride = stride;
    p.in_channels = cin;
    p.out_channels = cout;
    p.weights.resize(size_t(kernel.volume()));
    for (auto& w : p.weights) {
        w.resize(size_t(cin) * cout);
        for (auto& v : w) v = val(rng);
    }
    p.bias.assign(size_t(cout), 0.0f);
    if (with_bias)
        for (auto& b : p.bias) b = val(rng);
    return p;
}

} // namespace svd::testutil
