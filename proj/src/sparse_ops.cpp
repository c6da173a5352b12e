#include "svd/sparse_ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "svd/errors.hpp"

namespace svd {

void SEParams::validate() const {
    if (reduction < 1 || channels % reduction != 0)
        throw ConfigError("SE channels must be divisible by the reduction ratio");
    const size_t h = size_t(hidden());
    if (w1.size() != h * size_t(channels) || b1.size() != h ||
        w2.size() != size_t(channels) * h || b2.size() != size_t(channels))
        throw ShapeError("SE projection matrices do not match channels/reduction");
}

SparseTensor3D subm_conv3d(const SparseTensor3D& x, const ConvParams& params) {
    if (!(params.stride == Stride3{1, 1, 1}))
        throw ConfigError("submanifold convolution is stride-1 by definition");
    auto rb = build_rulebook(x, params.kernel, params.stride, ConvMode::Submanifold);
    return gather_scatter_matmul(x, rb, params);
}

SparseTensor3D strided_conv3d(const SparseTensor3D& x, const ConvParams& params) {
    auto rb = build_rulebook(x, params.kernel, params.stride, ConvMode::Strided);
    return gather_scatter_matmul(x, rb, params);
}

SparseTensor3D transpose_conv3d(const SparseTensor3D& x, const ConvParams& params,
                                const std::optional<GridShape>& out_shape) {
    auto rb = build_rulebook(x, params.kernel, params.stride, ConvMode::Transposed, out_shape);
    return gather_scatter_matmul(x, rb, params);
}

SparseTensor3D sparse_add_union(const SparseTensor3D& a, const SparseTensor3D& b) {
    if (!(a.shape() == b.shape()))
        throw ShapeError("union-add operands have different grid shapes");
    if (a.channels() != b.channels())
        throw ShapeError("union-add operands have different channel counts");
    const int c = a.channels();

    std::vector<VoxelCoord> coords;
    coords.reserve(size_t(a.size() + b.size()));
    coords.insert(coords.end(), a.coords().begin(), a.coords().end());
    coords.insert(coords.end(), b.coords().begin(), b.coords().end());
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    std::vector<float> feats(coords.size() * size_t(c), 0.0f);
    for (size_t j = 0; j < coords.size(); ++j) {
        for (const SparseTensor3D* t : {&a, &b}) {
            int64_t i = t->find(coords[j]);
            if (i < 0) continue;
            auto row = t->row(i);
            for (int ch = 0; ch < c; ++ch) feats[j * size_t(c) + size_t(ch)] += row[size_t(ch)];
        }
    }
    return SparseTensor3D(a.shape(), c, std::move(coords), std::move(feats));
}

SparseTensor3D sparse_layernorm(const SparseTensor3D& x, const std::vector<float>& gain,
                                const std::vector<float>& bias, float eps) {
    const int c = x.channels();
    if (int(gain.size()) != c || int(bias.size()) != c)
        throw ShapeError("layernorm gain/bias length must equal channel count");
    std::vector<float> feats(x.features().size());
    for (int64_t i = 0; i < x.size(); ++i) {
        auto row = x.row(i);
        double mean = 0;
        for (int ch = 0; ch < c; ++ch) mean += row[size_t(ch)];
        mean /= c;
        double var = 0;
        for (int ch = 0; ch < c; ++ch) {
            const double d = row[size_t(ch)] - mean;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + double(eps));
        for (int ch = 0; ch < c; ++ch)
            feats[size_t(i * c + ch)] =
                float((row[size_t(ch)] - mean) * inv) * gain[size_t(ch)] + bias[size_t(ch)];
    }
    return SparseTensor3D(x.shape(), c, x.coords(), std::move(feats));
}

SparseTensor3D sparse_relu(const SparseTensor3D& x) {
    std::vector<float> feats(x.features());
    for (auto& f : feats) f = std::max(0.0f, f);
    return SparseTensor3D(x.shape(), x.channels(), x.coords(), std::move(feats));
}

SparseTensor3D squeeze_excitation(const SparseTensor3D& x, const SEParams& se) {
    se.validate();
    if (x.channels() != se.channels)
        throw ShapeError("SE channel mismatch");
    const int c = se.channels;
    const int h = se.hidden();
    const int nb = x.shape().b;

    // Per-batch mean over active rows.
    std::vector<double> squeeze(size_t(nb) * size_t(c), 0.0);
    std::vector<int64_t> counts(size_t(nb), 0);
    for (int64_t i = 0; i < x.size(); ++i) {
        const int b = x.coords()[size_t(i)].batch;
        auto row = x.row(i);
        for (int ch = 0; ch < c; ++ch) squeeze[size_t(b * c + ch)] += row[size_t(ch)];
        counts[size_t(b)]++;
    }
    std::vector<float> gate(size_t(nb) * size_t(c), 1.0f);
    for (int b = 0; b < nb; ++b) {
        if (counts[size_t(b)] == 0) continue;
        for (int ch = 0; ch < c; ++ch) squeeze[size_t(b * c + ch)] /= double(counts[size_t(b)]);
        std::vector<double> hid(static_cast<size_t>(h), 0.0);
        for (int j = 0; j < h; ++j) {
            double v = se.b1[size_t(j)];
            for (int ch = 0; ch < c; ++ch)
                v += double(se.w1[size_t(j * c + ch)]) * squeeze[size_t(b * c + ch)];
            hid[size_t(j)] = std::max(0.0, v);
        }
        for (int ch = 0; ch < c; ++ch) {
            double v = se.b2[size_t(ch)];
            for (int j = 0; j < h; ++j) v += double(se.w2[size_t(ch * h + j)]) * hid[size_t(j)];
            gate[size_t(b * c + ch)] = float(1.0 / (1.0 + std::exp(-v)));
        }
    }

    std::vector<float> feats(x.features());
    for (int64_t i = 0; i < x.size(); ++i) {
        const int b = x.coords()[size_t(i)].batch;
        for (int ch = 0; ch < c; ++ch) feats[size_t(i * c + ch)] *= gate[size_t(b * c + ch)];
    }
    return SparseTensor3D(x.shape(), c, x.coords(), std::move(feats));
}

SparseTensor3D temporal_max_squeeze(const SparseTensor3D& x) {
    const int c = x.channels();
    std::map<std::array<int32_t, 3>, std::vector<float>> groups;
    for (int64_t i = 0; i < x.size(); ++i) {
        const auto& vc = x.coords()[size_t(i)];
        auto row = x.row(i);
        auto& slot = groups[{vc.batch, vc.y, vc.x}];
        if (slot.empty()) {
            slot.assign(row.begin(), row.end());
        } else {
            for (int ch = 0; ch < c; ++ch)
                slot[size_t(ch)] = std::max(slot[size_t(ch)], row[size_t(ch)]);
        }
    }
    std::vector<VoxelCoord> coords;
    std::vector<float> feats;
    coords.reserve(groups.size());
    for (const auto& [k, f] : groups) {
        coords.push_back({k[0], 0, k[1], k[2]});
        feats.insert(feats.end(), f.begin(), f.end());
    }
    const GridShape out_shape{x.shape().b, 1, x.shape().h, x.shape().w};
    return SparseTensor3D(out_shape, c, std::move(coords), std::move(feats));
}

} // namespace svd
