#include "svd/rulebook.hpp"

#include <algorithm>
#include <string>

namespace svd {

namespace {

std::vector<KernelOffset> enumerate_offsets(const KernelShape& k) {
    std::vector<KernelOffset> offsets;
    offsets.reserve(size_t(k.volume()));
    for (int it = 0; it < k.kt; ++it)
        for (int iy = 0; iy < k.ky; ++iy)
            for (int ix = 0; ix < k.kx; ++ix)
                offsets.push_back({it - k.kt / 2, iy - k.ky / 2, ix - k.kx / 2});
    return offsets;
}

int32_t ceil_div(int32_t a, int32_t b) { return (a + b - 1) / b; }

} // namespace

GridShape conv_output_shape(const GridShape& in, const KernelShape&, const Stride3& stride,
                            ConvMode mode, const std::optional<GridShape>& out_shape_override) {
    switch (mode) {
    case ConvMode::Submanifold:
        return in;
    case ConvMode::Strided:
        return {in.b, ceil_div(in.t, stride.st), ceil_div(in.h, stride.sy),
                ceil_div(in.w, stride.sx)};
    case ConvMode::Transposed:
        if (out_shape_override) return *out_shape_override;
        return {in.b, in.t * stride.st, in.h * stride.sy, in.w * stride.sx};
    }
    throw ConfigError("unknown conv mode");
}

Rulebook build_rulebook(const SparseTensor3D& input, const KernelShape& kernel,
                        const Stride3& stride, ConvMode mode,
                        const std::optional<GridShape>& out_shape_override) {
    if (kernel.kt < 1 || kernel.ky < 1 || kernel.kx < 1)
        throw ConfigError("kernel dimensions must be >= 1");
    if (stride.st < 1 || stride.sy < 1 || stride.sx < 1)
        throw ConfigError("stride components must be >= 1");
    if (mode == ConvMode::Submanifold) {
        if (kernel.kt % 2 == 0 || kernel.ky % 2 == 0 || kernel.kx % 2 == 0)
            throw ConfigError("submanifold convolution requires odd kernel dimensions");
        if (!(stride == Stride3{1, 1, 1}))
            throw ConfigError("submanifold convolution is stride-1 by definition");
    }

    Rulebook rb;
    rb.kernel = kernel;
    rb.stride = stride;
    rb.mode = mode;
    rb.offsets = enumerate_offsets(kernel);
    rb.out_shape = conv_output_shape(input.shape(), kernel, stride, mode, out_shape_override);
    rb.pairs.assign(rb.offsets.size(), {});

    const auto& coords = input.coords();

    if (mode == ConvMode::Submanifold) {
        rb.out_coords = coords;
        for (size_t oi = 0; oi < rb.offsets.size(); ++oi) {
            const auto& o = rb.offsets[oi];
            for (int64_t j = 0; j < input.size(); ++j) {
                VoxelCoord q{coords[size_t(j)].batch, coords[size_t(j)].t + o.dt,
                             coords[size_t(j)].y + o.dy, coords[size_t(j)].x + o.dx};
                if (!input.in_bounds(q)) continue;
                int64_t i = input.find(q);
                if (i >= 0) rb.pairs[oi].push_back({i, j});
            }
        }
        return rb;
    }

    if (mode == ConvMode::Strided) {
        std::vector<VoxelCoord> outs;
        outs.reserve(coords.size());
        for (const auto& c : coords)
            outs.push_back({c.batch, c.t / stride.st, c.y / stride.sy, c.x / stride.sx});
        std::sort(outs.begin(), outs.end());
        outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
        rb.out_coords = std::move(outs);
        for (size_t oi = 0; oi < rb.offsets.size(); ++oi) {
            const auto& o = rb.offsets[oi];
            for (size_t j = 0; j < rb.out_coords.size(); ++j) {
                const auto& p = rb.out_coords[j];
                VoxelCoord q{p.batch, p.t * stride.st + o.dt, p.y * stride.sy + o.dy,
                             p.x * stride.sx + o.dx};
                if (!input.in_bounds(q)) continue;
                int64_t i = input.find(q);
                if (i >= 0) rb.pairs[oi].push_back({i, int64_t(j)});
            }
        }
        return rb;
    }

    // Transposed: every active input spreads into its kernel window at the
    // upsampled grid; positions outside the output shape are dropped.
    std::vector<VoxelCoord> outs;
    for (const auto& c : coords)
        for (const auto& o : rb.offsets) {
            VoxelCoord p{c.batch, c.t * stride.st + o.dt, c.y * stride.sy + o.dy,
                         c.x * stride.sx + o.dx};
            if (p.t < 0 || p.t >= rb.out_shape.t || p.y < 0 || p.y >= rb.out_shape.h ||
                p.x < 0 || p.x >= rb.out_shape.w)
                continue;
            outs.push_back(p);
        }
    std::sort(outs.begin(), outs.end());
    outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
    rb.out_coords = std::move(outs);

    std::unordered_map<uint64_t, int64_t> out_index;
    out_index.reserve(rb.out_coords.size());
    for (size_t j = 0; j < rb.out_coords.size(); ++j)
        out_index.emplace(pack_coord(rb.out_coords[j]), int64_t(j));

    for (size_t oi = 0; oi < rb.offsets.size(); ++oi) {
        const auto& o = rb.offsets[oi];
        for (int64_t i = 0; i < input.size(); ++i) {
            const auto& c = coords[size_t(i)];
            VoxelCoord p{c.batch, c.t * stride.st + o.dt, c.y * stride.sy + o.dy,
                         c.x * stride.sx + o.dx};
            auto it = out_index.find(pack_coord(p));
            if (it != out_index.end()) rb.pairs[oi].push_back({i, it->second});
        }
    }
    return rb;
}

void ConvParams::validate() const {
    if (int(weights.size()) != kernel.volume())
        throw ShapeError("weight count " + std::to_string(weights.size()) +
                         " does not match kernel volume " + std::to_string(kernel.volume()));
    for (const auto& w : weights)
        if (int64_t(w.size()) != int64_t(in_channels) * out_channels)
            throw ShapeError("weight matrix is not in_channels x out_channels");
    if (int(bias.size()) != out_channels)
        throw ShapeError("bias length does not match out_channels");
}

SparseTensor3D gather_scatter_matmul(const SparseTensor3D& input, const Rulebook& rb,
                                     const ConvParams& params) {
    params.validate();
    if (input.channels() != params.in_channels)
        throw ShapeError("input has " + std::to_string(input.channels()) +
                         " channels but weights expect " + std::to_string(params.in_channels));
    if (rb.offsets.size() != params.weights.size())
        throw ShapeError("rulebook offsets do not match weight count");

    const int cin = params.in_channels;
    const int cout = params.out_channels;
    const int64_t m_out = int64_t(rb.out_coords.size());

    std::vector<float> out(size_t(m_out) * size_t(cout));
    for (int64_t j = 0; j < m_out; ++j)
        std::copy(params.bias.begin(), params.bias.end(), out.begin() + j * cout);

    const float* in_feats = input.features().data();
    for (size_t oi = 0; oi < rb.offsets.size(); ++oi) {
        const float* w = params.weights[oi].data();
        for (const auto& pr : rb.pairs[oi]) {
            const float* fi = in_feats + pr.input_row * cin;
            float* fo = out.data() + pr.output_row * cout;
            for (int ic = 0; ic < cin; ++ic) {
                const float v = fi[ic];
                if (v == 0.0f) continue;
                const float* wrow = w + int64_t(ic) * cout;
                for (int oc = 0; oc < cout; ++oc) fo[oc] += v * wrow[oc];
            }
        }
    }
    return SparseTensor3D(rb.out_shape, cout, rb.out_coords, std::move(out));
}

} // namespace svd
