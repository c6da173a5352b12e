#include "svd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace svd::oracle {

namespace {
constexpr int64_t kMaxDenseElements = int64_t(1) << 24;
}

DenseGrid::DenseGrid(GridShape s, int c) : shape(s), channels(c) {
    const int64_t n = s.volume() * c;
    if (n > kMaxDenseElements)
        throw ShapeError("dense oracle grid exceeds the desk-scale element guard");
    values.assign(size_t(n), 0.0);
}

double& DenseGrid::at(int b, int t, int y, int x, int ch) {
    return values[size_t(
        (((int64_t(b) * shape.t + t) * shape.h + y) * shape.w + x) * channels + ch)];
}

double DenseGrid::at(int b, int t, int y, int x, int ch) const {
    return values[size_t(
        (((int64_t(b) * shape.t + t) * shape.h + y) * shape.w + x) * channels + ch)];
}

DenseGrid densify(const SparseTensor3D& sparse) {
    DenseGrid g(sparse.shape(), sparse.channels());
    for (int64_t i = 0; i < sparse.size(); ++i) {
        const auto& c = sparse.coords()[size_t(i)];
        auto row = sparse.row(i);
        for (int ch = 0; ch < sparse.channels(); ++ch)
            g.at(c.batch, c.t, c.y, c.x, ch) = double(row[size_t(ch)]);
    }
    return g;
}

SparseTensor3D sparsify(const DenseGrid& dense) {
    std::vector<VoxelCoord> coords;
    std::vector<float> feats;
    for (int b = 0; b < dense.shape.b; ++b)
        for (int t = 0; t < dense.shape.t; ++t)
            for (int y = 0; y < dense.shape.h; ++y)
                for (int x = 0; x < dense.shape.w; ++x) {
                    bool any = false;
                    for (int ch = 0; ch < dense.channels; ++ch)
                        if (dense.at(b, t, y, x, ch) != 0.0) { any = true; break; }
                    if (!any) continue;
                    coords.push_back({b, t, y, x});
                    for (int ch = 0; ch < dense.channels; ++ch)
                        feats.push_back(float(dense.at(b, t, y, x, ch)));
                }
    return SparseTensor3D(dense.shape, dense.channels, std::move(coords), std::move(feats));
}

DenseGrid dense_conv3d(const DenseGrid& grid, const ConvParams& params, ConvMode mode,
                       const std::optional<GridShape>& out_shape_override) {
    params.validate();
    if (grid.channels != params.in_channels)
        throw ShapeError("dense oracle channel mismatch");
    const auto& k = params.kernel;
    const auto& s = (mode == ConvMode::Submanifold) ? Stride3{1, 1, 1} : params.stride;
    const GridShape out_shape =
        conv_output_shape(grid.shape, k, s, mode, out_shape_override);
    DenseGrid out(out_shape, params.out_channels);

    for (auto& v : out.values) v = 0.0;
    for (int b = 0; b < out_shape.b; ++b)
        for (int t = 0; t < out_shape.t; ++t)
            for (int y = 0; y < out_shape.h; ++y)
                for (int x = 0; x < out_shape.w; ++x)
                    for (int oc = 0; oc < params.out_channels; ++oc)
                        out.at(b, t, y, x, oc) = double(params.bias[size_t(oc)]);

    auto in_ok = [&](int t, int y, int x) {
        return t >= 0 && t < grid.shape.t && y >= 0 && y < grid.shape.h && x >= 0 &&
               x < grid.shape.w;
    };

    if (mode == ConvMode::Transposed) {
        // Scatter: out[c*s + o] += W[o] * in[c].
        for (int b = 0; b < grid.shape.b; ++b)
            for (int t = 0; t < grid.shape.t; ++t)
                for (int y = 0; y < grid.shape.h; ++y)
                    for (int x = 0; x < grid.shape.w; ++x) {
                        int oi = 0;
                        for (int kt = 0; kt < k.kt; ++kt)
                            for (int ky = 0; ky < k.ky; ++ky)
                                for (int kx = 0; kx < k.kx; ++kx, ++oi) {
                                    const int ot = t * s.st + kt - k.kt / 2;
                                    const int oy = y * s.sy + ky - k.ky / 2;
                                    const int ox = x * s.sx + kx - k.kx / 2;
                                    if (ot < 0 || ot >= out_shape.t || oy < 0 ||
                                        oy >= out_shape.h || ox < 0 || ox >= out_shape.w)
                                        continue;
                                    const auto& w = params.weights[size_t(oi)];
                                    for (int ic = 0; ic < params.in_channels; ++ic) {
                                        const double v = grid.at(b, t, y, x, ic);
                                        for (int oc = 0; oc < params.out_channels; ++oc)
                                            out.at(b, ot, oy, ox, oc) +=
                                                v * double(w[size_t(ic * params.out_channels + oc)]);
                                    }
                                }
                    }
        return out;
    }

    // Gather: out[p] += W[o] * in[p*s + o].
    for (int b = 0; b < out_shape.b; ++b)
        for (int t = 0; t < out_shape.t; ++t)
            for (int y = 0; y < out_shape.h; ++y)
                for (int x = 0; x < out_shape.w; ++x) {
                    int oi = 0;
                    for (int kt = 0; kt < k.kt; ++kt)
                        for (int ky = 0; ky < k.ky; ++ky)
                            for (int kx = 0; kx < k.kx; ++kx, ++oi) {
                                const int it = t * s.st + kt - k.kt / 2;
                                const int iy = y * s.sy + ky - k.ky / 2;
                                const int ix = x * s.sx + kx - k.kx / 2;
                                if (!in_ok(it, iy, ix)) continue;
                                const auto& w = params.weights[size_t(oi)];
                                for (int ic = 0; ic < params.in_channels; ++ic) {
                                    const double v = grid.at(b, it, iy, ix, ic);
                                    for (int oc = 0; oc < params.out_channels; ++oc)
                                        out.at(b, t, y, x, oc) +=
                                            v * double(w[size_t(ic * params.out_channels + oc)]);
                                }
                            }
                }
    return out;
}

std::vector<Detection> nms_bruteforce(const std::vector<Detection>& dets,
                                      double iou_threshold, int max_out) {
    std::vector<size_t> order(dets.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
    std::vector<Detection> kept;
    for (size_t idx : order) {
        if (int(kept.size()) >= max_out) break;
        bool suppressed = false;
        for (const auto& kd : kept)
            if (iou(dets[idx].box, kd.box) > iou_threshold) { suppressed = true; break; }
        if (!suppressed) kept.push_back(dets[idx]);
    }
    return kept;
}

double ap_bruteforce(const std::vector<FrameRecord>& frames, double iou_threshold) {
    // Per-frame greedy matching over all detections, highest score first.
    struct Labeled { double score; bool tp; };
    std::vector<Labeled> labeled;
    int64_t total_gt = 0;
    for (const auto& fr : frames) {
        total_gt += int64_t(fr.ground_truths.size());
        std::vector<size_t> order(fr.detections.size());
        std::iota(order.begin(), order.end(), size_t(0));
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return fr.detections[a].score > fr.detections[b].score;
        });
        std::vector<bool> gt_used(fr.ground_truths.size(), false);
        for (size_t di : order) {
            double best = -1.0;
            int64_t best_gt = -1;
            for (size_t gi = 0; gi < fr.ground_truths.size(); ++gi) {
                if (gt_used[gi]) continue;
                double v = iou(fr.detections[di].box, fr.ground_truths[gi].box);
                if (v >= iou_threshold && v > best) { best = v; best_gt = int64_t(gi); }
            }
            bool tp = best_gt >= 0;
            if (tp) gt_used[size_t(best_gt)] = true;
            labeled.push_back({fr.detections[di].score, tp});
        }
    }
    if (total_gt == 0) throw ValidationError("AP undefined: corpus has no ground truths");

    // Enumerate every distinct score threshold and compute P/R from scratch.
    std::set<double> thresholds;
    for (const auto& l : labeled) thresholds.insert(l.score);
    std::vector<std::pair<double, double>> pr; // (recall, precision)
    for (double thr : thresholds) {
        int64_t tp = 0, fp = 0;
        for (const auto& l : labeled) {
            if (l.score < thr) continue;
            if (l.tp) ++tp; else ++fp;
        }
        if (tp + fp == 0) continue;
        pr.emplace_back(double(tp) / double(total_gt), double(tp) / double(tp + fp));
    }

    double ap = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = double(i) / 100.0;
        double best_p = 0.0;
        for (const auto& [rec, prec] : pr)
            if (rec >= r - 1e-12) best_p = std::max(best_p, prec);
        ap += best_p;
    }
    return ap / 101.0;
}

MemoryReport memory_calculator(int64_t t, int64_t h, int64_t w, int64_t c,
                               int64_t bytes_per_scalar, int64_t m,
                               int64_t coord_bytes, int64_t feat_bytes,
                               int64_t header_bytes) {
    MemoryReport r;
    r.dense_bytes = uint64_t(t * h * w * c * bytes_per_scalar);
    r.sparse_bytes = uint64_t(m * (coord_bytes + c * feat_bytes) + header_bytes);
    r.ratio = double(r.dense_bytes) / double(r.sparse_bytes);
    return r;
}

} // namespace svd::oracle
