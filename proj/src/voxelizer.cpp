#include "svd/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "svd/errors.hpp"

namespace svd {

void VoxelizerConfig::validate() const {
    if (temporal_bins < 1) throw ConfigError("temporal_bins must be >= 1");
    if (window_us == 0) throw ConfigError("window_us must be positive");
    if (channels != 2 && channels != 6) throw ConfigError("channels must be 2 or 6");
    if (hot_pixel_factor <= 0) throw ConfigError("hot_pixel_factor must be positive");
    if (out_h < 1 || out_w < 1) throw ConfigError("output grid must be non-empty");
}

std::vector<EventStream> slice_windows(const EventStream& stream, uint64_t window_us) {
    if (window_us == 0) throw ConfigError("window_us must be positive");
    if (stream.events.empty()) return {};
    const uint64_t t_last = stream.events.back().t;
    const uint64_t n_windows = (t_last + 1 + window_us - 1) / window_us;
    std::vector<EventStream> windows(static_cast<size_t>(n_windows));
    for (auto& w : windows) w.sensor_shape = stream.sensor_shape;
    for (const auto& e : stream.events) {
        const uint64_t k = e.t / window_us;
        Event re = e;
        re.t = e.t - k * window_us;
        windows[size_t(k)].events.push_back(re);
    }
    return windows;
}

std::pair<EventStream, std::vector<std::pair<int, int>>>
hot_pixel_filter(const EventStream& stream, double factor) {
    if (factor <= 0) throw ConfigError("hot pixel factor must be positive");
    std::map<std::pair<int, int>, int64_t> counts;
    for (const auto& e : stream.events) counts[{e.y, e.x}]++;
    if (counts.empty()) return {stream, {}};

    int64_t total = 0;
    for (const auto& [_, c] : counts) total += c;
    const double mean = double(total) / double(counts.size());

    std::vector<std::pair<int, int>> suppressed;
    for (const auto& [px, c] : counts)
        if (double(c) > factor * mean) suppressed.push_back(px);

    EventStream out;
    out.sensor_shape = stream.sensor_shape;
    out.events.reserve(stream.events.size());
    for (const auto& e : stream.events) {
        bool hot = std::binary_search(suppressed.begin(), suppressed.end(),
                                      std::make_pair(int(e.y), int(e.x)));
        if (!hot) out.events.push_back(e);
    }
    return {std::move(out), std::move(suppressed)};
}

int temporal_bin(uint64_t t_rebased, int temporal_bins, uint64_t window_us) {
    const uint64_t bin = t_rebased * uint64_t(temporal_bins) / window_us;
    return int(std::min<uint64_t>(bin, uint64_t(temporal_bins - 1)));
}

namespace {

struct PolarityAccum {
    int64_t count = 0;
    uint64_t t_last = 0;
    double t_sum = 0.0;
    double t_sumsq = 0.0;

    void add(uint64_t t) {
        ++count;
        t_last = std::max(t_last, t);
        t_sum += double(t);
        t_sumsq += double(t) * double(t);
    }

    double population_std() const {
        if (count < 2) return 0.0;
        const double mean = t_sum / double(count);
        const double var = std::max(0.0, t_sumsq / double(count) - mean * mean);
        return std::sqrt(var);
    }
};

struct VoxelAccum {
    PolarityAccum pos, neg;
};

int scale_coord(int c, int in_extent, int out_extent) {
    if (in_extent == out_extent) return c;
    const int s = int(std::lround(double(c) * double(out_extent) / double(in_extent)));
    return std::clamp(s, 0, out_extent - 1);
}

} // namespace

SparseTensor3D voxelize_window(const EventStream& window, const VoxelizerConfig& config) {
    config.validate();
    const GridShape shape{1, config.temporal_bins, config.out_h, config.out_w};
    if (window.events.empty()) return SparseTensor3D(shape, config.channels, {}, {});

    uint64_t t_min = window.events.front().t, t_max = 0;
    for (const auto& e : window.events) {
        t_min = std::min(t_min, e.t);
        t_max = std::max(t_max, e.t);
    }
    const double dt_range = config.fixed_time_range
                                ? double(config.window_us)
                                : std::max<double>(1.0, double(t_max - t_min));
    const double lambda = config.lambda_scale / dt_range;

    // Keyed map gives canonical lexicographic (t, y, x) output order.
    std::map<std::array<int, 3>, VoxelAccum> accum;
    for (const auto& e : window.events) {
        const int y = scale_coord(e.y, window.sensor_shape.h, config.out_h);
        const int x = scale_coord(e.x, window.sensor_shape.w, config.out_w);
        const int tb = temporal_bin(e.t, config.temporal_bins, config.window_us);
        auto& v = accum[{tb, y, x}];
        (e.p > 0 ? v.pos : v.neg).add(e.t);
    }

    std::vector<VoxelCoord> coords;
    std::vector<float> feats;
    coords.reserve(accum.size());
    feats.reserve(accum.size() * size_t(config.channels));
    for (const auto& [key, v] : accum) {
        coords.push_back({0, key[0], key[1], key[2]});
        if (config.channels == 2) {
            feats.push_back(float(v.pos.count));
            feats.push_back(float(v.neg.count));
            continue;
        }
        feats.push_back(float(std::log1p(double(v.pos.count))));
        feats.push_back(float(std::log1p(double(v.neg.count))));
        const double r_pos =
            v.pos.count ? std::exp(-lambda * double(t_max - v.pos.t_last)) : 0.0;
        const double r_neg =
            v.neg.count ? std::exp(-lambda * double(t_max - v.neg.t_last)) : 0.0;
        feats.push_back(float(r_pos));
        feats.push_back(float(r_neg));
        feats.push_back(float(v.pos.population_std() / dt_range));
        feats.push_back(float(v.neg.population_std() / dt_range));
    }
    return SparseTensor3D(shape, config.channels, std::move(coords), std::move(feats));
}

namespace {

SparseTensor3D from_rows(const GridShape& shape, int channels,
                         std::vector<std::pair<VoxelCoord, std::vector<float>>> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<VoxelCoord> coords;
    std::vector<float> feats;
    coords.reserve(rows.size());
    for (auto& [c, f] : rows) {
        coords.push_back(c);
        feats.insert(feats.end(), f.begin(), f.end());
    }
    return SparseTensor3D(shape, channels, std::move(coords), std::move(feats));
}

} // namespace

SparseTensor3D augment(const SparseTensor3D& tensor, const AugmentSpec& spec,
                       std::mt19937_64& rng) {
    const int c = tensor.channels();
    switch (spec.op) {
    case AugmentOp::HFlip: {
        std::vector<std::pair<VoxelCoord, std::vector<float>>> rows;
        for (int64_t i = 0; i < tensor.size(); ++i) {
            VoxelCoord vc = tensor.coords()[size_t(i)];
            vc.x = tensor.shape().w - 1 - vc.x;
            auto r = tensor.row(i);
            rows.emplace_back(vc, std::vector<float>(r.begin(), r.end()));
        }
        return from_rows(tensor.shape(), c, std::move(rows));
    }
    case AugmentOp::PolarityInvert: {
        std::vector<float> feats(tensor.features());
        for (int64_t i = 0; i < tensor.size(); ++i)
            for (int pair = 0; pair + 1 < c; pair += 2)
                std::swap(feats[size_t(i * c + pair)], feats[size_t(i * c + pair + 1)]);
        return SparseTensor3D(tensor.shape(), c, tensor.coords(), std::move(feats));
    }
    case AugmentOp::EventDropout: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<VoxelCoord> coords;
        std::vector<float> feats;
        for (int64_t i = 0; i < tensor.size(); ++i) {
            if (u(rng) < spec.param) continue;
            coords.push_back(tensor.coords()[size_t(i)]);
            auto r = tensor.row(i);
            feats.insert(feats.end(), r.begin(), r.end());
        }
        return SparseTensor3D(tensor.shape(), c, std::move(coords), std::move(feats));
    }
    case AugmentOp::Scale: {
        // Collisions merge by feature-wise max; out-of-bounds positions drop.
        std::map<std::array<int, 4>, std::vector<float>> merged;
        for (int64_t i = 0; i < tensor.size(); ++i) {
            VoxelCoord vc = tensor.coords()[size_t(i)];
            const int ny = int(std::lround(spec.param * vc.y));
            const int nx = int(std::lround(spec.param * vc.x));
            if (ny < 0 || ny >= tensor.shape().h || nx < 0 || nx >= tensor.shape().w) continue;
            auto r = tensor.row(i);
            auto& slot = merged[{vc.batch, vc.t, ny, nx}];
            if (slot.empty()) {
                slot.assign(r.begin(), r.end());
            } else {
                for (int ch = 0; ch < c; ++ch)
                    slot[size_t(ch)] = std::max(slot[size_t(ch)], r[size_t(ch)]);
            }
        }
        std::vector<VoxelCoord> coords;
        std::vector<float> feats;
        for (const auto& [k, f] : merged) {
            coords.push_back({k[0], k[1], k[2], k[3]});
            feats.insert(feats.end(), f.begin(), f.end());
        }
        return SparseTensor3D(tensor.shape(), c, std::move(coords), std::move(feats));
    }
    }
    throw ConfigError("unknown augmentation op");
}

} // namespace svd
