#pragma once

#include <random>
#include <utility>
#include <vector>

#include "svd/events.hpp"
#include "svd/tensor.hpp"

namespace svd {

struct VoxelizerConfig {
    int temporal_bins = 16;
    int out_h = 640;
    int out_w = 640;
    uint64_t window_us = 33000;
    int channels = 6; // 2 or 6
    double hot_pixel_factor = 3.0;
    double lambda_scale = 5.0;
    // When set, lambda uses the fixed window length instead of the observed
    // (max - min) timestamp range.
    bool fixed_time_range = false;

    void validate() const;
};

// Non-overlapping windows [k*dt, (k+1)*dt) with timestamps re-based to the
// window start. Empty windows are yielded; window count = ceil((t_last+1)/dt).
std::vector<EventStream> slice_windows(const EventStream& stream, uint64_t window_us);

// Removes pixels whose total event count exceeds factor times the mean over
// pixels with at least one event. Returns the suppressed (y, x) list.
std::pair<EventStream, std::vector<std::pair<int, int>>>
hot_pixel_filter(const EventStream& stream, double factor);

// floor(t*T/dt), clamped into [0, T-1] at the upper window boundary.
int temporal_bin(uint64_t t_rebased, int temporal_bins, uint64_t window_us);

// One active voxel per nonempty (t_bin, y, x), features per the 6-channel
// temporal surface (or raw counts for channels=2). Output coords are in
// canonical lexicographic order.
SparseTensor3D voxelize_window(const EventStream& window, const VoxelizerConfig& config);

enum class AugmentOp { HFlip, PolarityInvert, EventDropout, Scale };

struct AugmentSpec {
    AugmentOp op = AugmentOp::HFlip;
    double param = 0.0; // dropout probability or scale factor
};

SparseTensor3D augment(const SparseTensor3D& tensor, const AugmentSpec& spec,
                       std::mt19937_64& rng);

} // namespace svd
