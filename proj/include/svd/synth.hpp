#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svd/boxes.hpp"
#include "svd/events.hpp"

namespace svd {

struct ObjectSpec {
    double cx = 0.0, cy = 0.0;  // center in the first window
    double vx = 0.0, vy = 0.0;  // drift per window, pixels
    double size = 20.0;         // square footprint side, pixels
    double event_rate = 500.0;  // contour events per window
    double positive_frac = 0.5; // share of ON-polarity events
};

struct SceneSpec {
    int h = 240;
    int w = 304;
    int64_t window_us = 33000;
    int n_windows = 1;
    std::vector<ObjectSpec> objects;
    double noise_rate = 0.0; // uniform background events per window
    uint64_t seed = 42;
};

struct SynthResult {
    EventStream events;
    std::vector<std::vector<GroundTruthBox>> gt_per_window;
};

// Contour-sampled object events (boundary-dominated signatures) plus uniform
// background noise; deterministic for a fixed spec.
SynthResult generate(const SceneSpec& scene);

SceneSpec scene_from_json(const std::string& text);
SceneSpec scene_from_json_file(const std::string& path);

} // namespace svd
