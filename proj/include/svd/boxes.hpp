#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace svd {

// Axis-aligned pixel box [x1, y1, x2, y2].
using Box = std::array<double, 4>;

struct Detection {
    Box box{};
    double score = 0.0;
    int cls = 0;
};

struct GroundTruthBox {
    Box box{};
    int cls = 0;
    int64_t sequence_id = 0;
    int64_t frame_id = 0;
};

// One evaluated frame: detections plus ground truth, the currency of eval
// and forensics. event_count feeds density binning.
struct FrameRecord {
    int64_t frame_id = 0;
    int64_t sequence_id = 0;
    int64_t event_count = 0;
    std::vector<Detection> detections;
    std::vector<GroundTruthBox> ground_truths;
};

// Intersection over union; 0 for disjoint boxes, no negative areas.
double iou(const Box& a, const Box& b);

inline double box_area(const Box& b) {
    double w = b[2] - b[0];
    double h = b[3] - b[1];
    return (w > 0 && h > 0) ? w * h : 0.0;
}

} // namespace svd
