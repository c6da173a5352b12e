#pragma once

#include <string>
#include <vector>

#include "svd/boxes.hpp"
#include "svd/model.hpp"

namespace svd {

struct InferenceConfig {
    double score_threshold = 0.05;
    double nms_iou = 0.5;
    int max_detections = 100;
    int stride = 4;
};

// Row i decodes around center (x*s + s/2, y*s + s/2) with exp(raw) distances,
// so boxes are always non-degenerate.
std::vector<Box> decode_ltrb(const std::vector<HeadPosition>& positions,
                             const std::vector<float>& box_raw, int stride);

// score = sigmoid(cls) * sigmoid(ctr)
std::vector<double> fuse_scores(const std::vector<float>& cls_logit,
                                const std::vector<float>& ctr_logit);

// Greedy descending-score suppression at IoU > threshold; equal scores keep
// input order. Output sorted by descending score, at most max_out entries.
std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold,
                           int max_out);

std::vector<Detection> infer_frame(const SparseTensor3D& x, const ModelParams& params,
                                   const InferenceConfig& config);

// One JSON object per frame: {"frame_id":..,"detections":[{"box":[..],"score":..},..]}
// with box/score printed to 4 decimals for byte-stable golden files.
std::string detections_to_json_line(int64_t frame_id, const std::vector<Detection>& detections);

} // namespace svd
