#pragma once

#include <string>
#include <vector>

#include "svd/boxes.hpp"

namespace svd {

struct MatchResult {
    // per detection, aligned with the input order
    std::vector<char> det_tp;
    std::vector<int> det_gt;      // claimed ground truth, -1 for false positives
    std::vector<double> det_iou;  // IoU with the claimed ground truth
    // per ground truth
    std::vector<char> gt_matched;
    std::vector<double> gt_best_iou; // best overlap against ALL detections

    int64_t tp() const;
    int64_t fp() const;
    int64_t fn() const;
};

// Greedy per-frame matching: detections in descending score order each claim
// the unmatched ground truth of highest IoU >= threshold.
MatchResult match_frame(const std::vector<Detection>& dets,
                        const std::vector<GroundTruthBox>& gts, double iou_threshold);

// 101-point interpolated average precision over the pooled corpus.
// Throws if the corpus contains no ground truth.
double average_precision(const std::vector<FrameRecord>& frames, double iou_threshold);

// Mean AP over IoU thresholds 0.50:0.05:0.95.
double map_range(const std::vector<FrameRecord>& frames);

double recall_at(const std::vector<FrameRecord>& frames, double iou_threshold);

struct F1Point {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Exhaustive sweep over the confidence grid; ties resolve to the lowest
// threshold. Throws on an empty corpus.
F1Point f1_sweep(const std::vector<FrameRecord>& frames, double iou_threshold,
                 const std::vector<double>& confidence_grid);

// Ground-truth JSON lines: {frame_id, sequence_id, event_count, boxes:[[x1,y1,x2,y2],..]}
std::vector<FrameRecord> read_ground_truth_jsonl(const std::string& path);

// Merges detection JSON lines (detect-module format) into frames by frame_id.
void attach_detections_jsonl(std::vector<FrameRecord>& frames, const std::string& path);

// {map50, map5095, recall_table, f1_point} as a JSON document.
std::string metrics_json(const std::vector<FrameRecord>& frames);

} // namespace svd
