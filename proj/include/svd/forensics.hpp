#pragma once

#include <array>
#include <string>
#include <vector>

#include "svd/boxes.hpp"

namespace svd {

struct FnBreakdown {
    int64_t total = 0;
    int64_t near_miss = 0;     // best overlap in (0, 0.5)
    int64_t complete_miss = 0; // best overlap exactly 0
    std::array<int64_t, 5> iou_histogram{}; // [0,0.1) ... [0.4,0.5)
};

struct ConfidenceStats {
    bool present = false; // false when there are no samples (instead of NaNs)
    int64_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::array<double, 20> histogram{}; // over [0,1], normalized to unit peak
};

struct FpClasses {
    int64_t duplicate = 0;  // overlaps an already-matched GT at >= dup_iou
    int64_t background = 0; // zero overlap with every GT
    int64_t other = 0;
    int64_t total() const { return duplicate + background + other; }
};

struct BinRecall {
    std::string label;
    int64_t gts = 0;
    int64_t matched = 0;
    double recall = 0.0;
};

struct SequenceStat {
    int64_t sequence_id = 0;
    int64_t gts = 0;
    int64_t matched = 0;
    double recall = 0.0;
};

struct IouSensitivityRow {
    double threshold = 0.0;
    double recall = 0.0;
    double map = 0.0;
    double recall_delta_vs_50 = 0.0;
    double map_delta_vs_50 = 0.0;
};

struct ForensicsReport {
    FnBreakdown fn;
    ConfidenceStats tp_confidence;
    ConfidenceStats fp_confidence;
    double median_tp_iou = 0.0;
    FpClasses fp_classes;
    std::vector<IouSensitivityRow> iou_sensitivity;
    std::vector<BinRecall> recall_by_density;
    std::vector<BinRecall> recall_by_size;
    std::vector<SequenceStat> per_sequence;
};

FnBreakdown decompose_fn(const std::vector<FrameRecord>& frames, double iou_threshold = 0.5);

// TP/FP score statistics plus the median IoU of true positives.
void confidence_stats(const std::vector<FrameRecord>& frames, ConfidenceStats& tp,
                      ConfidenceStats& fp, double& median_tp_iou, double iou_threshold = 0.5);

FpClasses classify_fp(const std::vector<FrameRecord>& frames, double dup_iou = 0.5,
                      double iou_threshold = 0.5);

// Recall per event-count bin; bins without ground truth are omitted.
std::vector<BinRecall> recall_by_density(const std::vector<FrameRecord>& frames,
                                         const std::vector<int64_t>& edges = {0, 2000, 5000,
                                                                              10000, 20000,
                                                                              50000},
                                         double iou_threshold = 0.5);

// Recall per sqrt(GT area) bin: <20, 20-50, >50 pixels.
std::vector<BinRecall> recall_by_size(const std::vector<FrameRecord>& frames,
                                      double iou_threshold = 0.5);

// Per-sequence recall, ascending (worst sequences first).
std::vector<SequenceStat> per_sequence_recall(const std::vector<FrameRecord>& frames,
                                              double iou_threshold = 0.5);

// Recall and mAP across thresholds with deltas against the 0.50 row.
std::vector<IouSensitivityRow> iou_sensitivity(const std::vector<FrameRecord>& frames,
                                               const std::vector<double>& thresholds = {
                                                   0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60});

ForensicsReport analyze(const std::vector<FrameRecord>& frames);

std::string report_json(const ForensicsReport& report);
std::string report_markdown(const ForensicsReport& report);

} // namespace svd
