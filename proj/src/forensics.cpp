#include "svd/forensics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"
#include "svd/errors.hpp"
#include "svd/eval.hpp"

namespace svd {

FnBreakdown decompose_fn(const std::vector<FrameRecord>& frames, double iou_threshold) {
    FnBreakdown b;
    for (const auto& fr : frames) {
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        for (size_t g = 0; g < fr.ground_truths.size(); ++g) {
            if (m.gt_matched[g]) continue;
            b.total++;
            const double best = m.gt_best_iou[g];
            if (best > 0.0)
                b.near_miss++;
            else
                b.complete_miss++;
            const int bin = std::min(4, int(best * 10.0));
            b.iou_histogram[size_t(bin)]++;
        }
    }
    return b;
}

namespace {

ConfidenceStats stats_of(const std::vector<double>& samples) {
    ConfidenceStats s;
    s.count = int64_t(samples.size());
    if (samples.empty()) return s;
    s.present = true;
    double sum = 0;
    for (double v : samples) sum += v;
    s.mean = sum / double(samples.size());
    double var = 0;
    for (double v : samples) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / double(samples.size()));
    std::array<int64_t, 20> counts{};
    for (double v : samples) {
        int bin = int(v * 20.0);
        bin = std::clamp(bin, 0, 19); // final bin closed at 1.0
        counts[size_t(bin)]++;
    }
    const int64_t peak = *std::max_element(counts.begin(), counts.end());
    for (size_t i = 0; i < counts.size(); ++i)
        s.histogram[i] = peak > 0 ? double(counts[i]) / double(peak) : 0.0;
    return s;
}

} // namespace

void confidence_stats(const std::vector<FrameRecord>& frames, ConfidenceStats& tp,
                      ConfidenceStats& fp, double& median_tp_iou, double iou_threshold) {
    std::vector<double> tp_scores, fp_scores, tp_ious;
    for (const auto& fr : frames) {
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        for (size_t i = 0; i < fr.detections.size(); ++i) {
            if (m.det_tp[i]) {
                tp_scores.push_back(fr.detections[i].score);
                tp_ious.push_back(m.det_iou[i]);
            } else {
                fp_scores.push_back(fr.detections[i].score);
            }
        }
    }
    tp = stats_of(tp_scores);
    fp = stats_of(fp_scores);
    median_tp_iou = 0.0;
    if (!tp_ious.empty()) {
        std::sort(tp_ious.begin(), tp_ious.end());
        const size_t n = tp_ious.size();
        median_tp_iou = n % 2 ? tp_ious[n / 2] : 0.5 * (tp_ious[n / 2 - 1] + tp_ious[n / 2]);
    }
}

FpClasses classify_fp(const std::vector<FrameRecord>& frames, double dup_iou,
                      double iou_threshold) {
    FpClasses c;
    for (const auto& fr : frames) {
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        for (size_t i = 0; i < fr.detections.size(); ++i) {
            if (m.det_tp[i]) continue;
            double best = 0.0;
            bool dup = false;
            for (size_t g = 0; g < fr.ground_truths.size(); ++g) {
                const double v = iou(fr.detections[i].box, fr.ground_truths[g].box);
                best = std::max(best, v);
                if (v >= dup_iou && m.gt_matched[g]) dup = true;
            }
            if (dup)
                c.duplicate++;
            else if (best == 0.0)
                c.background++;
            else
                c.other++;
        }
    }
    return c;
}

namespace {

BinRecall finish_bin(std::string label, int64_t gts, int64_t matched) {
    BinRecall b;
    b.label = std::move(label);
    b.gts = gts;
    b.matched = matched;
    b.recall = gts > 0 ? double(matched) / double(gts) : 0.0;
    return b;
}

} // namespace

std::vector<BinRecall> recall_by_density(const std::vector<FrameRecord>& frames,
                                         const std::vector<int64_t>& edges,
                                         double iou_threshold) {
    const size_t n_bins = edges.size(); // last bin is [edges.back(), inf)
    std::vector<int64_t> gts(n_bins, 0), matched(n_bins, 0);
    for (const auto& fr : frames) {
        size_t bin = 0;
        for (size_t i = 0; i < edges.size(); ++i)
            if (fr.event_count >= edges[i]) bin = i;
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        gts[bin] += int64_t(fr.ground_truths.size());
        matched[bin] += m.tp();
    }
    std::vector<BinRecall> out;
    for (size_t i = 0; i < n_bins; ++i) {
        if (gts[i] == 0) continue;
        const std::string hi = i + 1 < n_bins ? std::to_string(edges[i + 1]) : "inf";
        out.push_back(finish_bin("[" + std::to_string(edges[i]) + "," + hi + ")", gts[i],
                                 matched[i]));
    }
    return out;
}

std::vector<BinRecall> recall_by_size(const std::vector<FrameRecord>& frames,
                                      double iou_threshold) {
    std::array<int64_t, 3> gts{}, matched{};
    const std::array<std::string, 3> labels{"<20", "20-50", ">50"};
    for (const auto& fr : frames) {
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        for (size_t g = 0; g < fr.ground_truths.size(); ++g) {
            const double side = std::sqrt(box_area(fr.ground_truths[g].box));
            const size_t bin = side < 20.0 ? 0 : (side <= 50.0 ? 1 : 2);
            gts[bin]++;
            if (m.gt_matched[g]) matched[bin]++;
        }
    }
    std::vector<BinRecall> out;
    for (size_t i = 0; i < 3; ++i)
        if (gts[i] > 0) out.push_back(finish_bin(labels[i], gts[i], matched[i]));
    return out;
}

std::vector<SequenceStat> per_sequence_recall(const std::vector<FrameRecord>& frames,
                                              double iou_threshold) {
    std::map<int64_t, std::pair<int64_t, int64_t>> acc; // seq -> (gts, matched)
    for (const auto& fr : frames) {
        if (fr.ground_truths.empty()) continue;
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        auto& slot = acc[fr.sequence_id];
        slot.first += int64_t(fr.ground_truths.size());
        slot.second += m.tp();
    }
    std::vector<SequenceStat> out;
    for (const auto& [seq, counts] : acc) {
        SequenceStat s;
        s.sequence_id = seq;
        s.gts = counts.first;
        s.matched = counts.second;
        s.recall = double(counts.second) / double(counts.first);
        out.push_back(s);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SequenceStat& a, const SequenceStat& b) {
                         return a.recall < b.recall;
                     });
    return out;
}

std::vector<IouSensitivityRow> iou_sensitivity(const std::vector<FrameRecord>& frames,
                                               const std::vector<double>& thresholds) {
    std::vector<IouSensitivityRow> rows;
    for (double thr : thresholds) {
        IouSensitivityRow r;
        r.threshold = thr;
        r.recall = recall_at(frames, thr);
        r.map = average_precision(frames, thr);
        rows.push_back(r);
    }
    const double rec50 = recall_at(frames, 0.50);
    const double map50 = average_precision(frames, 0.50);
    for (auto& r : rows) {
        r.recall_delta_vs_50 = r.recall - rec50;
        r.map_delta_vs_50 = r.map - map50;
    }
    return rows;
}

ForensicsReport analyze(const std::vector<FrameRecord>& frames) {
    ForensicsReport rep;
    rep.fn = decompose_fn(frames);
    confidence_stats(frames, rep.tp_confidence, rep.fp_confidence, rep.median_tp_iou);
    rep.fp_classes = classify_fp(frames);
    int64_t total_gt = 0;
    for (const auto& fr : frames) total_gt += int64_t(fr.ground_truths.size());
    if (total_gt > 0) rep.iou_sensitivity = iou_sensitivity(frames);
    rep.recall_by_density = recall_by_density(frames);
    rep.recall_by_size = recall_by_size(frames);
    rep.per_sequence = per_sequence_recall(frames);
    return rep;
}

namespace {

nlohmann::json stats_json(const ConfidenceStats& s) {
    nlohmann::json j;
    j["present"] = s.present;
    j["count"] = s.count;
    if (s.present) {
        j["mean"] = s.mean;
        j["stddev"] = s.stddev;
        j["histogram"] = s.histogram;
    }
    return j;
}

nlohmann::json bins_json(const std::vector<BinRecall>& bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : bins)
        arr.push_back({{"bin", b.label}, {"gts", b.gts}, {"matched", b.matched},
                       {"recall", b.recall}});
    return arr;
}

} // namespace

std::string report_json(const ForensicsReport& r) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["fn"] = {{"total", r.fn.total},
               {"near_miss", r.fn.near_miss},
               {"complete_miss", r.fn.complete_miss},
               {"iou_histogram", r.fn.iou_histogram}};
    j["tp_confidence"] = stats_json(r.tp_confidence);
    j["fp_confidence"] = stats_json(r.fp_confidence);
    j["median_tp_iou"] = r.median_tp_iou;
    j["fp_classes"] = {{"duplicate", r.fp_classes.duplicate},
                       {"background", r.fp_classes.background},
                       {"other", r.fp_classes.other}};
    nlohmann::json sens = nlohmann::json::array();
    for (const auto& row : r.iou_sensitivity)
        sens.push_back({{"threshold", row.threshold},
                        {"recall", row.recall},
                        {"map", row.map},
                        {"recall_delta_vs_50", row.recall_delta_vs_50},
                        {"map_delta_vs_50", row.map_delta_vs_50}});
    j["iou_sensitivity"] = sens;
    j["recall_by_density"] = bins_json(r.recall_by_density);
    j["recall_by_size"] = bins_json(r.recall_by_size);
    nlohmann::json seqs = nlohmann::json::array();
    for (const auto& s : r.per_sequence)
        seqs.push_back({{"sequence_id", s.sequence_id}, {"gts", s.gts}, {"matched", s.matched},
                        {"recall", s.recall}});
    j["per_sequence"] = seqs;
    return j.dump(2);
}

std::string report_markdown(const ForensicsReport& r) {
    std::string md;
    char buf[256];
    md += "# Detection error forensics\n\n";
    md += "## False negatives\n\n";
    std::snprintf(buf, sizeof(buf), "- total: %lld\n- near misses (0 < IoU < 0.5): %lld\n"
                                    "- complete misses (IoU = 0): %lld\n\n",
                  (long long)r.fn.total, (long long)r.fn.near_miss,
                  (long long)r.fn.complete_miss);
    md += buf;
    md += "| best IoU bin | count |\n|---|---|\n";
    const char* bins[5] = {"[0.0,0.1)", "[0.1,0.2)", "[0.2,0.3)", "[0.3,0.4)", "[0.4,0.5)"};
    for (size_t i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof(buf), "| %s | %lld |\n", bins[i],
                      (long long)r.fn.iou_histogram[i]);
        md += buf;
    }
    md += "\n## Confidence separation\n\n";
    if (r.tp_confidence.present)
        std::snprintf(buf, sizeof(buf), "- mean TP confidence: %.4f (std %.4f, n=%lld)\n",
                      r.tp_confidence.mean, r.tp_confidence.stddev,
                      (long long)r.tp_confidence.count);
    else
        std::snprintf(buf, sizeof(buf), "- no true positives\n");
    md += buf;
    if (r.fp_confidence.present)
        std::snprintf(buf, sizeof(buf), "- mean FP confidence: %.4f (std %.4f, n=%lld)\n",
                      r.fp_confidence.mean, r.fp_confidence.stddev,
                      (long long)r.fp_confidence.count);
    else
        std::snprintf(buf, sizeof(buf), "- no false positives\n");
    md += buf;
    std::snprintf(buf, sizeof(buf), "- median TP IoU: %.4f\n", r.median_tp_iou);
    md += buf;
    md += "\n## False-positive classes\n\n| class | count |\n|---|---|\n";
    std::snprintf(buf, sizeof(buf), "| duplicate | %lld |\n| background | %lld |\n"
                                    "| other | %lld |\n",
                  (long long)r.fp_classes.duplicate, (long long)r.fp_classes.background,
                  (long long)r.fp_classes.other);
    md += buf;
    md += "\n## IoU sensitivity\n\n| IoU | recall | d vs 0.50 | mAP | d vs 0.50 |\n"
          "|---|---|---|---|---|\n";
    for (const auto& row : r.iou_sensitivity) {
        std::snprintf(buf, sizeof(buf), "| %.2f | %.4f | %+.4f | %.4f | %+.4f |\n",
                      row.threshold, row.recall, row.recall_delta_vs_50, row.map,
                      row.map_delta_vs_50);
        md += buf;
    }
    auto bin_table = [&](const char* title, const std::vector<BinRecall>& rows) {
        md += std::string("\n## ") + title + "\n\n| bin | GTs | matched | recall |\n"
              "|---|---|---|---|\n";
        for (const auto& b : rows) {
            std::snprintf(buf, sizeof(buf), "| %s | %lld | %lld | %.4f |\n", b.label.c_str(),
                          (long long)b.gts, (long long)b.matched, b.recall);
            md += buf;
        }
    };
    bin_table("Recall by event density", r.recall_by_density);
    bin_table("Recall by object size", r.recall_by_size);
    md += "\n## Per-sequence recall (ascending)\n\n| sequence | GTs | matched | recall |\n"
          "|---|---|---|---|\n";
    for (const auto& s : r.per_sequence) {
        std::snprintf(buf, sizeof(buf), "| %lld | %lld | %lld | %.4f |\n",
                      (long long)s.sequence_id, (long long)s.gts, (long long)s.matched,
                      s.recall);
        md += buf;
    }
    return md;
}

} // namespace svd
