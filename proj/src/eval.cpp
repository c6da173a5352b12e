#include "svd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "svd/errors.hpp"

namespace svd {

int64_t MatchResult::tp() const {
    return std::count(det_tp.begin(), det_tp.end(), char(1));
}
int64_t MatchResult::fp() const {
    return int64_t(det_tp.size()) - tp();
}
int64_t MatchResult::fn() const {
    return int64_t(gt_matched.size()) - std::count(gt_matched.begin(), gt_matched.end(), char(1));
}

MatchResult match_frame(const std::vector<Detection>& dets,
                        const std::vector<GroundTruthBox>& gts, double iou_threshold) {
    MatchResult r;
    r.det_tp.assign(dets.size(), 0);
    r.det_gt.assign(dets.size(), -1);
    r.det_iou.assign(dets.size(), 0.0);
    r.gt_matched.assign(gts.size(), 0);
    r.gt_best_iou.assign(gts.size(), 0.0);

    for (size_t g = 0; g < gts.size(); ++g)
        for (const auto& d : dets)
            r.gt_best_iou[g] = std::max(r.gt_best_iou[g], iou(d.box, gts[g].box));

    std::vector<size_t> order(dets.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
    for (size_t di : order) {
        double best = -1.0;
        int best_gt = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (r.gt_matched[g]) continue;
            const double v = iou(dets[di].box, gts[g].box);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_gt = int(g);
            }
        }
        if (best_gt >= 0) {
            r.det_tp[di] = 1;
            r.det_gt[di] = best_gt;
            r.det_iou[di] = best;
            r.gt_matched[size_t(best_gt)] = 1;
        }
    }
    return r;
}

double average_precision(const std::vector<FrameRecord>& frames, double iou_threshold) {
    struct Labeled {
        double score;
        bool tp;
    };
    std::vector<Labeled> pool;
    int64_t total_gt = 0;
    for (const auto& fr : frames) {
        total_gt += int64_t(fr.ground_truths.size());
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        for (size_t i = 0; i < fr.detections.size(); ++i)
            pool.push_back({fr.detections[i].score, m.det_tp[i] != 0});
    }
    if (total_gt == 0) throw ValidationError("AP undefined: corpus has no ground truths");

    std::stable_sort(pool.begin(), pool.end(),
                     [](const Labeled& a, const Labeled& b) { return a.score > b.score; });

    // sweep the ranked pool; tied scores enter together so PR points sit only
    // at distinct-score boundaries
    std::vector<std::pair<double, double>> pr; // (recall, precision)
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < pool.size();) {
        size_t j = i;
        while (j < pool.size() && pool[j].score == pool[i].score) {
            if (pool[j].tp) ++tp; else ++fp;
            ++j;
        }
        pr.emplace_back(double(tp) / double(total_gt), double(tp) / double(tp + fp));
        i = j;
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

double map_range(const std::vector<FrameRecord>& frames) {
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) sum += average_precision(frames, 0.50 + 0.05 * i);
    return sum / 10.0;
}

double recall_at(const std::vector<FrameRecord>& frames, double iou_threshold) {
    int64_t tp = 0, total_gt = 0;
    for (const auto& fr : frames) {
        MatchResult m = match_frame(fr.detections, fr.ground_truths, iou_threshold);
        tp += m.tp();
        total_gt += int64_t(fr.ground_truths.size());
    }
    if (total_gt == 0) throw ValidationError("recall undefined: corpus has no ground truths");
    return double(tp) / double(total_gt);
}

F1Point f1_sweep(const std::vector<FrameRecord>& frames, double iou_threshold,
                 const std::vector<double>& confidence_grid) {
    bool any = false;
    for (const auto& fr : frames)
        if (!fr.ground_truths.empty() || !fr.detections.empty()) any = true;
    if (frames.empty() || !any) throw ValidationError("F1 sweep on an empty corpus");

    F1Point best;
    best.threshold = confidence_grid.empty() ? 0.0 : confidence_grid.front();
    bool first = true;
    for (double thr : confidence_grid) {
        int64_t tp = 0, fp = 0, total_gt = 0;
        for (const auto& fr : frames) {
            std::vector<Detection> kept;
            for (const auto& d : fr.detections)
                if (d.score >= thr) kept.push_back(d);
            MatchResult m = match_frame(kept, fr.ground_truths, iou_threshold);
            tp += m.tp();
            fp += m.fp();
            total_gt += int64_t(fr.ground_truths.size());
        }
        const double prec = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
        const double rec = total_gt > 0 ? double(tp) / double(total_gt) : 0.0;
        const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        if (first || f1 > best.f1) {
            best = {thr, prec, rec, f1};
            first = false;
        }
    }
    return best;
}

std::vector<FrameRecord> read_ground_truth_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open ground truth file: " + path);
    std::vector<FrameRecord> frames;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        FrameRecord fr;
        fr.frame_id = j.at("frame_id").get<int64_t>();
        fr.sequence_id = j.value("sequence_id", int64_t(0));
        fr.event_count = j.value("event_count", int64_t(0));
        for (const auto& b : j.at("boxes")) {
            if (b.size() != 4)
                throw ParseError(path + ":" + std::to_string(lineno) + ": box needs 4 numbers");
            GroundTruthBox gt;
            gt.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                      b[3].get<double>()};
            gt.sequence_id = fr.sequence_id;
            gt.frame_id = fr.frame_id;
            fr.ground_truths.push_back(gt);
        }
        frames.push_back(std::move(fr));
    }
    return frames;
}

void attach_detections_jsonl(std::vector<FrameRecord>& frames, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open detections file: " + path);
    std::map<int64_t, FrameRecord*> by_id;
    for (auto& fr : frames) by_id[fr.frame_id] = &fr;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        const int64_t fid = j.at("frame_id").get<int64_t>();
        auto it = by_id.find(fid);
        if (it == by_id.end())
            throw ValidationError("detections reference unknown frame " + std::to_string(fid));
        for (const auto& d : j.at("detections")) {
            Detection det;
            const auto& b = d.at("box");
            det.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                       b[3].get<double>()};
            det.score = d.at("score").get<double>();
            it->second->detections.push_back(det);
        }
    }
}

std::string metrics_json(const std::vector<FrameRecord>& frames) {
    nlohmann::json j;
    j["map50"] = average_precision(frames, 0.5);
    j["map5095"] = map_range(frames);
    nlohmann::json recall_table = nlohmann::json::object();
    for (int i = 0; i <= 6; ++i) {
        const double thr = 0.30 + 0.05 * i;
        char key[8];
        std::snprintf(key, sizeof(key), "%.2f", thr);
        recall_table[key] = recall_at(frames, thr);
    }
    j["recall_table"] = recall_table;
    std::vector<double> grid;
    for (int i = 0; i <= 190; ++i) grid.push_back(0.05 + 0.005 * i);
    F1Point p = f1_sweep(frames, 0.5, grid);
    j["f1_point"] = {{"threshold", p.threshold},
                     {"precision", p.precision},
                     {"recall", p.recall},
                     {"f1", p.f1}};
    return j.dump(2);
}

} // namespace svd
