#include "svd/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "svd/errors.hpp"

namespace svd {

std::vector<Box> decode_ltrb(const std::vector<HeadPosition>& positions,
                             const std::vector<float>& box_raw, int stride) {
    if (box_raw.size() != positions.size() * 4)
        throw ShapeError("box regression rows do not match positions");
    std::vector<Box> boxes(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        const double cx = double(positions[i].x) * stride + stride / 2.0;
        const double cy = double(positions[i].y) * stride + stride / 2.0;
        const double l = std::exp(double(box_raw[i * 4 + 0]));
        const double t = std::exp(double(box_raw[i * 4 + 1]));
        const double r = std::exp(double(box_raw[i * 4 + 2]));
        const double b = std::exp(double(box_raw[i * 4 + 3]));
        boxes[i] = {cx - l, cy - t, cx + r, cy + b};
    }
    return boxes;
}

std::vector<double> fuse_scores(const std::vector<float>& cls_logit,
                                const std::vector<float>& ctr_logit) {
    if (cls_logit.size() != ctr_logit.size())
        throw ShapeError("classification and centerness logits differ in length");
    std::vector<double> scores(cls_logit.size());
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (size_t i = 0; i < scores.size(); ++i)
        scores[i] = sigmoid(cls_logit[i]) * sigmoid(ctr_logit[i]);
    return scores;
}

std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold,
                           int max_out) {
    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return detections[a].score > detections[b].score;
    });
    std::vector<Detection> kept;
    for (size_t idx : order) {
        if (int(kept.size()) >= max_out) break;
        bool suppressed = false;
        for (const auto& k : kept) {
            if (iou(k.box, detections[idx].box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(detections[idx]);
    }
    return kept;
}

std::vector<Detection> infer_frame(const SparseTensor3D& x, const ModelParams& params,
                                   const InferenceConfig& config) {
    HeadOutputs out = full_forward(x, params);
    std::vector<double> scores = fuse_scores(out.cls_logit, out.ctr_logit);
    std::vector<Box> boxes = decode_ltrb(out.positions, out.box_raw, config.stride);
    std::vector<Detection> candidates;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > config.score_threshold)
            candidates.push_back({boxes[i], scores[i], 0});
    }
    return nms(candidates, config.nms_iou, config.max_detections);
}

std::string detections_to_json_line(int64_t frame_id, const std::vector<Detection>& detections) {
    std::string line = "{\"frame_id\":" + std::to_string(frame_id) + ",\"detections\":[";
    char buf[160];
    for (size_t i = 0; i < detections.size(); ++i) {
        const auto& d = detections[i];
        std::snprintf(buf, sizeof(buf),
                      "%s{\"box\":[%.4f,%.4f,%.4f,%.4f],\"score\":%.4f}", i ? "," : "",
                      d.box[0], d.box[1], d.box[2], d.box[3], d.score);
        line += buf;
    }
    line += "]}";
    return line;
}

} // namespace svd
