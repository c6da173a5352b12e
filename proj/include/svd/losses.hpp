#pragma once

#include <string>
#include <vector>

#include "svd/boxes.hpp"
#include "svd/model.hpp"

namespace svd {

struct LossWeights {
    double cls = 1.0;
    double reg = 2.0;
    double ctr = 1.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
};

struct Assignment {
    std::vector<char> positive;     // per position
    std::vector<int> gt_index;      // matched ground truth, -1 for negatives
    std::vector<double> ltrb;       // M x 4 distances, meaningful for positives
    std::vector<double> centerness; // in [0,1], meaningful for positives
};

// Inside-box rule: a position center strictly inside a ground-truth box is
// positive; ambiguous positions take the smallest-area box.
Assignment assign_targets(const std::vector<HeadPosition>& positions, int stride,
                          const std::vector<GroundTruthBox>& gts);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Binary focal loss over all positions, summed then divided by max(1, #pos).
LossGrad focal_loss(const std::vector<float>& cls_logits, const std::vector<char>& positive,
                    double alpha, double gamma);

// Mean over rows of 1 - GIoU; grad is per predicted box corner.
LossGrad giou_loss(const std::vector<Box>& pred, const std::vector<Box>& target);

// BCE against soft centerness targets, positives only.
LossGrad centerness_bce(const std::vector<float>& ctr_logits,
                        const std::vector<double>& ctr_targets,
                        const std::vector<char>& positive);

struct TotalLoss {
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double ctr = 0.0;
    std::vector<double> d_cls; // M, wrt cls logits
    std::vector<double> d_box; // M x 4, wrt raw (pre-exp) regression outputs
    std::vector<double> d_ctr; // M, wrt centerness logits
};

TotalLoss total_loss(const HeadOutputs& out, const Assignment& assignment,
                     const LossWeights& weights, int stride);

struct FitTraceRow {
    int step = 0;
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double ctr = 0.0;
};

// Gradient descent on head parameters over a frozen feature map; the loss is
// recorded before each update. Throws a numerical error if the loss leaves
// the reals.
std::vector<FitTraceRow> fit_head_demo(const SparseTensor3D& features,
                                       const std::vector<GroundTruthBox>& gts, HeadParams& params,
                                       const HeadConfig& config, const LossWeights& weights,
                                       int steps, double lr);

// CSV with header "step,total,cls,reg,ctr".
void write_loss_trace_csv(const std::vector<FitTraceRow>& trace, const std::string& path);

} // namespace svd
