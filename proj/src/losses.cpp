#include "svd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "svd/detect.hpp"
#include "svd/errors.hpp"

namespace svd {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
// log sigmoid(z) and log(1 - sigmoid(z)), stable for large |z|
double log_sig(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double log_one_minus_sig(double z) { return log_sig(-z); }

} // namespace

Assignment assign_targets(const std::vector<HeadPosition>& positions, int stride,
                          const std::vector<GroundTruthBox>& gts) {
    const size_t m = positions.size();
    Assignment a;
    a.positive.assign(m, 0);
    a.gt_index.assign(m, -1);
    a.ltrb.assign(m * 4, 0.0);
    a.centerness.assign(m, 0.0);
    for (size_t i = 0; i < m; ++i) {
        const double cx = double(positions[i].x) * stride + stride / 2.0;
        const double cy = double(positions[i].y) * stride + stride / 2.0;
        int best = -1;
        double best_area = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            const Box& b = gts[g].box;
            if (cx <= b[0] || cx >= b[2] || cy <= b[1] || cy >= b[3]) continue;
            const double area = box_area(b);
            if (best < 0 || area < best_area) {
                best = int(g);
                best_area = area;
            }
        }
        if (best < 0) continue;
        const Box& b = gts[size_t(best)].box;
        const double l = cx - b[0], t = cy - b[1], r = b[2] - cx, bt = b[3] - cy;
        a.positive[i] = 1;
        a.gt_index[i] = best;
        a.ltrb[i * 4 + 0] = l;
        a.ltrb[i * 4 + 1] = t;
        a.ltrb[i * 4 + 2] = r;
        a.ltrb[i * 4 + 3] = bt;
        a.centerness[i] = std::sqrt((std::min(l, r) / std::max(l, r)) *
                                    (std::min(t, bt) / std::max(t, bt)));
    }
    return a;
}

LossGrad focal_loss(const std::vector<float>& cls_logits, const std::vector<char>& positive,
                    double alpha, double gamma) {
    if (cls_logits.size() != positive.size())
        throw ShapeError("focal loss logits and flags differ in length");
    int64_t n_pos = 0;
    for (char p : positive) n_pos += p ? 1 : 0;
    const double denom = double(std::max<int64_t>(1, n_pos));

    LossGrad out;
    out.grad.assign(cls_logits.size(), 0.0);
    for (size_t i = 0; i < cls_logits.size(); ++i) {
        const double z = cls_logits[i];
        const double p = sigmoid(z);
        // p_t is the probability of the true class; d p_t/dz = s * p(1-p)
        const double pt = positive[i] ? p : 1.0 - p;
        const double log_pt = positive[i] ? log_sig(z) : log_one_minus_sig(z);
        const double sgn = positive[i] ? 1.0 : -1.0;
        const double term = -alpha * std::pow(1.0 - pt, gamma) * log_pt;
        // d term / d pt
        const double dterm_dpt = -alpha * (-gamma * std::pow(1.0 - pt, gamma - 1.0) * log_pt +
                                           std::pow(1.0 - pt, gamma) / pt);
        out.loss += term;
        out.grad[i] = dterm_dpt * sgn * p * (1.0 - p) / denom;
    }
    out.loss /= denom;
    return out;
}

LossGrad giou_loss(const std::vector<Box>& pred, const std::vector<Box>& target) {
    if (pred.size() != target.size())
        throw ShapeError("GIoU loss box lists differ in length");
    LossGrad out;
    out.grad.assign(pred.size() * 4, 0.0);
    if (pred.empty()) return out;
    const double n = double(pred.size());

    for (size_t i = 0; i < pred.size(); ++i) {
        const Box& p = pred[i];
        const Box& t = target[i];
        const double ap = box_area(p);
        const double at = box_area(t);
        // derivative of the predicted area wrt its four corners
        double dap[4] = {-(p[3] - p[1]), -(p[2] - p[0]), p[3] - p[1], p[2] - p[0]};
        if (ap <= 0.0) dap[0] = dap[1] = dap[2] = dap[3] = 0.0;

        const double iw = std::min(p[2], t[2]) - std::max(p[0], t[0]);
        const double ih = std::min(p[3], t[3]) - std::max(p[1], t[1]);
        const bool overlap = iw > 0.0 && ih > 0.0 && ap > 0.0;
        const double inter = overlap ? iw * ih : 0.0;
        double dinter[4] = {0, 0, 0, 0};
        if (overlap) {
            if (p[0] > t[0]) dinter[0] = -ih;
            if (p[1] > t[1]) dinter[1] = -iw;
            if (p[2] < t[2]) dinter[2] = ih;
            if (p[3] < t[3]) dinter[3] = iw;
        }

        const double uni = ap + at - inter;
        const double iou_v = uni > 0.0 ? inter / uni : 0.0;
        const double ew = std::max(p[2], t[2]) - std::min(p[0], t[0]);
        const double eh = std::max(p[3], t[3]) - std::min(p[1], t[1]);
        const double enc = ew * eh;
        double denc[4] = {0, 0, 0, 0};
        if (p[0] < t[0]) denc[0] = -eh;
        if (p[1] < t[1]) denc[1] = -ew;
        if (p[2] > t[2]) denc[2] = eh;
        if (p[3] > t[3]) denc[3] = ew;

        const double penalty = enc > 0.0 ? (enc - uni) / enc : 0.0;
        out.loss += 1.0 - (iou_v - penalty);
        for (int k = 0; k < 4; ++k) {
            const double duni = dap[k] - dinter[k];
            double diou = 0.0;
            if (uni > 0.0) diou = (dinter[k] * uni - inter * duni) / (uni * uni);
            double dpen = 0.0;
            if (enc > 0.0) dpen = -(duni * enc - uni * denc[k]) / (enc * enc);
            out.grad[i * 4 + size_t(k)] = -(diou - dpen) / n;
        }
    }
    out.loss /= n;
    return out;
}

LossGrad centerness_bce(const std::vector<float>& ctr_logits,
                        const std::vector<double>& ctr_targets,
                        const std::vector<char>& positive) {
    if (ctr_logits.size() != ctr_targets.size() || ctr_logits.size() != positive.size())
        throw ShapeError("centerness loss input lengths differ");
    LossGrad out;
    out.grad.assign(ctr_logits.size(), 0.0);
    int64_t n_pos = 0;
    for (char p : positive) n_pos += p ? 1 : 0;
    if (n_pos == 0) return out;
    const double n = double(n_pos);
    for (size_t i = 0; i < ctr_logits.size(); ++i) {
        if (!positive[i]) continue;
        const double z = ctr_logits[i];
        const double tgt = ctr_targets[i];
        out.loss += -(tgt * log_sig(z) + (1.0 - tgt) * log_one_minus_sig(z));
        out.grad[i] = (sigmoid(z) - tgt) / n;
    }
    out.loss /= n;
    return out;
}

TotalLoss total_loss(const HeadOutputs& out, const Assignment& assignment,
                     const LossWeights& weights, int stride) {
    const size_t m = out.positions.size();
    if (assignment.positive.size() != m)
        throw ShapeError("assignment does not cover the head positions");

    TotalLoss r;
    r.d_cls.assign(m, 0.0);
    r.d_box.assign(m * 4, 0.0);
    r.d_ctr.assign(m, 0.0);

    LossGrad cls = focal_loss(out.cls_logit, assignment.positive, weights.focal_alpha,
                              weights.focal_gamma);
    r.cls = cls.loss;
    for (size_t i = 0; i < m; ++i) r.d_cls[i] = weights.cls * cls.grad[i];

    // regression acts on decoded boxes for positive rows only
    std::vector<size_t> pos_rows;
    for (size_t i = 0; i < m; ++i)
        if (assignment.positive[i]) pos_rows.push_back(i);
    if (!pos_rows.empty()) {
        std::vector<HeadPosition> pos;
        std::vector<float> raw;
        std::vector<Box> targets;
        for (size_t i : pos_rows) {
            pos.push_back(out.positions[i]);
            for (int k = 0; k < 4; ++k) raw.push_back(out.box_raw[i * 4 + size_t(k)]);
            const double cx = double(out.positions[i].x) * stride + stride / 2.0;
            const double cy = double(out.positions[i].y) * stride + stride / 2.0;
            const double* d = &assignment.ltrb[i * 4];
            targets.push_back({cx - d[0], cy - d[1], cx + d[2], cy + d[3]});
        }
        std::vector<Box> decoded = decode_ltrb(pos, raw, stride);
        LossGrad reg = giou_loss(decoded, targets);
        r.reg = reg.loss;
        for (size_t j = 0; j < pos_rows.size(); ++j) {
            const size_t i = pos_rows[j];
            // chain through the exp decode: x1 = cx - e^r0, ..., y2 = cy + e^r3
            const double sign[4] = {-1.0, -1.0, 1.0, 1.0};
            for (int k = 0; k < 4; ++k) {
                const double dist = std::exp(double(out.box_raw[i * 4 + size_t(k)]));
                r.d_box[i * 4 + size_t(k)] =
                    weights.reg * reg.grad[j * 4 + size_t(k)] * sign[k] * dist;
            }
        }
    }

    LossGrad ctr = centerness_bce(out.ctr_logit, assignment.centerness, assignment.positive);
    r.ctr = ctr.loss;
    for (size_t i = 0; i < m; ++i) r.d_ctr[i] = weights.ctr * ctr.grad[i];

    r.total = weights.cls * r.cls + weights.reg * r.reg + weights.ctr * r.ctr;
    return r;
}

namespace {

// dy is rows x out; accumulates parameter grads and returns dx (rows x in).
std::vector<double> linear_backward(const LinearParams& p, const std::vector<float>& input,
                                    const std::vector<double>& dy, int64_t rows,
                                    std::vector<double>& dw, std::vector<double>& db) {
    std::vector<double> dx(size_t(rows) * size_t(p.in_dim), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = input.data() + r * p.in_dim;
        const double* g = dy.data() + r * p.out_dim;
        for (int o = 0; o < p.out_dim; ++o) {
            db[size_t(o)] += g[o];
            for (int i = 0; i < p.in_dim; ++i) {
                dw[size_t(i) * size_t(p.out_dim) + size_t(o)] += double(x[i]) * g[o];
                dx[size_t(r) * size_t(p.in_dim) + size_t(i)] +=
                    double(p.weight[size_t(i) * size_t(p.out_dim) + size_t(o)]) * g[o];
            }
        }
    }
    return dx;
}

std::vector<double> groupnorm_backward(const GroupNormParams& p, const std::vector<float>& input,
                                       const std::vector<double>& dy, int64_t rows,
                                       std::vector<double>& dgain, std::vector<double>& dbias,
                                       float eps = 1e-5f) {
    const int c = int(p.gain.size());
    const int gs = c / p.groups;
    std::vector<double> dx(input.size(), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = input.data() + r * c;
        const double* g = dy.data() + r * c;
        for (int grp = 0; grp < p.groups; ++grp) {
            double mean = 0;
            for (int i = 0; i < gs; ++i) mean += x[grp * gs + i];
            mean /= gs;
            double var = 0;
            for (int i = 0; i < gs; ++i) {
                const double d = x[grp * gs + i] - mean;
                var += d * d;
            }
            var /= gs;
            const double inv = 1.0 / std::sqrt(var + double(eps));
            double sum_dxh = 0, sum_dxh_xh = 0;
            std::vector<double> xh(static_cast<size_t>(gs), 0.0);
            std::vector<double> dxh(static_cast<size_t>(gs), 0.0);
            for (int i = 0; i < gs; ++i) {
                const int ch = grp * gs + i;
                xh[size_t(i)] = (x[ch] - mean) * inv;
                dgain[size_t(ch)] += g[ch] * xh[size_t(i)];
                dbias[size_t(ch)] += g[ch];
                dxh[size_t(i)] = g[ch] * double(p.gain[size_t(ch)]);
                sum_dxh += dxh[size_t(i)];
                sum_dxh_xh += dxh[size_t(i)] * xh[size_t(i)];
            }
            for (int i = 0; i < gs; ++i) {
                const int ch = grp * gs + i;
                dx[size_t(r) * size_t(c) + size_t(ch)] =
                    inv * (dxh[size_t(i)] - sum_dxh / gs - xh[size_t(i)] * sum_dxh_xh / gs);
            }
        }
    }
    return dx;
}

void relu_backward_inplace(std::vector<double>& dy, const std::vector<float>& pre) {
    for (size_t i = 0; i < dy.size(); ++i)
        if (pre[i] <= 0.0f) dy[i] = 0.0;
}

struct HeadGrads {
    std::vector<double> t1_w, t1_b, gn1_g, gn1_b;
    std::vector<double> t2_w, t2_b, gn2_g, gn2_b;
    std::vector<double> cls_w, cls_b, box_w, box_b, ctr_w, ctr_b;
};

HeadGrads head_backward(const HeadParams& p, const HeadTrace& trace, const TotalLoss& loss,
                        int64_t rows) {
    HeadGrads g;
    g.t1_w.assign(p.trunk1.weight.size(), 0.0);
    g.t1_b.assign(p.trunk1.bias.size(), 0.0);
    g.gn1_g.assign(p.gn1.gain.size(), 0.0);
    g.gn1_b.assign(p.gn1.bias.size(), 0.0);
    g.t2_w.assign(p.trunk2.weight.size(), 0.0);
    g.t2_b.assign(p.trunk2.bias.size(), 0.0);
    g.gn2_g.assign(p.gn2.gain.size(), 0.0);
    g.gn2_b.assign(p.gn2.bias.size(), 0.0);
    g.cls_w.assign(p.cls.weight.size(), 0.0);
    g.cls_b.assign(p.cls.bias.size(), 0.0);
    g.box_w.assign(p.box.weight.size(), 0.0);
    g.box_b.assign(p.box.bias.size(), 0.0);
    g.ctr_w.assign(p.ctr.weight.size(), 0.0);
    g.ctr_b.assign(p.ctr.bias.size(), 0.0);

    std::vector<double> d_act2 = linear_backward(p.cls, trace.act2, loss.d_cls, rows, g.cls_w,
                                                 g.cls_b);
    {
        std::vector<double> d2 =
            linear_backward(p.box, trace.act2, loss.d_box, rows, g.box_w, g.box_b);
        std::vector<double> d3 =
            linear_backward(p.ctr, trace.act2, loss.d_ctr, rows, g.ctr_w, g.ctr_b);
        for (size_t i = 0; i < d_act2.size(); ++i) d_act2[i] += d2[i] + d3[i];
    }
    relu_backward_inplace(d_act2, trace.norm2);
    std::vector<double> d_lin2 =
        groupnorm_backward(p.gn2, trace.lin2, d_act2, rows, g.gn2_g, g.gn2_b);
    std::vector<double> d_act1 =
        linear_backward(p.trunk2, trace.act1, d_lin2, rows, g.t2_w, g.t2_b);
    relu_backward_inplace(d_act1, trace.norm1);
    std::vector<double> d_lin1 =
        groupnorm_backward(p.gn1, trace.lin1, d_act1, rows, g.gn1_g, g.gn1_b);
    linear_backward(p.trunk1, trace.input, d_lin1, rows, g.t1_w, g.t1_b);
    return g;
}

void sgd_step(std::vector<float>& w, const std::vector<double>& g, double lr) {
    for (size_t i = 0; i < w.size(); ++i) w[i] = float(double(w[i]) - lr * g[i]);
}

} // namespace

std::vector<FitTraceRow> fit_head_demo(const SparseTensor3D& features,
                                       const std::vector<GroundTruthBox>& gts, HeadParams& params,
                                       const HeadConfig& config, const LossWeights& weights,
                                       int steps, double lr) {
    std::vector<FitTraceRow> rows;
    rows.reserve(size_t(steps));
    Assignment assignment;
    bool assigned = false;
    for (int s = 0; s < steps; ++s) {
        HeadTrace trace;
        HeadOutputs out = head_forward(features, params, config, &trace);
        if (!assigned) {
            assignment = assign_targets(out.positions, config.stride, gts);
            assigned = true;
        }
        TotalLoss loss = total_loss(out, assignment, weights, config.stride);
        if (!std::isfinite(loss.total))
            throw NumericalError("head fitting diverged at step " + std::to_string(s));
        rows.push_back({s, loss.total, loss.cls, loss.reg, loss.ctr});

        HeadGrads g = head_backward(params, trace, loss, int64_t(out.positions.size()));
        sgd_step(params.trunk1.weight, g.t1_w, lr);
        sgd_step(params.trunk1.bias, g.t1_b, lr);
        sgd_step(params.gn1.gain, g.gn1_g, lr);
        sgd_step(params.gn1.bias, g.gn1_b, lr);
        sgd_step(params.trunk2.weight, g.t2_w, lr);
        sgd_step(params.trunk2.bias, g.t2_b, lr);
        sgd_step(params.gn2.gain, g.gn2_g, lr);
        sgd_step(params.gn2.bias, g.gn2_b, lr);
        sgd_step(params.cls.weight, g.cls_w, lr);
        sgd_step(params.cls.bias, g.cls_b, lr);
        sgd_step(params.box.weight, g.box_w, lr);
        sgd_step(params.box.bias, g.box_b, lr);
        sgd_step(params.ctr.weight, g.ctr_w, lr);
        sgd_step(params.ctr.bias, g.ctr_b, lr);
    }
    return rows;
}

void write_loss_trace_csv(const std::vector<FitTraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write loss trace: " + path);
    out << "step,total,cls,reg,ctr\n";
    char buf[160];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", r.step, r.total, r.cls, r.reg,
                      r.ctr);
        out << buf;
    }
}

} // namespace svd
