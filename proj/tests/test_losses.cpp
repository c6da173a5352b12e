#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "svd/detect.hpp"
#include "svd/losses.hpp"
#include "test_util.hpp"

using namespace svd;

namespace {

GroundTruthBox gt(double x1, double y1, double x2, double y2) {
    GroundTruthBox g;
    g.box = {x1, y1, x2, y2};
    return g;
}

struct RandomInstance {
    HeadOutputs out;
    Assignment assignment;
};

RandomInstance random_instance(std::mt19937_64& rng, int m, int n_gt) {
    std::uniform_int_distribution<int32_t> coord(0, 30);
    std::uniform_real_distribution<float> logit(-3.0f, 3.0f);
    std::uniform_real_distribution<float> raw(-1.0f, 2.5f);
    std::uniform_real_distribution<double> pos(0.0, 100.0);
    std::uniform_real_distribution<double> len(8.0, 50.0);

    RandomInstance inst;
    for (int i = 0; i < m; ++i) {
        inst.out.positions.push_back({0, coord(rng), coord(rng)});
        inst.out.cls_logit.push_back(logit(rng));
        inst.out.ctr_logit.push_back(logit(rng));
        for (int k = 0; k < 4; ++k) inst.out.box_raw.push_back(raw(rng));
    }
    std::vector<GroundTruthBox> gts;
    for (int g = 0; g < n_gt; ++g) {
        const double x1 = pos(rng), y1 = pos(rng);
        gts.push_back(gt(x1, y1, x1 + len(rng), y1 + len(rng)));
    }
    inst.assignment = assign_targets(inst.out.positions, 4, gts);
    return inst;
}

// true when a finite-difference probe at this row would cross a min/max switch
// in the GIoU terms
bool near_nonsmooth(const HeadOutputs& out, const Assignment& a, size_t row, int stride) {
    if (!a.positive[row]) return false;
    std::vector<Box> dec = decode_ltrb({out.positions[row]},
                                       {out.box_raw[row * 4], out.box_raw[row * 4 + 1],
                                        out.box_raw[row * 4 + 2], out.box_raw[row * 4 + 3]},
                                       stride);
    const double cx = double(out.positions[row].x) * stride + stride / 2.0;
    const double cy = double(out.positions[row].y) * stride + stride / 2.0;
    const double* d = &a.ltrb[row * 4];
    const Box tgt{cx - d[0], cy - d[1], cx + d[2], cy + d[3]};
    for (int k = 0; k < 4; ++k)
        if (std::abs(dec[0][size_t(k)] - tgt[size_t(k)]) < 1e-2) return true;
    const double iw = std::min(dec[0][2], tgt[2]) - std::max(dec[0][0], tgt[0]);
    const double ih = std::min(dec[0][3], tgt[3]) - std::max(dec[0][1], tgt[1]);
    return std::abs(iw) < 1e-2 || std::abs(ih) < 1e-2;
}

} // namespace

TEST_CASE("target assignment hand cases") {
    // stride 4: position (y=2,x=2) has center (10,10)
    std::vector<HeadPosition> pos{{0, 2, 2}};
    auto a = assign_targets(pos, 4, {gt(0, 0, 40, 20)});
    REQUIRE(a.positive[0] == 1);
    CHECK(a.ltrb[0] == 10);
    CHECK(a.ltrb[1] == 10);
    CHECK(a.ltrb[2] == 30);
    CHECK(a.ltrb[3] == 10);
    CHECK(a.centerness[0] == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-9));

    // center exactly at the box center
    auto b = assign_targets(pos, 4, {gt(6, 6, 14, 14)});
    REQUIRE(b.positive[0] == 1);
    CHECK(b.centerness[0] == doctest::Approx(1.0));

    // outside every box
    auto c = assign_targets(pos, 4, {gt(50, 50, 60, 60)});
    CHECK(c.positive[0] == 0);
    CHECK(c.gt_index[0] == -1);
}

TEST_CASE("overlapping ground truths resolve to the smallest area") {
    std::vector<HeadPosition> pos{{0, 2, 2}};
    auto a = assign_targets(pos, 4, {gt(0, 0, 100, 100), gt(5, 5, 15, 15)});
    REQUIRE(a.positive[0] == 1);
    CHECK(a.gt_index[0] == 1);
}

TEST_CASE("assignment scale consistency") {
    std::vector<HeadPosition> pos{{0, 3, 5}};
    auto base = assign_targets(pos, 4, {gt(2, 1, 40, 30)});
    auto scaled = assign_targets(pos, 8, {gt(4, 2, 80, 60)});
    REQUIRE(base.positive[0] == 1);
    REQUIRE(scaled.positive[0] == 1);
    for (int k = 0; k < 4; ++k)
        CHECK(scaled.ltrb[size_t(k)] == doctest::Approx(2.0 * base.ltrb[size_t(k)]));
    CHECK(scaled.centerness[0] == doctest::Approx(base.centerness[0]));
}

TEST_CASE("focal loss closed forms") {
    // single positive at p = 0.5
    auto r = focal_loss({0.0f}, {1}, 0.25, 2.0);
    CHECK(r.loss == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-9));

    // confident positive contributes nothing
    auto conf = focal_loss({30.0f}, {1}, 0.25, 2.0);
    CHECK(conf.loss == doctest::Approx(0.0).epsilon(1e-9));

    // gamma=0, alpha=1 degenerates to plain BCE
    std::vector<float> logits{0.7f, -1.3f, 2.1f};
    std::vector<char> flags{1, 0, 1};
    auto focal = focal_loss(logits, flags, 1.0, 0.0);
    double bce = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-double(logits[i])));
        bce += flags[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    bce /= 2.0; // two positives
    CHECK(focal.loss == doctest::Approx(bce).epsilon(1e-9));
    CHECK(focal.loss >= 0.0);
}

TEST_CASE("giou loss hand cases") {
    auto same = giou_loss({{0, 0, 4, 4}}, {{0, 0, 4, 4}});
    CHECK(same.loss == doctest::Approx(0.0));

    auto disjoint = giou_loss({{0, 0, 1, 1}}, {{2, 2, 3, 3}});
    CHECK(disjoint.loss == doctest::Approx(16.0 / 9.0).epsilon(1e-12));

    auto partial = giou_loss({{0, 0, 2, 2}}, {{1, 1, 3, 3}});
    CHECK(partial.loss == doctest::Approx(1.0 + 5.0 / 63.0).epsilon(1e-12));
    CHECK(partial.loss >= 0.0);
    CHECK(partial.loss <= 2.0);
}

TEST_CASE("centerness BCE is stationary when prediction equals target") {
    const double target = 0.7;
    const float logit = float(std::log(target / (1.0 - target)));
    auto r = centerness_bce({logit}, {target}, {1});
    CHECK(r.grad[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(r.loss > 0.0); // entropy floor for a soft target

    auto hard = centerness_bce({40.0f}, {1.0}, {1});
    CHECK(hard.loss == doctest::Approx(0.0).epsilon(1e-9));

    auto none = centerness_bce({1.0f, -2.0f}, {0.5, 0.5}, {0, 0});
    CHECK(none.loss == 0.0);
    CHECK(none.grad[0] == 0.0);
    CHECK(none.grad[1] == 0.0);
}

TEST_CASE("total loss: weight linearity and permutation invariance") {
    std::mt19937_64 rng(3);
    RandomInstance inst = random_instance(rng, 12, 3);

    LossWeights zero;
    zero.cls = zero.reg = zero.ctr = 0.0;
    CHECK(total_loss(inst.out, inst.assignment, zero, 4).total == 0.0);

    LossWeights w;
    TotalLoss base = total_loss(inst.out, inst.assignment, w, 4);
    LossWeights w2 = w;
    w2.reg *= 2.0;
    TotalLoss doubled = total_loss(inst.out, inst.assignment, w2, 4);
    CHECK(doubled.total - doubled.cls * w2.cls - doubled.ctr * w2.ctr ==
          doctest::Approx(2.0 * (base.total - base.cls * w.cls - base.ctr * w.ctr)));

    // permute rows
    std::vector<size_t> perm(inst.out.positions.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
    HeadOutputs shuffled;
    Assignment ashuf;
    for (size_t i : perm) {
        shuffled.positions.push_back(inst.out.positions[i]);
        shuffled.cls_logit.push_back(inst.out.cls_logit[i]);
        shuffled.ctr_logit.push_back(inst.out.ctr_logit[i]);
        ashuf.positive.push_back(inst.assignment.positive[i]);
        ashuf.gt_index.push_back(inst.assignment.gt_index[i]);
        ashuf.centerness.push_back(inst.assignment.centerness[i]);
        for (int k = 0; k < 4; ++k) {
            shuffled.box_raw.push_back(inst.out.box_raw[i * 4 + size_t(k)]);
            ashuf.ltrb.push_back(inst.assignment.ltrb[i * 4 + size_t(k)]);
        }
    }
    TotalLoss permuted = total_loss(shuffled, ashuf, w, 4);
    CHECK(permuted.total == doctest::Approx(base.total).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> msize(2, 10);
    LossWeights w;
    const double h = 1e-4;
    int checked = 0;

    for (int inst_i = 0; inst_i < 50; ++inst_i) {
        RandomInstance inst = random_instance(rng, msize(rng), 3);
        TotalLoss analytic = total_loss(inst.out, inst.assignment, w, 4);
        const size_t m = inst.out.positions.size();

        auto fd_check = [&](std::vector<float>& slot, size_t idx, double grad) {
            const float orig = slot[idx];
            const float hi = float(double(orig) + h);
            const float lo = float(double(orig) - h);
            slot[idx] = hi;
            const double f_hi = total_loss(inst.out, inst.assignment, w, 4).total;
            slot[idx] = lo;
            const double f_lo = total_loss(inst.out, inst.assignment, w, 4).total;
            slot[idx] = orig;
            const double fd = (f_hi - f_lo) / (double(hi) - double(lo));
            const double scale = std::max({std::abs(fd), std::abs(grad), 1e-3});
            CHECK(std::abs(fd - grad) / scale < 1e-4);
            ++checked;
        };

        for (size_t i = 0; i < m; ++i) {
            fd_check(inst.out.cls_logit, i, analytic.d_cls[i]);
            fd_check(inst.out.ctr_logit, i, analytic.d_ctr[i]);
            if (near_nonsmooth(inst.out, inst.assignment, i, 4)) continue;
            for (int k = 0; k < 4; ++k)
                fd_check(inst.out.box_raw, i * 4 + size_t(k), analytic.d_box[i * 4 + size_t(k)]);
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("head fitting: zero learning rate gives a flat trace") {
    ModelConfig mc;
    ModelParams params = init_weights(mc, 9);
    std::mt19937_64 rng(4);
    SparseTensor3D feats = testutil::random_tensor(rng, {1, 1, 16, 16}, 128, 20);
    std::vector<GroundTruthBox> gts{gt(0, 0, 64, 64)};
    LossWeights w;
    auto trace = fit_head_demo(feats, gts, params.head, mc.head, w, 5, 0.0);
    REQUIRE(trace.size() == 5);
    for (const auto& r : trace) CHECK(r.total == doctest::Approx(trace[0].total));
}

TEST_CASE("head fitting drives the loss well below its start") {
    ModelConfig mc;
    ModelParams params = init_weights(mc, 42);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> f(128);
    for (auto& v : f) v = u(rng);
    // one positive position whose center (30,22) is the box center, so every
    // loss term can reach zero
    SparseTensor3D feats({1, 1, 16, 16}, 128, {{0, 0, 5, 7}}, std::move(f));
    std::vector<GroundTruthBox> gts{gt(18, 12, 42, 32)};
    LossWeights w;
    auto trace = fit_head_demo(feats, gts, params.head, mc.head, w, 500, 0.002);
    REQUIRE(trace.size() == 500);
    CHECK(trace.back().total < 0.1 * trace.front().total);
}

TEST_CASE("head fitting with no positives still reduces the classification loss") {
    ModelConfig mc;
    ModelParams params = init_weights(mc, 10);
    std::mt19937_64 rng(6);
    SparseTensor3D feats = testutil::random_tensor(rng, {1, 1, 16, 16}, 128, 16);
    LossWeights w;
    auto trace = fit_head_demo(feats, {}, params.head, mc.head, w, 200, 0.05);
    CHECK(trace.back().total < trace.front().total);
    CHECK(trace.back().reg == 0.0);
    CHECK(trace.back().ctr == 0.0);
}

TEST_CASE("loss trace CSV format") {
    std::vector<FitTraceRow> trace{{0, 1.5, 1.0, 0.25, 0.25}, {1, 1.25, 0.9, 0.2, 0.15}};
    const std::string path = "loss_trace_test.csv";
    write_loss_trace_csv(trace, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,total,cls,reg,ctr");
    std::getline(in, line);
    CHECK(line == "0,1.500000,1.000000,0.250000,0.250000");
    in.close();
    std::remove(path.c_str());
}
