#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "svd/container.hpp"
#include "svd/detect.hpp"
#include "svd/errors.hpp"
#include "svd/eval.hpp"
#include "svd/events.hpp"
#include "svd/forensics.hpp"
#include "svd/losses.hpp"
#include "svd/model.hpp"
#include "svd/oracle.hpp"
#include "svd/sparse_ops.hpp"
#include "svd/synth.hpp"
#include "svd/voxelizer.hpp"

namespace fs = std::filesystem;
using namespace svd;

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel g_log_level = LogLevel::Error;

void init_log_level() {
    const char* env = std::getenv("SPARSEVOX_LOG");
    if (!env) return;
    const std::string v(env);
    if (v == "info") g_log_level = LogLevel::Info;
    else if (v == "debug") g_log_level = LogLevel::Debug;
    else g_log_level = LogLevel::Error;
}

void log_info(const std::string& msg) {
    if (g_log_level >= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
    if (g_log_level >= LogLevel::Debug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

struct GlobalOpts {
    std::string config_path;
    uint64_t seed = 42;
    int threads = 1;
    bool trace = false;
    std::string format = "json";
};

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad config " + path + ": " + e.what());
    }
}

VoxelizerConfig voxelizer_config_from(const nlohmann::json& cfg) {
    VoxelizerConfig v;
    if (!cfg.contains("voxelizer")) return v;
    const auto& j = cfg["voxelizer"];
    v.temporal_bins = j.value("temporal_bins", v.temporal_bins);
    v.out_h = j.value("out_h", v.out_h);
    v.out_w = j.value("out_w", v.out_w);
    v.window_us = j.value("window_us", v.window_us);
    v.channels = j.value("channels", v.channels);
    v.hot_pixel_factor = j.value("hot_pixel_factor", v.hot_pixel_factor);
    v.fixed_time_range = j.value("fixed_time_range", v.fixed_time_range);
    return v;
}

EventStream read_events_any(const std::string& path, SensorShape sensor) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".evt1")
        return read_events_binary(path, sensor);
    return read_events_csv(path, sensor);
}

// ---------------------------------------------------------------- voxelize

int cmd_voxelize(const GlobalOpts& g, const std::string& events_path,
                 const std::string& labels_path, const std::string& out_dir, int sensor_h,
                 int sensor_w, VoxelizerConfig vc) {
    if (!fs::exists(events_path)) {
        std::fprintf(stderr, "error: events file not found: %s\n", events_path.c_str());
        return 2;
    }
    fs::create_directories(out_dir);
    EventStream stream = read_events_any(events_path, {sensor_h, sensor_w});
    log_info("read " + std::to_string(stream.events.size()) + " events");

    auto windows = slice_windows(stream, vc.window_us);
    std::vector<int64_t> counts;
    for (size_t k = 0; k < windows.size(); ++k) {
        SparseTensor3D t = voxelize_window(windows[k], vc);
        counts.push_back(t.size());
        char name[64];
        std::snprintf(name, sizeof(name), "window_%05zu.svx", k);
        write_container(t, (fs::path(out_dir) / name).string());
        log_debug(std::string(name) + ": " + std::to_string(t.size()) + " active voxels");
    }

    nlohmann::json stats;
    stats["windows"] = windows.size();
    stats["events"] = stream.events.size();
    if (counts.empty()) {
        stats["note"] = "empty stream: no windows produced";
    } else {
        std::vector<int64_t> sorted = counts;
        std::sort(sorted.begin(), sorted.end());
        const int64_t median = sorted[sorted.size() / 2];
        stats["active_voxels"] = {{"min", sorted.front()},
                                  {"max", sorted.back()},
                                  {"median", median}};
        const double cells = double(vc.temporal_bins) * vc.out_h * vc.out_w;
        stats["occupancy_percent"] = 100.0 * double(median) / cells;
    }
    std::ofstream(fs::path(out_dir) / "stats.json") << stats.dump(2) << "\n";

    if (!labels_path.empty()) {
        auto gts = read_yolo_labels(labels_path, sensor_h, sensor_w);
        std::ofstream out(fs::path(out_dir) / "gt.jsonl");
        for (size_t k = 0; k < windows.size(); ++k) {
            nlohmann::json line;
            line["frame_id"] = k;
            line["sequence_id"] = 0;
            line["event_count"] = windows[k].events.size();
            nlohmann::json boxes = nlohmann::json::array();
            for (const auto& b : gts) boxes.push_back(b.box);
            line["boxes"] = boxes;
            out << line.dump() << "\n";
        }
    }
    (void)g;
    return 0;
}

// ------------------------------------------------------------------- infer

int cmd_infer(const GlobalOpts& g, const std::string& containers_dir,
              const std::string& checkpoint_path, const std::string& out_path,
              InferenceConfig ic) {
    if (!fs::is_directory(containers_dir)) {
        std::fprintf(stderr, "error: container directory not found: %s\n",
                     containers_dir.c_str());
        return 2;
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(containers_dir))
        if (entry.path().extension() == ".svx") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::fprintf(stderr, "error: no containers in %s\n", containers_dir.c_str());
        return 2;
    }
    ModelParams params = load_checkpoint(checkpoint_path);

    struct FrameOut {
        std::vector<Detection> dets;
        StageTrace trace;
    };
    std::vector<FrameOut> results(files.size());
    std::atomic<size_t> next{0};
    const int n_threads = std::max(1, g.threads);
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= files.size()) return;
            SparseTensor3D x = read_container(files[i]);
            if (g.trace) {
                HeadOutputs out = full_forward(x, params, &results[i].trace);
                std::vector<double> scores = fuse_scores(out.cls_logit, out.ctr_logit);
                std::vector<Box> boxes = decode_ltrb(out.positions, out.box_raw, ic.stride);
                std::vector<Detection> cand;
                for (size_t k = 0; k < scores.size(); ++k)
                    if (scores[k] > ic.score_threshold) cand.push_back({boxes[k], scores[k], 0});
                results[i].dets = nms(cand, ic.nms_iou, ic.max_detections);
            } else {
                results[i].dets = infer_frame(x, params, ic);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write detections: " + out_path);
    for (size_t i = 0; i < files.size(); ++i) {
        if (g.trace) {
            for (const auto& [name, count] : results[i].trace.active_counts)
                std::fprintf(stderr, "frame %zu %s: %lld active\n", i, name.c_str(),
                             (long long)count);
        }
        out << detections_to_json_line(int64_t(i), results[i].dets) << "\n";
    }
    log_info("wrote detections for " + std::to_string(files.size()) + " frames");
    return 0;
}

// ------------------------------------------------------------ eval/forensics

std::vector<FrameRecord> load_corpus(const std::string& gt_path, const std::string& pred_path) {
    if (!fs::exists(gt_path)) throw ParseError("ground truth file not found: " + gt_path);
    if (!fs::exists(pred_path)) throw ParseError("detections file not found: " + pred_path);
    auto frames = read_ground_truth_jsonl(gt_path);
    attach_detections_jsonl(frames, pred_path);
    return frames;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path,
             const std::string& out_path) {
    auto frames = load_corpus(gt_path, pred_path);
    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write metrics: " + out_path);
    out << metrics_json(frames) << "\n";
    return 0;
}

int cmd_forensics(const GlobalOpts& g, const std::string& gt_path, const std::string& pred_path,
                  const std::string& out_dir) {
    auto frames = load_corpus(gt_path, pred_path);
    ForensicsReport rep = analyze(frames);
    fs::create_directories(out_dir);
    if (g.format == "json" || g.format == "both")
        std::ofstream(fs::path(out_dir) / "report.json") << report_json(rep) << "\n";
    if (g.format == "markdown" || g.format == "both")
        std::ofstream(fs::path(out_dir) / "report.md") << report_markdown(rep);
    return 0;
}

// ------------------------------------------------------------- oracle-check

SparseTensor3D random_tensor(std::mt19937_64& rng, GridShape shape, int channels,
                             int max_voxels) {
    std::uniform_int_distribution<int> b(0, shape.b - 1), t(0, shape.t - 1), y(0, shape.h - 1),
        x(0, shape.w - 1);
    std::uniform_real_distribution<float> val(-2.0f, 2.0f);
    std::uniform_int_distribution<int> n(0, max_voxels);
    std::vector<VoxelCoord> coords;
    const int target = n(rng);
    for (int i = 0; i < target * 3 && int(coords.size()) < target; ++i) {
        VoxelCoord c{b(rng), t(rng), y(rng), x(rng)};
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
    }
    std::sort(coords.begin(), coords.end());
    std::vector<float> feats(coords.size() * size_t(channels));
    for (auto& f : feats) f = val(rng);
    return SparseTensor3D(shape, channels, std::move(coords), std::move(feats));
}

ConvParams random_conv(std::mt19937_64& rng, KernelShape k, Stride3 s, int cin, int cout) {
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    ConvParams p;
    p.kernel = k;
    p.stride = s;
    p.in_channels = cin;
    p.out_channels = cout;
    p.weights.assign(size_t(k.volume()), std::vector<float>(size_t(cin) * size_t(cout)));
    for (auto& w : p.weights)
        for (auto& f : w) f = val(rng);
    p.bias.assign(size_t(cout), 0.0f);
    for (auto& f : p.bias) f = val(rng);
    return p;
}

int cmd_oracle_check(uint64_t seed, int cases) {
    if (cases == 0) {
        std::fprintf(stderr, "warning: cases=0, vacuous pass\n");
        std::printf("oracle-check: PASS (0 cases)\n");
        return 0;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ch(1, 4), kk(0, 1);
    double max_dev = 0.0;
    bool ok = true;

    for (ConvMode mode : {ConvMode::Submanifold, ConvMode::Strided, ConvMode::Transposed}) {
        for (int c = 0; c < cases; ++c) {
            const GridShape shape{1, 4, 8, 8};
            const int cin = ch(rng), cout = ch(rng);
            SparseTensor3D x = random_tensor(rng, shape, cin, 32);
            KernelShape kernel{2 * kk(rng) + 1, 2 * kk(rng) + 1, 2 * kk(rng) + 1};
            Stride3 stride{1, 1, 1};
            if (mode != ConvMode::Submanifold) stride = {1, 2, 2};
            ConvParams p = random_conv(rng, kernel, stride, cin, cout);

            SparseTensor3D got = mode == ConvMode::Submanifold ? subm_conv3d(x, p)
                                 : mode == ConvMode::Strided   ? strided_conv3d(x, p)
                                                               : transpose_conv3d(x, p);
            oracle::DenseGrid ref = oracle::dense_conv3d(oracle::densify(x), p, mode);
            for (int64_t i = 0; i < got.size(); ++i) {
                const auto& vc = got.coords()[size_t(i)];
                auto row = got.row(i);
                for (int j = 0; j < cout; ++j) {
                    const double dev =
                        std::abs(double(row[size_t(j)]) - ref.at(vc.batch, vc.t, vc.y, vc.x, j));
                    max_dev = std::max(max_dev, dev);
                    if (dev >= 1e-5) ok = false;
                }
            }
        }
    }
    std::printf("conv equivalence: %s (max deviation %.3e over %d cases x 3 modes)\n",
                ok ? "PASS" : "FAIL", max_dev, cases);

    // NMS equivalence
    bool nms_ok = true;
    std::uniform_real_distribution<double> pos(0.0, 200.0), len(1.0, 60.0), sc(0.0, 1.0);
    std::uniform_int_distribution<int> nd(0, 300);
    for (int c = 0; c < cases; ++c) {
        std::vector<Detection> dets;
        const int n = nd(rng);
        for (int i = 0; i < n; ++i) {
            const double x1 = pos(rng), y1 = pos(rng);
            dets.push_back({{x1, y1, x1 + len(rng), y1 + len(rng)}, sc(rng), 0});
        }
        auto fast = nms(dets, 0.5, 100);
        auto slow = oracle::nms_bruteforce(dets, 0.5, 100);
        if (fast.size() != slow.size()) nms_ok = false;
        for (size_t i = 0; i < fast.size() && nms_ok; ++i)
            if (fast[i].box != slow[i].box || fast[i].score != slow[i].score) nms_ok = false;
    }
    std::printf("nms equivalence: %s (%d cases)\n", nms_ok ? "PASS" : "FAIL", cases);

    if (!ok || !nms_ok) return 1;
    std::printf("oracle-check: PASS\n");
    return 0;
}

// ------------------------------------------------------------------- bench

int cmd_bench(const GlobalOpts& g, const std::string& out_path, const std::string& grids) {
    SceneSpec scene;
    scene.h = 720;
    scene.w = 1280;
    scene.seed = g.seed;
    scene.n_windows = 2;
    scene.objects = {{400, 300, 15, 5, 40, 4000, 0.5}, {900, 500, -10, 8, 25, 2500, 0.5}};
    scene.noise_rate = 3000;
    SynthResult synth = generate(scene);
    const int64_t event_count = int64_t(synth.events.events.size());

    std::vector<std::pair<int, int>> grid_list;
    std::string token;
    std::stringstream ss(grids);
    while (std::getline(ss, token, ',')) {
        const auto xpos = token.find('x');
        if (xpos == std::string::npos) throw ConfigError("bad grid spec: " + token);
        grid_list.emplace_back(std::stoi(token.substr(xpos + 1)),
                               std::stoi(token.substr(0, xpos)));
    }

    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write bench CSV: " + out_path);
    out << "h,w,events,active_voxels,dense_bytes,sparse_bytes,ratio\n";
    auto windows = slice_windows(synth.events, 33000);
    for (const auto& [h, w] : grid_list) {
        VoxelizerConfig vc;
        vc.out_h = h;
        vc.out_w = w;
        const auto start = std::chrono::steady_clock::now();
        int64_t active = 0;
        for (const auto& win : windows) active += voxelize_window(win, vc).size();
        const auto ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        log_info("grid " + std::to_string(w) + "x" + std::to_string(h) + ": " +
                 std::to_string(ms) + " ms");
        auto mem = oracle::memory_calculator(vc.temporal_bins, h, w, vc.channels, 4, active, 16,
                                             4);
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%d,%lld,%lld,%llu,%llu,%.4f\n", h, w,
                      (long long)event_count, (long long)active,
                      (unsigned long long)mem.dense_bytes, (unsigned long long)mem.sparse_bytes,
                      mem.ratio);
        out << line;
        if (active > event_count) {
            std::fprintf(stderr, "error: active voxels exceed event count\n");
            return 1;
        }
    }
    return 0;
}

// ---------------------------------------------------------------- demo-fit

int cmd_demo_fit(const GlobalOpts& g, const std::string& out_path, const std::string& scene_path,
                 int steps, double lr) {
    SceneSpec scene;
    if (!scene_path.empty()) {
        scene = scene_from_json_file(scene_path);
    } else {
        // one object whose center (150,122) falls exactly on a stride-4 cell center
        scene.objects = {{150, 122, 0, 0, 24, 800, 0.5}};
        scene.n_windows = 1;
    }
    scene.seed = g.seed;
    SynthResult synth = generate(scene);
    if (synth.gt_per_window.empty() || synth.gt_per_window[0].empty())
        throw ConfigError("demo scene produced no ground truth");
    const auto& gts = synth.gt_per_window[0];

    ModelConfig mc;
    ModelParams params = init_weights(mc, g.seed);
    const int stride = mc.head.stride;
    const GridShape grid{1, 1, (scene.h + stride - 1) / stride,
                         (scene.w + stride - 1) / stride};

    // one frozen-feature voxel at the cell nearest each object center
    std::mt19937_64 rng(g.seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<VoxelCoord> coords;
    for (const auto& gt : gts) {
        const double cx = (gt.box[0] + gt.box[2]) / 2.0;
        const double cy = (gt.box[1] + gt.box[3]) / 2.0;
        VoxelCoord c{0, 0, int32_t((cy - stride / 2.0) / stride + 0.5),
                     int32_t((cx - stride / 2.0) / stride + 0.5)};
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
    }
    std::sort(coords.begin(), coords.end());
    std::vector<float> feats(coords.size() * size_t(mc.head.in_dim));
    for (auto& f : feats) f = u(rng);
    SparseTensor3D features(grid, mc.head.in_dim, std::move(coords), std::move(feats));

    LossWeights w;
    auto trace = fit_head_demo(features, gts, params.head, mc.head, w, steps, lr);
    write_loss_trace_csv(trace, out_path);
    const double ratio = trace.back().total / trace.front().total;
    std::printf("demo-fit: initial %.6f final %.6f ratio %.4f\n", trace.front().total,
                trace.back().total, ratio);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    init_log_level();
    CLI::App app{"sparse event-camera detection pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--threads", g.threads, "worker threads");
    app.add_flag("--trace", g.trace, "log per-stage active-voxel counts");
    app.add_option("--format", g.format, "report format: json|markdown|both");

    // voxelize
    auto* vox = app.add_subcommand("voxelize", "events -> sparse voxel containers");
    std::string events_path, labels_path, out_dir;
    int sensor_h = 240, sensor_w = 304;
    vox->add_option("--events", events_path, "event CSV or .evt1 file")->required();
    vox->add_option("--labels", labels_path, "YOLO label file");
    vox->add_option("--out-dir", out_dir, "output directory")->required();
    vox->add_option("--sensor-h", sensor_h, "sensor height");
    vox->add_option("--sensor-w", sensor_w, "sensor width");
    int vox_bins = -1, vox_h = -1, vox_w = -1, vox_channels = -1;
    int64_t vox_window = -1;
    vox->add_option("--bins", vox_bins, "temporal bins");
    vox->add_option("--out-h", vox_h, "voxel grid height");
    vox->add_option("--out-w", vox_w, "voxel grid width");
    vox->add_option("--window-us", vox_window, "window length (us)");
    vox->add_option("--channels", vox_channels, "feature channels (2 or 6)");

    // init
    auto* ini = app.add_subcommand("init", "write a freshly initialized checkpoint");
    std::string init_out;
    int init_in_channels = -1;
    ini->add_option("--out", init_out, "checkpoint path")->required();
    ini->add_option("--in-channels", init_in_channels, "input feature channels");

    // infer
    auto* inf = app.add_subcommand("infer", "containers + checkpoint -> detections");
    std::string containers_dir, checkpoint_path, infer_out;
    double score_thr = -1.0;
    inf->add_option("--containers", containers_dir, "container directory")->required();
    inf->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    inf->add_option("--out", infer_out, "detections JSON-lines output")->required();
    inf->add_option("--score-threshold", score_thr, "detection score floor");

    // eval
    auto* ev = app.add_subcommand("eval", "detections vs ground truth -> metrics");
    std::string gt_path, pred_path, eval_out;
    ev->add_option("--gt", gt_path, "ground truth JSON-lines")->required();
    ev->add_option("--pred", pred_path, "detections JSON-lines")->required();
    ev->add_option("--out", eval_out, "metrics JSON output")->required();

    // forensics
    auto* fo = app.add_subcommand("forensics", "error analysis report");
    std::string fo_gt, fo_pred, fo_out;
    fo->add_option("--gt", fo_gt, "ground truth JSON-lines")->required();
    fo->add_option("--pred", fo_pred, "detections JSON-lines")->required();
    fo->add_option("--out-dir", fo_out, "report output directory")->required();

    // oracle-check
    auto* oc = app.add_subcommand("oracle-check", "dense brute-force equivalence battery");
    int oc_cases = 200;
    oc->add_option("--cases", oc_cases, "instances per battery");

    // bench
    auto* be = app.add_subcommand("bench", "resolution sweep on synthetic events");
    std::string bench_out = "bench.csv", bench_grids = "320x320,640x640,1280x720";
    be->add_option("--out", bench_out, "CSV output path");
    be->add_option("--grids", bench_grids, "comma-separated WxH list");

    // demo-fit
    auto* de = app.add_subcommand("demo-fit", "gradient-descent head fitting demo");
    std::string demo_out = "trace.csv", demo_scene;
    int demo_steps = 500;
    double demo_lr = 0.002;
    de->add_option("--out", demo_out, "loss trace CSV path");
    de->add_option("--scene", demo_scene, "scene JSON config");
    de->add_option("--steps", demo_steps, "gradient steps");
    de->add_option("--lr", demo_lr, "learning rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (vox->parsed()) {
            VoxelizerConfig vc = voxelizer_config_from(load_config(g.config_path));
            if (vox_bins > 0) vc.temporal_bins = vox_bins;
            if (vox_h > 0) vc.out_h = vox_h;
            if (vox_w > 0) vc.out_w = vox_w;
            if (vox_window > 0) vc.window_us = uint64_t(vox_window);
            if (vox_channels > 0) vc.channels = vox_channels;
            vc.validate();
            return cmd_voxelize(g, events_path, labels_path, out_dir, sensor_h, sensor_w, vc);
        }
        if (ini->parsed()) {
            ModelConfig mc;
            if (init_in_channels > 0) mc.backbone.in_channels = init_in_channels;
            ModelParams params = init_weights(mc, g.seed);
            save_checkpoint(params, init_out);
            log_info("wrote checkpoint " + init_out);
            return 0;
        }
        if (inf->parsed()) {
            InferenceConfig ic;
            if (score_thr >= 0.0) ic.score_threshold = score_thr;
            return cmd_infer(g, containers_dir, checkpoint_path, infer_out, ic);
        }
        if (ev->parsed()) return cmd_eval(gt_path, pred_path, eval_out);
        if (fo->parsed()) return cmd_forensics(g, fo_gt, fo_pred, fo_out);
        if (oc->parsed()) return cmd_oracle_check(g.seed, oc_cases);
        if (be->parsed()) return cmd_bench(g, bench_out, bench_grids);
        if (de->parsed()) return cmd_demo_fit(g, demo_out, demo_scene, demo_steps, demo_lr);
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
