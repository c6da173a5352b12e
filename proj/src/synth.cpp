#include "svd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "svd/errors.hpp"

namespace svd {

namespace {

// point on the rectangle boundary at perimeter parameter u in [0,1)
void contour_point(double x1, double y1, double x2, double y2, double u, double& px,
                   double& py) {
    const double w = x2 - x1, h = y2 - y1;
    const double perim = 2.0 * (w + h);
    double d = u * perim;
    if (d < w) {
        px = x1 + d;
        py = y1;
        return;
    }
    d -= w;
    if (d < h) {
        px = x2;
        py = y1 + d;
        return;
    }
    d -= h;
    if (d < w) {
        px = x2 - d;
        py = y2;
        return;
    }
    d -= w;
    px = x1;
    py = y2 - d;
}

} // namespace

SynthResult generate(const SceneSpec& scene) {
    for (const auto& o : scene.objects) {
        if (o.size <= 0) throw ConfigError("object size must be positive");
        if (o.event_rate < 0) throw ConfigError("event rate must be non-negative");
    }
    if (scene.noise_rate < 0) throw ConfigError("noise rate must be non-negative");

    std::mt19937_64 rng(scene.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SynthResult out;
    out.events.sensor_shape = {scene.h, scene.w};
    out.gt_per_window.resize(size_t(scene.n_windows));

    for (int k = 0; k < scene.n_windows; ++k) {
        const uint64_t t0 = uint64_t(k) * uint64_t(scene.window_us);
        for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
            const auto& o = scene.objects[oi];
            const double cx = o.cx + k * o.vx;
            const double cy = o.cy + k * o.vy;
            double x1 = cx - o.size / 2.0, y1 = cy - o.size / 2.0;
            double x2 = cx + o.size / 2.0, y2 = cy + o.size / 2.0;
            // keep the footprint inside the sensor
            x1 = std::clamp(x1, 0.0, double(scene.w - 1));
            x2 = std::clamp(x2, 0.0, double(scene.w - 1));
            y1 = std::clamp(y1, 0.0, double(scene.h - 1));
            y2 = std::clamp(y2, 0.0, double(scene.h - 1));
            if (x2 <= x1 || y2 <= y1) continue; // fully off-sensor

            GroundTruthBox gt;
            gt.box = {x1, y1, x2, y2};
            gt.frame_id = k;
            out.gt_per_window[size_t(k)].push_back(gt);

            const int n = int(std::llround(o.event_rate));
            for (int e = 0; e < n; ++e) {
                double px, py;
                contour_point(x1, y1, x2, y2, unit(rng), px, py);
                Event ev;
                ev.x = int32_t(std::clamp(std::lround(px), long(0), long(scene.w - 1)));
                ev.y = int32_t(std::clamp(std::lround(py), long(0), long(scene.h - 1)));
                ev.t = t0 + uint64_t(unit(rng) * double(scene.window_us - 1));
                ev.p = unit(rng) < o.positive_frac ? 1 : -1;
                out.events.events.push_back(ev);
            }
        }
        const int noise = int(std::llround(scene.noise_rate));
        for (int e = 0; e < noise; ++e) {
            Event ev;
            ev.x = int32_t(unit(rng) * scene.w);
            ev.y = int32_t(unit(rng) * scene.h);
            ev.x = std::min(ev.x, scene.w - 1);
            ev.y = std::min(ev.y, scene.h - 1);
            ev.t = t0 + uint64_t(unit(rng) * double(scene.window_us - 1));
            ev.p = unit(rng) < 0.5 ? 1 : -1;
            out.events.events.push_back(ev);
        }
    }

    std::stable_sort(out.events.events.begin(), out.events.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    out.events.validate();
    return out;
}

SceneSpec scene_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad scene config: ") + e.what());
    }
    SceneSpec s;
    s.h = j.value("h", s.h);
    s.w = j.value("w", s.w);
    s.window_us = j.value("window_us", s.window_us);
    s.n_windows = j.value("n_windows", s.n_windows);
    s.noise_rate = j.value("noise_rate", s.noise_rate);
    s.seed = j.value("seed", s.seed);
    if (j.contains("objects")) {
        for (const auto& jo : j["objects"]) {
            ObjectSpec o;
            o.cx = jo.value("cx", o.cx);
            o.cy = jo.value("cy", o.cy);
            o.vx = jo.value("vx", o.vx);
            o.vy = jo.value("vy", o.vy);
            o.size = jo.value("size", o.size);
            o.event_rate = jo.value("event_rate", o.event_rate);
            o.positive_frac = jo.value("positive_frac", o.positive_frac);
            s.objects.push_back(o);
        }
    }
    return s;
}

SceneSpec scene_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scene config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return scene_from_json(text);
}

} // namespace svd
