#include "svd/events.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "svd/errors.hpp"

namespace svd {

void EventStream::validate() const {
    uint64_t prev = 0;
    for (size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.x < 0 || e.x >= sensor_shape.w || e.y < 0 || e.y >= sensor_shape.h)
            throw ValidationError("event " + std::to_string(i) + " outside sensor resolution");
        if (e.p != 1 && e.p != -1)
            throw ValidationError("event " + std::to_string(i) + " has polarity outside {-1,+1}");
        if (e.t < prev)
            throw ValidationError("timestamps not non-decreasing at event " + std::to_string(i));
        prev = e.t;
    }
}

EventStream read_events_csv(const std::string& path, SensorShape sensor) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open events file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t_us,x,y,p")
        throw ParseError("missing or malformed CSV header in " + path);
    EventStream s;
    s.sensor_shape = sensor;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Event e;
        char c1, c2, c3;
        long long t, x, y, p;
        std::istringstream ls(line);
        if (!(ls >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',')
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed event line");
        if (t < 0 || (p != 0 && p != 1))
            throw ParseError(path + ":" + std::to_string(lineno) + ": invalid field value");
        e.t = uint64_t(t);
        e.x = int32_t(x);
        e.y = int32_t(y);
        e.p = p == 1 ? 1 : -1;
        s.events.push_back(e);
    }
    s.validate();
    return s;
}

void write_events_csv(const EventStream& stream, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write events file: " + path);
    out << "t_us,x,y,p\n";
    for (const auto& e : stream.events)
        out << e.t << ',' << e.x << ',' << e.y << ',' << (e.p > 0 ? 1 : 0) << '\n';
}

EventStream read_events_binary(const std::string& path, SensorShape sensor) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open events file: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EVT1", 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "bad EVT1 magic in " + path);
    uint32_t count = 0;
    if (!in.read(reinterpret_cast<char*>(&count), 4))
        throw FormatError(FormatError::Kind::Truncated, "truncated EVT1 header in " + path);
    EventStream s;
    s.sensor_shape = sensor;
    s.events.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint64_t t;
        uint16_t x, y;
        uint8_t p;
        if (!in.read(reinterpret_cast<char*>(&t), 8) ||
            !in.read(reinterpret_cast<char*>(&x), 2) ||
            !in.read(reinterpret_cast<char*>(&y), 2) ||
            !in.read(reinterpret_cast<char*>(&p), 1))
            throw FormatError(FormatError::Kind::Truncated,
                              "truncated EVT1 record " + std::to_string(i) + " in " + path);
        s.events.push_back({t, int32_t(x), int32_t(y), p ? 1 : -1});
    }
    s.validate();
    return s;
}

void write_events_binary(const EventStream& stream, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write events file: " + path);
    out.write("EVT1", 4);
    const uint32_t count = uint32_t(stream.events.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& e : stream.events) {
        const uint64_t t = e.t;
        const uint16_t x = uint16_t(e.x), y = uint16_t(e.y);
        const uint8_t p = e.p > 0 ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&t), 8);
        out.write(reinterpret_cast<const char*>(&x), 2);
        out.write(reinterpret_cast<const char*>(&y), 2);
        out.write(reinterpret_cast<const char*>(&p), 1);
    }
}

std::vector<GroundTruthBox> read_yolo_labels(const std::string& path, int image_h, int image_w) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open label file: " + path);
    std::vector<GroundTruthBox> boxes;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int cls;
        double cx, cy, w, h;
        if (!(ls >> cls >> cx >> cy >> w >> h))
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed YOLO label line");
        for (double v : {cx, cy, w, h})
            if (v < 0.0 || v > 1.0)
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": normalized value out of [0,1]");
        GroundTruthBox b;
        b.cls = cls;
        b.box = {cx * image_w - w * image_w / 2.0, cy * image_h - h * image_h / 2.0,
                 cx * image_w + w * image_w / 2.0, cy * image_h + h * image_h / 2.0};
        boxes.push_back(b);
    }
    return boxes;
}

} // namespace svd
