#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svd/boxes.hpp"

namespace svd {

struct Event {
    uint64_t t = 0; // microseconds
    int32_t x = 0;
    int32_t y = 0;
    int32_t p = 1; // +1 or -1
};

struct SensorShape {
    int32_t h = 0;
    int32_t w = 0;
    bool operator==(const SensorShape&) const = default;
};

// Time-ordered asynchronous events for one recording or window.
struct EventStream {
    SensorShape sensor_shape;
    std::vector<Event> events;

    void validate() const; // bounds + non-decreasing timestamps
};

// CSV: header "t_us,x,y,p", p in {0,1} mapped to {-1,+1}.
EventStream read_events_csv(const std::string& path, SensorShape sensor);
void write_events_csv(const EventStream& stream, const std::string& path);

// Binary: magic "EVT1" + u32 count, then little-endian (u64 t, u16 x, u16 y, u8 p).
EventStream read_events_binary(const std::string& path, SensorShape sensor);
void write_events_binary(const EventStream& stream, const std::string& path);

// YOLO text labels "class cx cy w h" (normalized) -> absolute pixel boxes.
std::vector<GroundTruthBox> read_yolo_labels(const std::string& path, int image_h, int image_w);

} // namespace svd
