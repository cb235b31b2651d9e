#pragma once

#include <cstdint>
#include <vector>

#include "e2v/array.hpp"

namespace e2v {

// A polarity spike at pixel (x, y) and time t seconds.
struct Event {
    double t = 0.0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t p = 1;  // exactly +1 or -1
};

struct Resolution {
    int width = 0;
    int height = 0;
    bool operator==(const Resolution&) const = default;
};

// Events sorted by t, ties broken by (y, x, p).
class EventStream {
public:
    EventStream() = default;
    EventStream(std::vector<Event> events, Resolution res);

    static bool canonical_less(const Event& a, const Event& b);

    const std::vector<Event>& events() const { return events_; }
    Resolution resolution() const { return res_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    double t_first() const { return events_.empty() ? 0.0 : events_.front().t; }
    double t_last() const { return events_.empty() ? 0.0 : events_.back().t; }

private:
    std::vector<Event> events_;
    Resolution res_;
};

// (W, H, B) polarity accumulation over B normalized temporal bins.
struct VoxelGrid {
    Array data;  // shape (W, H, B)
    int bins = 0;
    double t_start = 0.0;
    double t_end = 0.0;

    double cell(int x, int y, int b) const { return data.at(x, y, b); }
    // (B, H, W) layout for the network input.
    Array to_chw() const;
};

std::vector<EventStream> group_fixed_count(const EventStream& stream, std::size_t n);

// Half-open windows [t0 + i*dt, t0 + (i+1)*dt); the final window is closed so
// the last event is kept. Empty windows stay in the output.
std::vector<EventStream> group_fixed_duration(const EventStream& stream, double dt);

struct FrameGrouping {
    std::vector<EventStream> groups;          // one per surviving frame pair
    std::vector<double> boundary_times;       // surviving frame times, size = groups+1
};

FrameGrouping group_between_frames(const EventStream& stream,
                                   const std::vector<double>& frame_times,
                                   double discard_ratio, std::uint64_t seed);

VoxelGrid build_voxel_grid(const EventStream& group, int bins, Resolution res);

}  // namespace e2v
