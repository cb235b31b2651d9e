#include "e2v/events.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "e2v/rng.hpp"

namespace e2v {

bool EventStream::canonical_less(const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
}

EventStream::EventStream(std::vector<Event> events, Resolution res)
    : events_(std::move(events)), res_(res) {
    std::stable_sort(events_.begin(), events_.end(), canonical_less);
    for (const Event& e : events_) {
        if (e.p != 1 && e.p != -1) throw std::invalid_argument("event polarity must be +-1");
        if (e.x >= res_.width || e.y >= res_.height) {
            throw std::invalid_argument("event outside sensor resolution");
        }
        if (e.t < 0.0) throw std::invalid_argument("negative event timestamp");
    }
}

Array VoxelGrid::to_chw() const {
    const int w = data.dim(0), h = data.dim(1), b = data.dim(2);
    Array out({b, h, w});
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y)
            for (int k = 0; k < b; ++k) out.at(k, y, x) = data.at(x, y, k);
    return out;
}

std::vector<EventStream> group_fixed_count(const EventStream& stream, std::size_t n) {
    if (n < 1) throw std::invalid_argument("group_fixed_count: n must be >= 1");
    std::vector<EventStream> out;
    const auto& ev = stream.events();
    for (std::size_t i = 0; i + n <= ev.size(); i += n) {
        out.emplace_back(std::vector<Event>(ev.begin() + i, ev.begin() + i + n),
                         stream.resolution());
    }
    return out;
}

std::vector<EventStream> group_fixed_duration(const EventStream& stream, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("group_fixed_duration: dt must be > 0");
    std::vector<EventStream> out;
    if (stream.empty()) return out;
    const double t0 = stream.t_first();
    const double t_end = stream.t_last();
    const std::size_t windows =
        static_cast<std::size_t>(std::floor((t_end - t0) / dt)) + 1;
    std::vector<std::vector<Event>> buckets(windows);
    for (const Event& e : stream.events()) {
        std::size_t k = static_cast<std::size_t>(std::floor((e.t - t0) / dt));
        if (k >= windows) k = windows - 1;  // closes the final window
        buckets[k].push_back(e);
    }
    out.reserve(windows);
    for (auto& b : buckets) out.emplace_back(std::move(b), stream.resolution());
    return out;
}

FrameGrouping group_between_frames(const EventStream& stream,
                                   const std::vector<double>& frame_times,
                                   double discard_ratio, std::uint64_t seed) {
    if (frame_times.size() < 2) {
        throw std::invalid_argument("group_between_frames: need at least 2 frame times");
    }
    if (discard_ratio < 0.0 || discard_ratio > 1.0) {
        throw std::invalid_argument("group_between_frames: ratio must be in [0,1]");
    }
    for (std::size_t i = 1; i < frame_times.size(); ++i) {
        if (!(frame_times[i] > frame_times[i - 1])) {
            throw std::invalid_argument("group_between_frames: frame times must increase");
        }
    }

    const std::size_t total = frame_times.size();
    std::size_t discard =
        static_cast<std::size_t>(std::floor(discard_ratio * static_cast<double>(total)));
    const std::size_t interior = total - 2;
    discard = std::min(discard, interior);

    std::vector<std::size_t> interior_idx(interior);
    for (std::size_t i = 0; i < interior; ++i) interior_idx[i] = i + 1;
    Rng rng(seed);
    rng.shuffle(interior_idx);
    std::vector<bool> removed(total, false);
    for (std::size_t i = 0; i < discard; ++i) removed[interior_idx[i]] = true;

    FrameGrouping out;
    for (std::size_t i = 0; i < total; ++i) {
        if (!removed[i]) out.boundary_times.push_back(frame_times[i]);
    }

    const auto& ev = stream.events();
    auto first_not_before = [&ev](double t) {
        return std::lower_bound(ev.begin(), ev.end(), t,
                                [](const Event& e, double v) { return e.t < v; });
    };
    for (std::size_t i = 0; i + 1 < out.boundary_times.size(); ++i) {
        const double a = out.boundary_times[i];
        const double b = out.boundary_times[i + 1];
        const bool last = (i + 2 == out.boundary_times.size());
        auto lo = first_not_before(a);
        auto hi = first_not_before(b);
        if (last) {
            while (hi != ev.end() && hi->t == b) ++hi;  // final window closed
        }
        out.groups.emplace_back(std::vector<Event>(lo, hi), stream.resolution());
    }
    return out;
}

VoxelGrid build_voxel_grid(const EventStream& group, int bins, Resolution res) {
    if (bins < 1) throw std::invalid_argument("build_voxel_grid: bins must be >= 1");
    VoxelGrid vg;
    vg.bins = bins;
    vg.data = Array({res.width, res.height, bins});
    vg.t_start = group.t_first();
    vg.t_end = group.t_last();
    if (group.empty()) return vg;

    const double span = vg.t_end - vg.t_start;
    const double scale = (span > 0.0 && bins > 1)
                             ? static_cast<double>(bins - 1) / span
                             : 0.0;
    for (const Event& e : group.events()) {
        const double tau = (e.t - vg.t_start) * scale;
        const int lo = static_cast<int>(std::floor(tau));
        const double frac = tau - lo;
        const double pol = static_cast<double>(e.p);
        vg.data.at(e.x, e.y, lo) += pol * (1.0 - frac);
        if (frac > 0.0 && lo + 1 < bins) {
            vg.data.at(e.x, e.y, lo + 1) += pol * frac;
        }
    }
    return vg;
}

}  // namespace e2v
