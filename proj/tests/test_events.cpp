#include <doctest.h>

#include <cmath>

#include "e2v/events.hpp"
#include "e2v/rng.hpp"
#include "test_support.hpp"

using namespace e2v;

namespace {

EventStream make_stream(std::vector<Event> ev, int w = 32, int h = 32) {
    return EventStream(std::move(ev), Resolution{w, h});
}

std::vector<Event> ramp_events(int n, double t0 = 0.0, double dt = 0.001) {
    std::vector<Event> ev;
    for (int i = 0; i < n; ++i) {
        ev.push_back(Event{t0 + i * dt, static_cast<std::uint16_t>(i % 8),
                           static_cast<std::uint16_t>((i / 8) % 8),
                           static_cast<std::int8_t>(i % 2 == 0 ? 1 : -1)});
    }
    return ev;
}

}  // namespace

TEST_CASE("event stream validates polarity and bounds") {
    CHECK_THROWS(make_stream({Event{0.0, 1, 1, 0}}));
    CHECK_THROWS(make_stream({Event{0.0, 40, 1, 1}}, 32, 32));
    CHECK_THROWS(make_stream({Event{-1.0, 1, 1, 1}}));
    CHECK_NOTHROW(make_stream({Event{0.0, 1, 1, 1}, Event{0.0, 1, 1, -1}}));
}

TEST_CASE("event stream sorts canonically by (t, y, x, p)") {
    EventStream s = make_stream({Event{0.5, 3, 2, 1}, Event{0.1, 7, 7, -1},
                                 Event{0.5, 1, 2, -1}, Event{0.5, 0, 1, 1}});
    const auto& ev = s.events();
    CHECK(ev[0].t == 0.1);
    CHECK(ev[1].y == 1);           // t=0.5 group ordered by y
    CHECK(ev[2].y == 2);
    CHECK(ev[2].x == 1);           // same y → by x
    CHECK(ev[3].x == 3);
}

TEST_CASE("group_fixed_count: groups of n, remainder dropped") {
    EventStream s = make_stream(ramp_events(10));
    auto groups = group_fixed_count(s, 4);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].size() == 4);
    CHECK(groups[1].size() == 4);

    // oversized n on a small stream yields nothing
    auto none = group_fixed_count(make_stream(ramp_events(9000 % 501)), 45000);
    CHECK(none.empty());

    // empty stream is fine
    CHECK(group_fixed_count(make_stream({}), 5).empty());

    // the reference sweep has nine settings
    int settings = 0;
    for (int n = 5000; n <= 45000; n += 5000) ++settings;
    CHECK(settings == 9);
}

TEST_CASE("group_fixed_duration: half-open windows, empty windows kept") {
    EventStream s = make_stream(
        {Event{0.001, 0, 0, 1}, Event{0.009, 1, 0, 1}, Event{0.015, 2, 0, -1}});
    auto groups = group_fixed_duration(s, 0.010);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].size() == 2);
    CHECK(groups[1].size() == 1);

    CHECK_THROWS_AS(group_fixed_duration(s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(group_fixed_duration(s, -1.0), std::invalid_argument);

    // a 0.05 s span with dt = 0.010 gives 5 windows + 1 closing window for the
    // event exactly at the boundary
    EventStream span = make_stream({Event{0.0, 0, 0, 1}, Event{0.012, 0, 0, 1},
                                    Event{0.03, 0, 0, 1}, Event{0.049, 0, 0, 1}});
    auto g5 = group_fixed_duration(span, 0.010);
    CHECK(g5.size() == 5);
    // middle window [0.02, 0.03) is empty but present
    CHECK(g5[2].empty());

    // concatenated groups contain exactly the input events
    std::size_t total = 0;
    for (const auto& g : g5) total += g.size();
    CHECK(total == span.size());

    // ten settings on the duration sweep
    int settings = 0;
    for (int ms = 10; ms <= 100; ms += 10) ++settings;
    CHECK(settings == 10);
}

TEST_CASE("group_between_frames: ratio 0 reproduces plain grouping bit-exactly") {
    Rng rng(77);
    std::vector<Event> ev;
    for (int i = 0; i < 500; ++i) {
        ev.push_back(Event{rng.uniform(0.0, 1.0),
                           static_cast<std::uint16_t>(rng.bounded(32)),
                           static_cast<std::uint16_t>(rng.bounded(32)),
                           static_cast<std::int8_t>(rng.uniform() < 0.5 ? 1 : -1)});
    }
    EventStream s = make_stream(ev);
    std::vector<double> times;
    for (int k = 0; k <= 20; ++k) times.push_back(k * 0.05);

    auto plain = group_between_frames(s, times, 0.0, 123);
    auto again = group_between_frames(s, times, 0.0, 999);  // seed must not matter
    REQUIRE(plain.groups.size() == again.groups.size());
    REQUIRE(plain.groups.size() == times.size() - 1);
    for (std::size_t i = 0; i < plain.groups.size(); ++i) {
        REQUIRE(plain.groups[i].size() == again.groups[i].size());
        for (std::size_t j = 0; j < plain.groups[i].size(); ++j) {
            CHECK(plain.groups[i].events()[j].t == again.groups[i].events()[j].t);
        }
    }
}

TEST_CASE("group_between_frames: discard count and survivors match a reference shuffle") {
    EventStream s = make_stream(ramp_events(100, 0.0, 0.0002));
    std::vector<double> times;
    for (int k = 0; k < 20; ++k) times.push_back(k * 0.001);

    const std::uint64_t seed = 4242;
    auto grouped = group_between_frames(s, times, 0.9, seed);
    // floor(0.9 * 20) = 18 = all interior frames -> one group
    CHECK(grouped.groups.size() == 1);
    CHECK(grouped.boundary_times.size() == 2);
    CHECK(grouped.boundary_times[0] == times.front());
    CHECK(grouped.boundary_times[1] == times.back());

    // independent reference shuffle for a partial discard
    const double ratio = 0.4;  // floor(0.4*20) = 8 removed, 12 survive
    auto partial = group_between_frames(s, times, ratio, seed);
    std::vector<std::size_t> interior;
    for (std::size_t i = 1; i + 1 < times.size(); ++i) interior.push_back(i);
    Rng ref_rng(seed);
    for (std::size_t i = interior.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(ref_rng.bounded(i));
        std::swap(interior[i - 1], interior[j]);
    }
    std::vector<bool> removed(times.size(), false);
    for (std::size_t i = 0; i < 8; ++i) removed[interior[i]] = true;
    std::vector<double> expect;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!removed[i]) expect.push_back(times[i]);
    }
    REQUIRE(partial.boundary_times.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(partial.boundary_times[i] == expect[i]);
    }

    // two frame times -> exactly one group regardless of ratio
    auto two = group_between_frames(s, {0.0, 0.02}, 1.0, seed);
    CHECK(two.groups.size() == 1);

    CHECK_THROWS_AS(group_between_frames(s, {0.1}, 0.0, 1), std::invalid_argument);
}

TEST_CASE("build_voxel_grid: hand-evaluated linear split") {
    // one +1 event at integer tau = 2.0 with B = 5: single cell
    {
        EventStream g = make_stream({Event{0.0, 3, 4, 1}, Event{0.5, 3, 4, 1},
                                     Event{1.0, 3, 4, 1}});
        // craft: use three events so t spans [0,1]; tau = t * 4
        VoxelGrid vg = build_voxel_grid(g, 5, {8, 8});
        CHECK(vg.cell(3, 4, 0) == doctest::Approx(1.0));
        CHECK(vg.cell(3, 4, 2) == doctest::Approx(1.0));  // t=0.5 -> tau=2.0 exactly
        CHECK(vg.cell(3, 4, 4) == doctest::Approx(1.0));
    }
    // one -1 event at tau = 1.25: bin 1 gets -0.75, bin 2 gets -0.25
    {
        std::vector<Event> ev = {Event{0.0, 0, 0, 1}, Event{1.0, 0, 0, 1},
                                 Event{0.3125, 5, 6, -1}};
        // tau = t * (B-1) = t * 4; 0.3125 * 4 = 1.25
        VoxelGrid vg = build_voxel_grid(make_stream(ev), 5, {8, 8});
        CHECK(vg.cell(5, 6, 1) == doctest::Approx(-0.75).epsilon(1e-12));
        CHECK(vg.cell(5, 6, 2) == doctest::Approx(-0.25).epsilon(1e-12));
    }
    // empty group
    {
        VoxelGrid vg = build_voxel_grid(make_stream({}), 5, {8, 8});
        CHECK(vg.data.sum() == 0.0);
        CHECK(vg.data.size() == 8 * 8 * 5);
    }
    // single timestamp group maps to tau = 0
    {
        VoxelGrid vg = build_voxel_grid(
            make_stream({Event{0.25, 1, 1, 1}, Event{0.25, 2, 2, -1}}), 5, {8, 8});
        CHECK(vg.cell(1, 1, 0) == 1.0);
        CHECK(vg.cell(2, 2, 0) == -1.0);
    }
    CHECK_THROWS_AS(build_voxel_grid(make_stream({}), 0, {8, 8}),
                    std::invalid_argument);
}

TEST_CASE("voxel grid properties: mass conservation, tie permutation, linearity") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Event> ev;
        const int n = 1 + static_cast<int>(rng.bounded(200));
        double polarity_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            Event e{rng.uniform(0.0, 0.5), static_cast<std::uint16_t>(rng.bounded(16)),
                    static_cast<std::uint16_t>(rng.bounded(16)),
                    static_cast<std::int8_t>(rng.uniform() < 0.5 ? 1 : -1)};
            polarity_sum += e.p;
            ev.push_back(e);
        }
        VoxelGrid vg = build_voxel_grid(make_stream(ev, 16, 16), 5, {16, 16});
        CHECK(std::fabs(vg.data.sum() - polarity_sum) <= 1e-6);

        // linearity probe: duplicating every event doubles every cell
        std::vector<Event> doubled = ev;
        doubled.insert(doubled.end(), ev.begin(), ev.end());
        VoxelGrid vg2 = build_voxel_grid(make_stream(doubled, 16, 16), 5, {16, 16});
        for (std::size_t i = 0; i < vg.data.size(); ++i) {
            CHECK(vg2.data[i] == doctest::Approx(2.0 * vg.data[i]).epsilon(1e-12));
        }
    }

    // equal timestamps: order of insertion must not matter
    std::vector<Event> base = {Event{0.0, 0, 0, 1}, Event{0.5, 3, 3, 1},
                               Event{0.5, 4, 4, -1}, Event{1.0, 5, 5, 1}};
    std::vector<Event> permuted = {base[3], base[2], base[1], base[0]};
    VoxelGrid a = build_voxel_grid(make_stream(base, 8, 8), 5, {8, 8});
    VoxelGrid b = build_voxel_grid(make_stream(permuted, 8, 8), 5, {8, 8});
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("duration grouping covers the input exactly") {
    Rng rng(5);
    std::vector<Event> ev;
    for (int i = 0; i < 300; ++i) {
        ev.push_back(Event{rng.uniform(0.0, 0.3),
                           static_cast<std::uint16_t>(rng.bounded(8)),
                           static_cast<std::uint16_t>(rng.bounded(8)),
                           static_cast<std::int8_t>(rng.uniform() < 0.5 ? 1 : -1)});
    }
    EventStream s = make_stream(ev, 8, 8);
    auto groups = group_fixed_duration(s, 0.02);
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    CHECK(total == s.size());
}
