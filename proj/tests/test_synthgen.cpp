#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "e2v/synthgen.hpp"
#include "e2v/rng.hpp"
#include "test_support.hpp"

using namespace e2v;
using namespace e2v::synth;

namespace {

SceneSpec single_sprite_spec(double vx, double vy, double frame_rate = 50.0,
                             double duration = 0.5) {
    SceneSpec spec;
    spec.resolution = {64, 64};
    spec.duration = duration;
    spec.frame_rate = frame_rate;
    spec.background = Array({64, 64}, 0.5);
    Sprite s;
    s.texture = Array({12, 12}, 0.9);
    s.x0 = 10.0;
    s.y0 = 20.0;
    s.vx = vx;
    s.vy = vy;
    s.z_order = 0;
    spec.sprites.push_back(s);
    spec.contrast_threshold = 0.3;
    spec.log_offset = 1e-3;
    return spec;
}

}  // namespace

TEST_CASE("static scene: zero flows, identical frames, zero events") {
    SceneSpec spec = single_sprite_spec(0.0, 0.0);
    SceneSequence seq = render_sequence(spec);
    REQUIRE(seq.frames.size() == 25);  // 0.5 s at 50 Hz
    REQUIRE(seq.flows.size() == 24);
    for (const auto& flow : seq.flows) {
        for (std::size_t i = 0; i < flow.size(); ++i) CHECK(flow[i] == 0.0);
    }
    for (std::size_t k = 1; k < seq.frames.size(); ++k) {
        for (std::size_t i = 0; i < seq.frames[k].size(); ++i) {
            CHECK(seq.frames[k][i] == seq.frames[0][i]);
        }
    }
    EventStream ev = simulate_events(seq.frames, seq.frame_times, spec.resolution,
                                     spec.contrast_threshold, spec.log_offset);
    CHECK(ev.empty());
}

TEST_CASE("rightward motion of 1 px/frame gives backward flow (-1, 0) on the sprite") {
    // 50 px/s at 50 Hz = 1 px per frame
    SceneSpec spec = single_sprite_spec(50.0, 0.0);
    SceneSequence seq = render_sequence(spec);
    const Array& flow = seq.flows[4];  // between frames 4 and 5
    const auto& mask = seq.masks[5][0];
    int counted = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            if (mask.at(y, x) != 0.0) {
                CHECK(flow.at(0, y, x) == doctest::Approx(-1.0).epsilon(1e-9));
                CHECK(flow.at(1, y, x) == doctest::Approx(0.0).epsilon(1e-9));
                ++counted;
            } else {
                CHECK(flow.at(0, y, x) == 0.0);
            }
        }
    }
    CHECK(counted > 50);
}

TEST_CASE("flow warp consistency on non-occluded pixels") {
    SceneSpec spec = single_sprite_spec(42.0, -17.0);
    SceneSequence seq = render_sequence(spec);
    const std::size_t k = 10;
    const Array& flow = seq.flows[k - 1];
    // non-occluded: pixel owner is the same surface in both frames at the
    // warped position
    ag::NoGradGuard ng;
    ag::Var warped = ag::warp_bilinear(ag::constant(seq.frames[k - 1]), flow);
    int checked = 0;
    for (int y = 2; y < 62; ++y) {
        for (int x = 2; x < 62; ++x) {
            const bool on_sprite_k = seq.masks[k][0].at(y, x) != 0.0;
            const double sx = x + flow.at(0, y, x);
            const double sy = y + flow.at(1, y, x);
            const int ix = static_cast<int>(std::lround(sx));
            const int iy = static_cast<int>(std::lround(sy));
            if (ix < 1 || ix > 62 || iy < 1 || iy > 62) continue;
            const bool on_sprite_prev = seq.masks[k - 1][0].at(iy, ix) != 0.0;
            // skip boundary pixels where bilinear edges blur ownership
            bool near_edge = false;
            for (int dy = -1; dy <= 1 && !near_edge; ++dy) {
                for (int dx = -1; dx <= 1 && !near_edge; ++dx) {
                    if ((seq.masks[k][0].at(y + dy, x + dx) != 0.0) != on_sprite_k ||
                        (seq.masks[k - 1][0].at(iy + dy, ix + dx) != 0.0) !=
                            on_sprite_prev) {
                        near_edge = true;
                    }
                }
            }
            if (near_edge || on_sprite_k != on_sprite_prev) continue;
            CHECK(std::fabs(warped->value.at(y, x) - seq.frames[k].at(y, x)) <= 5e-2);
            ++checked;
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("event crossing schedule: theta = 2.5 epsilon emits 2 events at the"
          " interpolated times") {
    const double eps = 0.2;
    const double c = 1e-3;
    // one pixel steps so that theta = 2.5 * eps
    Array f0({4, 4}, 0.5);
    Array f1 = f0;
    const double target_log = std::log(0.5 + c) + 2.5 * eps;
    f1.at(2, 2) = std::exp(target_log) - c;
    EventStream ev = simulate_events({f0, f1}, {0.0, 1.0}, {4, 4}, eps, c);
    REQUIRE(ev.size() == 2);
    CHECK(ev.events()[0].p == 1);
    CHECK(ev.events()[1].p == 1);
    CHECK(ev.events()[0].t == doctest::Approx(1.0 / 2.5).epsilon(1e-9));
    CHECK(ev.events()[1].t == doctest::Approx(2.0 / 2.5).epsilon(1e-9));

    // dense-time scalar oracle: integrate the linear log ramp and record
    // crossings of k*eps
    const double theta = target_log - std::log(0.5 + c);
    std::vector<double> crossings;
    for (int k = 1; k * eps <= theta + 1e-15; ++k) {
        crossings.push_back(k * eps / theta);
    }
    REQUIRE(crossings.size() == 2);
    for (std::size_t i = 0; i < crossings.size(); ++i) {
        CHECK(ev.events()[i].t == doctest::Approx(crossings[i]).epsilon(1e-9));
    }
}

TEST_CASE("theta exactly epsilon emits exactly one event") {
    const double c = 1e-3;
    Array f0({2, 2}, 0.4);
    Array f1 = f0;
    f1.at(0, 0) = 0.7;
    // epsilon equals the actually-computed log step, bit for bit
    const double eps = std::log(0.7 + c) - std::log(0.4 + c);
    EventStream ev = simulate_events({f0, f1}, {0.0, 0.01}, {2, 2}, eps, c);
    REQUIRE(ev.size() == 1);
    CHECK(ev.events()[0].p == 1);
}

TEST_CASE("round trip: oracle reconstruction within the quantization bound") {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        SceneSpec spec = make_random_scene({32, 32}, 1.0, 25.0, 2, 3, 0.1, 1.5,
                                           1e-3, seed);
        SceneSequence seq = generate_sequence(spec);
        Array rec = reconstruct_log_intensity_oracle(seq.events, seq.frames.front(),
                                                     spec.contrast_threshold,
                                                     spec.log_offset);
        const Array& last = seq.frames.back();
        for (std::size_t i = 0; i < rec.size(); ++i) {
            const double err = std::fabs(std::log(rec[i] + spec.log_offset) -
                                         std::log(last[i] + spec.log_offset));
            CHECK(err <= spec.contrast_threshold + 1e-9);
        }
    }
}

TEST_CASE("oracle identities: zero events, single event") {
    Array f0({4, 4}, 0.25);
    EventStream empty({}, {4, 4});
    Array same = reconstruct_log_intensity_oracle(empty, f0, 0.3, 1e-3);
    for (std::size_t i = 0; i < f0.size(); ++i) {
        CHECK(same[i] == doctest::Approx(f0[i]).epsilon(1e-12));
    }
    EventStream one({Event{0.0, 1, 2, 1}}, {4, 4});
    Array bumped = reconstruct_log_intensity_oracle(one, f0, 0.3, 1e-3);
    CHECK(std::log(bumped.at(2, 1) + 1e-3) - std::log(f0.at(2, 1) + 1e-3) ==
          doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("polarity symmetry on a monotone ramp") {
    std::vector<Array> frames;
    std::vector<double> times;
    for (int k = 0; k < 5; ++k) {
        frames.emplace_back(std::vector<int>{4, 4}, 0.2 + 0.15 * k);
        times.push_back(k * 0.01);
    }
    EventStream fwd = simulate_events(frames, times, {4, 4}, 0.21, 1e-3);
    std::vector<Array> rev(frames.rbegin(), frames.rend());
    EventStream bwd = simulate_events(rev, times, {4, 4}, 0.21, 1e-3);
    REQUIRE(fwd.size() == bwd.size());
    REQUIRE(fwd.size() > 0);
    for (const Event& e : fwd.events()) CHECK(e.p == 1);
    for (const Event& e : bwd.events()) CHECK(e.p == -1);
}

TEST_CASE("doubling sprite speed never decreases the event count") {
    for (double v : {10.0, 20.0}) {
        SceneSpec slow = single_sprite_spec(v, 0.0, 50.0, 0.4);
        SceneSpec fast = single_sprite_spec(2 * v, 0.0, 50.0, 0.4);
        auto n_slow = generate_sequence(slow).events.size();
        auto n_fast = generate_sequence(fast).events.size();
        CHECK(n_fast >= n_slow);
    }
}

TEST_CASE("masks are disjoint and inside the canvas") {
    SceneSpec spec = make_random_scene({48, 48}, 0.4, 25.0, 3, 4, 0.2, 0.8, 1e-3, 99);
    SceneSequence seq = render_sequence(spec);
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        Array occupancy({48, 48});
        for (const auto& m : seq.masks[k]) {
            for (std::size_t i = 0; i < m.size(); ++i) occupancy[i] += m[i];
        }
        for (std::size_t i = 0; i < occupancy.size(); ++i) CHECK(occupancy[i] <= 1.0);
    }
}

TEST_CASE("simulate_events rejects non-monotone frame times") {
    Array f({2, 2}, 0.5);
    CHECK_THROWS_AS(simulate_events({f, f, f}, {0.0, 0.02, 0.01}, {2, 2}, 0.3, 1e-3),
                    std::invalid_argument);
}

TEST_CASE("sequence directory round trip") {
    SceneSpec spec = make_random_scene({32, 32}, 0.4, 25.0, 2, 2, 0.3, 0.5, 1e-3, 5);
    SceneSequence seq = generate_sequence(spec);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "e2v_seqdir_test").string();
    std::filesystem::remove_all(dir);
    write_sequence_dir(dir, seq, spec);
    SceneSequence back = read_sequence_dir(dir);
    REQUIRE(back.frames.size() == seq.frames.size());
    REQUIRE(back.flows.size() == seq.flows.size());
    REQUIRE(back.masks.size() == seq.masks.size());
    CHECK(back.events.size() == seq.events.size());
    CHECK(back.epsilon == doctest::Approx(spec.contrast_threshold));
    // frames quantized to 8 bits
    for (std::size_t i = 0; i < seq.frames[3].size(); ++i) {
        CHECK(std::fabs(back.frames[3][i] - seq.frames[3][i]) <= 0.51 / 255.0);
    }
    // flows at f32 precision
    for (std::size_t i = 0; i < seq.flows[2].size(); ++i) {
        CHECK(back.flows[2][i] == doctest::Approx(seq.flows[2][i]).epsilon(1e-6));
    }
}
