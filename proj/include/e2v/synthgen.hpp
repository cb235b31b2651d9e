#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2v/array.hpp"
#include "e2v/events.hpp"

namespace e2v::synth {

// A textured patch on a linear trajectory. Positions are continuous; the
// patch is bilinearly resampled every frame.
struct Sprite {
    Array texture;  // (h, w) in [0,1]
    double x0 = 0.0, y0 = 0.0;  // top-left at t = 0
    double vx = 0.0, vy = 0.0;  // pixels per second
    int z_order = 0;            // larger draws on top
};

struct SceneSpec {
    Resolution resolution;
    double duration = 2.0;
    double frame_rate = 50.0;
    Array background;  // (H, W) in [0,1]
    std::vector<Sprite> sprites;
    double contrast_threshold = 0.35;  // epsilon
    double log_offset = 1e-3;          // c
    std::uint64_t seed = 0;
};

struct SceneSequence {
    std::vector<Array> frames;               // (H,W) intensity
    std::vector<Array> flows;                // (2,H,W), frame k -> k-1, k >= 1
    std::vector<std::vector<Array>> masks;   // [frame][sprite] binary (H,W)
    EventStream events;
    std::vector<double> frame_times;
    double epsilon = 0.0;
    double log_offset = 0.0;
};

// Frames, flows and masks only; call simulate_events for the event stream.
SceneSequence render_sequence(const SceneSpec& spec);

EventStream simulate_events(const std::vector<Array>& frames,
                            const std::vector<double>& frame_times,
                            Resolution res, double epsilon, double log_offset);

// Round-trip verifier: integrates epsilon * p per event onto log(I0 + c).
Array reconstruct_log_intensity_oracle(const EventStream& events, const Array& first_frame,
                                       double epsilon, double log_offset);

// Seeded random multi-object scene (textured background, 2-4 moving sprites).
SceneSpec make_random_scene(Resolution res, double duration, double frame_rate,
                            int sprite_min, int sprite_max, double epsilon_min,
                            double epsilon_max, double log_offset, std::uint64_t seed);

// Full pipeline for one sequence: render + simulate.
SceneSequence generate_sequence(const SceneSpec& spec);

// Sequence directory layout: frames/%06d.pgm, flow/%06d.flo2,
// masks/%06d_s%02d.pbm, events.evb1, meta.json.
void write_sequence_dir(const std::string& dir, const SceneSequence& seq,
                        const SceneSpec& spec);
SceneSequence read_sequence_dir(const std::string& dir);

}  // namespace e2v::synth
