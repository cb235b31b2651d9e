#include "e2v/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>

#include "e2v/io.hpp"
#include "e2v/rng.hpp"

namespace e2v::synth {

namespace {

double sample_bilinear(const Array& img, double y, double x) {
    const int h = img.dim(0), w = img.dim(1);
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto px = [&](int yy, int xx) {
        return img.at(std::clamp(yy, 0, h - 1), std::clamp(xx, 0, w - 1));
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

struct SpriteAt {
    double px, py;  // top-left position at a given time
};

SpriteAt sprite_at(const Sprite& s, double t) {
    return {s.x0 + s.vx * t, s.y0 + s.vy * t};
}

}  // namespace

SceneSequence render_sequence(const SceneSpec& spec) {
    const int W = spec.resolution.width, H = spec.resolution.height;
    const int frame_count =
        static_cast<int>(std::lround(spec.duration * spec.frame_rate));
    if (frame_count < 2) {
        throw std::invalid_argument("render_sequence: need at least 2 frames");
    }
    if (spec.background.ndim() != 2 || spec.background.dim(0) != H ||
        spec.background.dim(1) != W) {
        throw std::invalid_argument("render_sequence: background shape mismatch");
    }

    // draw order: ascending z, later sprites overwrite
    std::vector<std::size_t> order(spec.sprites.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return spec.sprites[a].z_order < spec.sprites[b].z_order;
    });

    SceneSequence seq;
    seq.epsilon = spec.contrast_threshold;
    seq.log_offset = spec.log_offset;
    std::vector<bool> ever_visible(spec.sprites.size(), false);

    for (int k = 0; k < frame_count; ++k) {
        const double t = static_cast<double>(k) / spec.frame_rate;
        seq.frame_times.push_back(t);
        Array frame = spec.background;
        // owner[i] = index into sprites of the top-most cover, or -1
        std::vector<int> owner(static_cast<std::size_t>(W) * H, -1);
        for (std::size_t oi : order) {
            const Sprite& s = spec.sprites[oi];
            const SpriteAt p = sprite_at(s, t);
            const int th = s.texture.dim(0), tw = s.texture.dim(1);
            const int ylo = std::max(0, static_cast<int>(std::ceil(p.py)));
            const int yhi = std::min(H - 1, static_cast<int>(std::floor(p.py + th - 1)));
            const int xlo = std::max(0, static_cast<int>(std::ceil(p.px)));
            const int xhi = std::min(W - 1, static_cast<int>(std::floor(p.px + tw - 1)));
            for (int y = ylo; y <= yhi; ++y) {
                for (int x = xlo; x <= xhi; ++x) {
                    frame.at(y, x) = sample_bilinear(s.texture, y - p.py, x - p.px);
                    owner[static_cast<std::size_t>(y) * W + x] = static_cast<int>(oi);
                }
            }
        }
        seq.frames.push_back(std::move(frame));

        std::vector<Array> frame_masks;
        for (std::size_t si = 0; si < spec.sprites.size(); ++si) {
            Array m({H, W});
            bool any = false;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    if (owner[static_cast<std::size_t>(y) * W + x] ==
                        static_cast<int>(si)) {
                        m.at(y, x) = 1.0;
                        any = true;
                    }
                }
            }
            ever_visible[si] = ever_visible[si] || any;
            frame_masks.push_back(std::move(m));
        }
        seq.masks.push_back(std::move(frame_masks));

        if (k > 0) {
            const double t_prev = static_cast<double>(k - 1) / spec.frame_rate;
            Array flow({2, H, W});
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const int oi = owner[static_cast<std::size_t>(y) * W + x];
                    if (oi >= 0) {
                        const Sprite& s = spec.sprites[static_cast<std::size_t>(oi)];
                        const SpriteAt pk = sprite_at(s, t);
                        const SpriteAt pk1 = sprite_at(s, t_prev);
                        flow.at(0, y, x) = pk1.px - pk.px;
                        flow.at(1, y, x) = pk1.py - pk.py;
                    }
                }
            }
            seq.flows.push_back(std::move(flow));
        }
    }

    for (std::size_t si = 0; si < spec.sprites.size(); ++si) {
        if (!ever_visible[si]) {
            std::cerr << "warning: sprite " << si
                      << " never visible inside the canvas\n";
        }
    }
    return seq;
}

EventStream simulate_events(const std::vector<Array>& frames,
                            const std::vector<double>& frame_times,
                            Resolution res, double epsilon, double log_offset) {
    if (frames.size() < 2) {
        throw std::invalid_argument("simulate_events: need at least 2 frames");
    }
    if (frames.size() != frame_times.size()) {
        throw std::invalid_argument("simulate_events: times/frames mismatch");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("simulate_events: epsilon must be > 0");
    for (std::size_t k = 1; k < frame_times.size(); ++k) {
        if (!(frame_times[k] > frame_times[k - 1])) {
            throw std::invalid_argument("simulate_events: frame times must increase");
        }
    }

    const int W = res.width, H = res.height;
    Array ref({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) ref.at(y, x) = std::log(frames[0].at(y, x) + log_offset);

    std::vector<Event> events;
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const double t_prev = frame_times[k - 1];
        const double dt = frame_times[k] - t_prev;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double target = std::log(frames[k].at(y, x) + log_offset);
                const double theta = target - ref.at(y, x);
                const double mag = std::fabs(theta);
                const int n = static_cast<int>(std::floor(mag / epsilon));
                if (n == 0) continue;
                const std::int8_t pol = theta > 0.0 ? 1 : -1;
                for (int j = 1; j <= n; ++j) {
                    // linear-in-time log intensity: the j-th crossing sits at
                    // the fraction (j * epsilon) / |theta| of the interval
                    const double frac = (static_cast<double>(j) * epsilon) / mag;
                    events.push_back(Event{t_prev + dt * frac,
                                           static_cast<std::uint16_t>(x),
                                           static_cast<std::uint16_t>(y), pol});
                }
                ref.at(y, x) += static_cast<double>(pol) * epsilon * n;
            }
        }
    }
    return EventStream(std::move(events), res);
}

Array reconstruct_log_intensity_oracle(const EventStream& events,
                                       const Array& first_frame, double epsilon,
                                       double log_offset) {
    Array log_img(first_frame.shape());
    for (std::size_t i = 0; i < log_img.size(); ++i) {
        log_img[i] = std::log(first_frame[i] + log_offset);
    }
    const int W = events.resolution().width;
    (void)W;
    for (const Event& e : events.events()) {
        log_img.at(e.y, e.x) += epsilon * static_cast<double>(e.p);
    }
    Array img(first_frame.shape());
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = std::exp(log_img[i]) - log_offset;
    }
    return img;
}

SceneSpec make_random_scene(Resolution res, double duration, double frame_rate,
                            int sprite_min, int sprite_max, double epsilon_min,
                            double epsilon_max, double log_offset,
                            std::uint64_t seed) {
    Rng rng(derive_seed(seed, "scene"));
    const int W = res.width, H = res.height;

    SceneSpec spec;
    spec.resolution = res;
    spec.duration = duration;
    spec.frame_rate = frame_rate;
    spec.log_offset = log_offset;
    spec.seed = seed;
    spec.contrast_threshold = rng.uniform(epsilon_min, epsilon_max);

    // Smooth background: coarse noise, bilinearly upsampled, mid-range values.
    const int gw = std::max(2, W / 8), gh = std::max(2, H / 8);
    Array grid({gh, gw});
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = rng.uniform(0.25, 0.75);
    spec.background = Array({H, W});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double gy = static_cast<double>(y) / (H - 1) * (gh - 1);
            const double gx = static_cast<double>(x) / (W - 1) * (gw - 1);
            spec.background.at(y, x) = sample_bilinear(grid, gy, gx);
        }
    }

    const int n_sprites = rng.uniform_int(sprite_min, sprite_max);
    for (int s = 0; s < n_sprites; ++s) {
        Sprite sp;
        const int tw = rng.uniform_int(W / 6, W / 3);
        const int th = rng.uniform_int(H / 6, H / 3);
        sp.texture = Array({th, tw});
        const double base = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.25)
                                                : rng.uniform(0.75, 1.0);
        for (std::size_t i = 0; i < sp.texture.size(); ++i) {
            sp.texture[i] = std::clamp(base + rng.uniform(-0.15, 0.15), 0.0, 1.0);
        }
        // keep the sprite inside the canvas for the whole take
        const double max_vx = (W - tw) / (2.0 * duration);
        const double max_vy = (H - th) / (2.0 * duration);
        sp.vx = rng.uniform(-max_vx, max_vx);
        sp.vy = rng.uniform(-max_vy, max_vy);
        const double dx = sp.vx * duration, dy = sp.vy * duration;
        const double xlo = std::max(0.0, -dx), xhi = std::min<double>(W - tw, W - tw - dx);
        const double ylo = std::max(0.0, -dy), yhi = std::min<double>(H - th, H - th - dy);
        sp.x0 = rng.uniform(xlo, std::max(xlo, xhi));
        sp.y0 = rng.uniform(ylo, std::max(ylo, yhi));
        sp.z_order = s;
        spec.sprites.push_back(std::move(sp));
    }
    return spec;
}

SceneSequence generate_sequence(const SceneSpec& spec) {
    SceneSequence seq = render_sequence(spec);
    seq.events = simulate_events(seq.frames, seq.frame_times, spec.resolution,
                                 spec.contrast_threshold, spec.log_offset);
    return seq;
}

void write_sequence_dir(const std::string& dir, const SceneSequence& seq,
                        const SceneSpec& spec) {
    io::ensure_dir(dir + "/frames");
    io::ensure_dir(dir + "/flow");
    io::ensure_dir(dir + "/masks");
    char name[64];
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        std::snprintf(name, sizeof(name), "%s/frames/%06zu.pgm", dir.c_str(), k);
        io::write_pgm(name, seq.frames[k]);
        for (std::size_t s = 0; s < seq.masks[k].size(); ++s) {
            std::snprintf(name, sizeof(name), "%s/masks/%06zu_s%02zu.pbm", dir.c_str(),
                          k, s);
            io::write_pbm(name, seq.masks[k][s]);
        }
    }
    for (std::size_t k = 0; k < seq.flows.size(); ++k) {
        std::snprintf(name, sizeof(name), "%s/flow/%06zu.flo2", dir.c_str(), k + 1);
        io::write_flo2(name, seq.flows[k]);
    }
    io::write_evb1(dir + "/events.evb1", seq.events);

    std::map<std::string, std::string> meta;
    meta["width"] = std::to_string(spec.resolution.width);
    meta["height"] = std::to_string(spec.resolution.height);
    meta["frame_count"] = std::to_string(seq.frames.size());
    meta["sprite_count"] = std::to_string(spec.sprites.size());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", spec.frame_rate);
    meta["frame_rate"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", spec.duration);
    meta["duration"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", spec.contrast_threshold);
    meta["epsilon"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", spec.log_offset);
    meta["log_offset"] = buf;
    meta["seed"] = std::to_string(spec.seed);
    io::write_meta(dir + "/meta.json", meta);
}

SceneSequence read_sequence_dir(const std::string& dir) {
    const auto meta = io::read_meta(dir + "/meta.json");
    auto need = [&](const std::string& key) {
        auto it = meta.find(key);
        if (it == meta.end()) {
            throw std::runtime_error("missing meta key '" + key + "' in " + dir);
        }
        return it->second;
    };
    const int W = std::stoi(need("width"));
    const int H = std::stoi(need("height"));
    const int frame_count = std::stoi(need("frame_count"));
    const int sprite_count = std::stoi(need("sprite_count"));
    const double frame_rate = std::stod(need("frame_rate"));

    SceneSequence seq;
    seq.epsilon = std::stod(need("epsilon"));
    seq.log_offset = std::stod(need("log_offset"));
    char name[64];
    for (int k = 0; k < frame_count; ++k) {
        std::snprintf(name, sizeof(name), "%s/frames/%06d.pgm", dir.c_str(), k);
        seq.frames.push_back(io::read_pgm(name));
        seq.frame_times.push_back(static_cast<double>(k) / frame_rate);
        std::vector<Array> frame_masks;
        for (int s = 0; s < sprite_count; ++s) {
            std::snprintf(name, sizeof(name), "%s/masks/%06d_s%02d.pbm", dir.c_str(), k, s);
            frame_masks.push_back(io::read_pbm(name));
        }
        seq.masks.push_back(std::move(frame_masks));
        if (k > 0) {
            std::snprintf(name, sizeof(name), "%s/flow/%06d.flo2", dir.c_str(), k);
            seq.flows.push_back(io::read_flo2(name, H, W));
        }
    }
    seq.events = io::read_evb1(dir + "/events.evb1");
    if (seq.events.resolution().width != W || seq.events.resolution().height != H) {
        throw std::runtime_error("event resolution mismatch in " + dir);
    }
    return seq;
}

}  // namespace e2v::synth
