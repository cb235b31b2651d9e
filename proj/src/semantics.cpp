#include "e2v/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "e2v/io.hpp"
#include "e2v/synthgen.hpp"

namespace e2v::sem {

Cfa::Cfa(nn::ParamStore& ps, const std::string& prefix, int channels, Rng& rng)
    : c1_(ps, prefix + ".c1", channels, channels, 3, 1, rng),
      c2_(ps, prefix + ".c2", channels, channels, 3, 1, rng) {}

Var Cfa::forward(const Var& f_e) const {
    Var x = ag::gelu(c1_.forward(f_e));
    x = ag::gelu(c2_.forward(x));
    return ag::instance_norm(x);
}

Sff::Sff(nn::ParamStore& ps, const std::string& prefix, int channels, Rng& rng)
    : attn_(ps, prefix + ".attn", 2 * channels, 1, 3, 1, rng),
      gate_(ps, prefix + ".gate", 2 * channels, channels, 1, 1, rng) {
    bn_gamma_ = ps.add(prefix + ".bn.gamma", Array({1}, 1.0));
    bn_beta_ = ps.add(prefix + ".bn.beta", Array({1}));
}

Var Sff::forward(const Var& f_semantic, const Var& f_e) const {
    if (!f_semantic->value.same_shape(f_e->value)) {
        throw std::invalid_argument("sff_forward: shape mismatch");
    }
    Var cat = ag::concat_channels(f_semantic, f_e);
    // batch size is 1 throughout, so BatchNorm runs in per-instance mode
    Var a = ag::instance_norm(attn_.forward(cat));
    a = ag::add_channel(ag::mul_channel(a, bn_gamma_), bn_beta_);
    a = ag::gelu(a);
    Var a_map = ag::reshape(a, {a->value.dim(1), a->value.dim(2)});

    Var g = ag::sigmoid(
        ag::reshape(gate_.forward(ag::global_avg_pool(cat)), {f_e->value.dim(0)}));

    Var weighted = ag::mul_channel(ag::mul_spatial(f_semantic, a_map), g);
    return ag::add(f_e, weighted);
}

CrossAttentionFusion::CrossAttentionFusion(nn::ParamStore& ps,
                                           const std::string& prefix, int channels,
                                           Rng& rng)
    : q_(ps, prefix + ".q", channels, channels, 1, 1, rng),
      k_(ps, prefix + ".k", channels, channels, 1, 1, rng),
      v_(ps, prefix + ".v", channels, channels, 1, 1, rng),
      channels_(channels) {}

Var CrossAttentionFusion::forward(const Var& f_semantic, const Var& f_e) const {
    if (!f_semantic->value.same_shape(f_e->value)) {
        throw std::invalid_argument("cross_attention: shape mismatch");
    }
    const int c = f_e->value.dim(0), h = f_e->value.dim(1), w = f_e->value.dim(2);
    Var q = ag::flatten_spatial_rows(q_.forward(f_e));        // (HW, C)
    Var k = ag::flatten_spatial_rows(k_.forward(f_semantic));  // (HW, C)
    Var v = ag::flatten_spatial_rows(v_.forward(f_semantic));  // (HW, C)
    Var attn = ag::softmax_rows(
        ag::scale(ag::matmul(q, ag::transpose(k)), 1.0 / std::sqrt(double(channels_))));
    Var mixed = ag::matmul(attn, v);  // (HW, C)
    // back to (C, H, W)
    Var chw = ag::transpose(mixed);
    chw = ag::reshape(chw, {c, h, w});
    return ag::add(f_e, chw);
}

// ---------------------------------------------------------------------------
// oracle teacher
// ---------------------------------------------------------------------------

Array resize_bilinear(const Array& img, int out_h, int out_w) {
    const bool chw = img.ndim() == 3;
    const int c = chw ? img.dim(0) : 1;
    const int h = chw ? img.dim(1) : img.dim(0);
    const int w = chw ? img.dim(2) : img.dim(1);
    Array out(chw ? std::vector<int>{c, out_h, out_w} : std::vector<int>{out_h, out_w});
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
    for (int ci = 0; ci < c; ++ci) {
        const double* src = img.data() + static_cast<std::size_t>(ci) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(ci) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const double fy = y * sy;
            const int y0 = std::min(static_cast<int>(fy), h - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const double fx = x * sx;
                const int x0 = std::min(static_cast<int>(fx), w - 1);
                const int x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                dst[static_cast<std::size_t>(y) * out_w + x] =
                    (1 - wy) * ((1 - wx) * src[static_cast<std::size_t>(y0) * w + x0] +
                                wx * src[static_cast<std::size_t>(y0) * w + x1]) +
                    wy * ((1 - wx) * src[static_cast<std::size_t>(y1) * w + x0] +
                          wx * src[static_cast<std::size_t>(y1) * w + x1]);
            }
        }
    }
    return out;
}

Array resize_nearest(const Array& img, int out_h, int out_w) {
    const int h = img.dim(0), w = img.dim(1);
    Array out({out_h, out_w});
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / out_w));
            out.at(y, x) = img.at(sy, sx);
        }
    }
    return out;
}

namespace {
// conv stride 2, kernel 3, pad 1 on plain arrays (teacher path carries no
// gradients, so it stays off the autodiff tape entirely)
Array conv_s2_gelu(const Array& x, const Array& w, const Array& b) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0);
    const int ho = h / 2, wo = wd / 2;
    Array out({cout, ho, wo});
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double s = b[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 + kx - 1;
                            if (ix < 0 || ix >= wd) continue;
                            s += w.at(co, ci, ky, kx) * x.at(ci, iy, ix);
                        }
                    }
                }
                out.at(co, oy, ox) = 0.5 * s * (1.0 + std::erf(s * 0.70710678118654752));
            }
        }
    }
    return out;
}
}  // namespace

OracleTeacher::OracleTeacher(const TeacherConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg.seed, "oracle_teacher"));
    const int mid = 16;
    w1_ = nn::he_init({mid, 1, 3, 3}, 9, rng);
    b1_ = Array({mid});
    w2_ = nn::he_init({cfg.channels, mid, 3, 3}, mid * 9, rng);
    b2_ = Array({cfg.channels});
}

Array OracleTeacher::feature_of(const Array& frame) const {
    Array x({1, frame.dim(0), frame.dim(1)});
    std::copy(frame.data(), frame.data() + frame.size(), x.data());
    Array f = conv_s2_gelu(x, w1_, b1_);
    f = conv_s2_gelu(f, w2_, b2_);
    if (f.dim(1) != cfg_.feature_h || f.dim(2) != cfg_.feature_w) {
        f = resize_bilinear(f, cfg_.feature_h, cfg_.feature_w);
    }
    return f;
}

TeacherBundle OracleTeacher::bundle(const Array& frame,
                                    const std::vector<Array>& sprite_masks) const {
    TeacherBundle out;
    out.feature = feature_of(frame);
    out.masks = Array({cfg_.n_masks, cfg_.mask_h, cfg_.mask_w});
    out.category_ids.assign(static_cast<std::size_t>(cfg_.n_masks), -1);

    // rank by visible area, descending; ties keep lower sprite index first
    std::vector<std::pair<double, int>> ranked;
    for (std::size_t i = 0; i < sprite_masks.size(); ++i) {
        const double area = sprite_masks[i].sum();
        if (area > 0.0) ranked.emplace_back(-area, static_cast<int>(i));
    }
    std::stable_sort(ranked.begin(), ranked.end());

    const int keep = std::min<int>(cfg_.n_masks, static_cast<int>(ranked.size()));
    for (int k = 0; k < keep; ++k) {
        const int si = ranked[static_cast<std::size_t>(k)].second;
        Array small = resize_nearest(sprite_masks[static_cast<std::size_t>(si)],
                                     cfg_.mask_h, cfg_.mask_w);
        for (int y = 0; y < cfg_.mask_h; ++y) {
            for (int x = 0; x < cfg_.mask_w; ++x) {
                out.masks.at(k, y, x) = small.at(y, x) != 0.0 ? 1.0 : 0.0;
            }
        }
        out.category_ids[static_cast<std::size_t>(k)] = si;
    }
    return out;
}

// ---------------------------------------------------------------------------
// cache precompute
// ---------------------------------------------------------------------------

PrecomputeReport precompute_teacher(const std::string& dataset_dir,
                                    const std::string& cache_dir,
                                    const OracleTeacher& teacher) {
    namespace fs = std::filesystem;
    PrecomputeReport report;
    std::vector<std::string> seq_names;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
            seq_names.push_back(entry.path().filename().string());
        }
    }
    std::sort(seq_names.begin(), seq_names.end());
    if (seq_names.empty()) {
        report.errors.push_back("no sequences found in " + dataset_dir);
        return report;
    }

    for (const auto& name : seq_names) {
        const std::string seq_dir = dataset_dir + "/" + name;
        const std::string out_dir = cache_dir + "/" + name;
        try {
            synth::SceneSequence seq = synth::read_sequence_dir(seq_dir);
            io::ensure_dir(out_dir);
            for (std::size_t k = 0; k < seq.frames.size(); ++k) {
                char rec_name[32];
                std::snprintf(rec_name, sizeof(rec_name), "/%06zu.tch", k);
                const std::string rec_path = out_dir + rec_name;
                if (io::file_exists(rec_path)) {
                    ++report.frames_skipped;
                    continue;
                }
                TeacherBundle b = teacher.bundle(seq.frames[k], seq.masks[k]);
                io::TeacherRecord rec;
                rec.feature = std::move(b.feature);
                rec.masks = std::move(b.masks);
                rec.category_ids = std::move(b.category_ids);
                io::write_teacher_record(rec_path, rec);
                ++report.frames_written;
            }
            std::ofstream marker(out_dir + "/cache_complete");
            marker << seq.frames.size() << "\n";
            ++report.sequences_done;
        } catch (const std::exception& e) {
            report.errors.push_back(name + ": " + e.what());
        }
    }
    return report;
}

}  // namespace e2v::sem
