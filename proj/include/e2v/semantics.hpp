#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2v/nn.hpp"

namespace e2v::sem {

using ag::Var;

// Maps event features into the teacher's semantic space:
// Conv -> GELU -> Conv -> GELU -> InstanceNorm, shape preserving.
class Cfa {
public:
    Cfa() = default;
    Cfa(nn::ParamStore& ps, const std::string& prefix, int channels, Rng& rng);
    Var forward(const Var& f_e) const;

private:
    nn::Conv2d c1_, c2_;
};

// Semantic-aware feature fusion:
//   A = GELU(BN(Conv(concat(f_semantic, f_e))))          spatial weight map
//   g = sigmoid(Conv(GAP(concat(f_semantic, f_e))))      channel gate
//   F_e' = f_e + g ⊙ A ⊙ f_semantic
class Sff {
public:
    Sff() = default;
    Sff(nn::ParamStore& ps, const std::string& prefix, int channels, Rng& rng);
    Var forward(const Var& f_semantic, const Var& f_e) const;

private:
    nn::Conv2d attn_;
    Var bn_gamma_, bn_beta_;
    nn::Conv2d gate_;
};

// Single-head cross attention over spatial positions (ablation fusion).
class CrossAttentionFusion {
public:
    CrossAttentionFusion() = default;
    CrossAttentionFusion(nn::ParamStore& ps, const std::string& prefix, int channels,
                         Rng& rng);
    Var forward(const Var& f_semantic, const Var& f_e) const;

private:
    nn::Conv2d q_, k_, v_;
    int channels_ = 0;
};

// Per-frame teacher output: feature aligned to F_e's shape plus top-N
// categorical binary masks.
struct TeacherBundle {
    Array feature;  // (C, h_f, w_f)
    Array masks;    // (N, h, w) binary
    std::vector<std::int32_t> category_ids;  // length N, -1 = padding
};

struct TeacherConfig {
    int channels = 64;   // must equal F_e channels
    int feature_h = 16;  // F_e spatial dims
    int feature_w = 16;
    int n_masks = 10;
    int mask_h = 16;
    int mask_w = 16;
    std::uint64_t seed = 0;
};

// Frozen seeded random convolutional pyramid applied to the ground-truth
// frame; the desk-scale stand-in for a foundation-model encoder. Only the
// pairwise feature structure matters downstream, never pointwise values.
class OracleTeacher {
public:
    explicit OracleTeacher(const TeacherConfig& cfg);

    TeacherBundle bundle(const Array& frame,
                         const std::vector<Array>& sprite_masks) const;
    Array feature_of(const Array& frame) const;
    const TeacherConfig& config() const { return cfg_; }

private:
    TeacherConfig cfg_;
    Array w1_, b1_, w2_, b2_;  // frozen pyramid weights
};

struct PrecomputeReport {
    int sequences_done = 0;
    int frames_written = 0;
    int frames_skipped = 0;  // already cached
    std::vector<std::string> errors;
};

// Writes one TCH1 record per frame under <cache_dir>/<sequence>/%06d.tch and a
// "cache_complete" marker per sequence. Existing records are kept (resume).
PrecomputeReport precompute_teacher(const std::string& dataset_dir,
                                    const std::string& cache_dir,
                                    const OracleTeacher& teacher);

// Resize helpers shared with tests.
Array resize_bilinear(const Array& img, int out_h, int out_w);
Array resize_nearest(const Array& img, int out_h, int out_w);

}  // namespace e2v::sem
