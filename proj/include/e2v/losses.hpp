#pragma once

#include <cstdint>
#include <vector>

#include "e2v/autograd.hpp"

namespace e2v::loss {

using ag::Var;

// Frozen seeded random convolutional feature stages standing in for a
// pretrained perceptual network. Stage 0 is the largest layer; its spatial
// size equals the categorical mask size.
class PerceptualExtractor {
public:
    PerceptualExtractor(int input_h, int input_w, std::uint64_t seed);

    // differentiable path (input (H,W) or (1,H,W))
    std::vector<Var> forward(const Var& image) const;
    // tape-free path for targets and evaluation
    std::vector<Array> forward_const(const Array& image) const;

    int stages() const { return 3; }
    int stage0_h() const { return stage0_h_; }
    int stage0_w() const { return stage0_w_; }

private:
    Var w0_, b0_, w1_, b1_, w2_, b2_;  // frozen constants
    int stage0_h_ = 0, stage0_w_ = 0;
};

struct LossWeights {
    double lambda = 1.8;  // distillation weight
    double alpha = 50.0;  // occlusion sharpness
};

// Masked perceptual reconstruction loss: stage 0 is gated by the categorical
// mask union, the remaining stages stay unmasked. With masked_stage0 = false
// every stage is unmasked (the plain-perceptual ablation).
Var semantic_perceptual_loss(const Var& rec, const Array& gt, const Array& masks,
                             const PerceptualExtractor& phi,
                             bool masked_stage0 = true);

// Union over the N mask channels: a pixel counts as semantic if any category
// covers it.
Array mask_union(const Array& masks);

// Mean absolute difference of the (HW, HW) similarity matrices of the
// channel-normalized features.
Var relational_distillation_loss(const Var& f_semantic, const Array& f_sam);

// Eq-form occlusion weights: exp(-alpha * (gt_k - warp(gt_km1))^2), per pixel.
Array occlusion_weights(const Array& gt_k, const Array& gt_km1, const Array& flow,
                        double alpha);

// Occlusion-weighted L1 between the current reconstruction and the warped
// previous reconstruction.
Var temporal_consistency_loss(const Var& rec_k, const Var& rec_km1,
                              const Array& gt_k, const Array& gt_km1,
                              const Array& flow, double alpha);

struct LossParts {
    Var semantic;
    Var temporal;  // may be null on the first step of a sequence
    Var distill;
};

Var total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace e2v::loss
