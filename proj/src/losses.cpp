#include "e2v/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "e2v/nn.hpp"
#include "e2v/rng.hpp"

namespace e2v::loss {

namespace {
Var as_chw(const Var& image) {
    if (image->value.ndim() == 2) {
        return ag::reshape(image, {1, image->value.dim(0), image->value.dim(1)});
    }
    return image;
}
}  // namespace

PerceptualExtractor::PerceptualExtractor(int input_h, int input_w,
                                         std::uint64_t seed) {
    Rng rng(derive_seed(seed, "perceptual"));
    w0_ = ag::constant(nn::he_init({8, 1, 5, 5}, 25, rng));
    b0_ = ag::constant(Array({8}));
    w1_ = ag::constant(nn::he_init({16, 8, 3, 3}, 8 * 9, rng));
    b1_ = ag::constant(Array({16}));
    w2_ = ag::constant(nn::he_init({32, 16, 3, 3}, 16 * 9, rng));
    b2_ = ag::constant(Array({32}));
    stage0_h_ = (input_h + 2 * 2 - 5) / 4 + 1;
    stage0_w_ = (input_w + 2 * 2 - 5) / 4 + 1;
}

std::vector<Var> PerceptualExtractor::forward(const Var& image) const {
    Var x = as_chw(image);
    std::vector<Var> stages;
    x = ag::gelu(ag::conv2d(x, w0_, b0_, 4, 2));
    stages.push_back(x);
    x = ag::gelu(ag::conv2d(x, w1_, b1_, 2, 1));
    stages.push_back(x);
    x = ag::gelu(ag::conv2d(x, w2_, b2_, 2, 1));
    stages.push_back(x);
    return stages;
}

std::vector<Array> PerceptualExtractor::forward_const(const Array& image) const {
    ag::NoGradGuard ng;
    std::vector<Var> stages = forward(ag::constant(image));
    std::vector<Array> out;
    out.reserve(stages.size());
    for (const auto& s : stages) out.push_back(s->value);
    return out;
}

Array mask_union(const Array& masks) {
    if (masks.ndim() != 3) throw std::invalid_argument("mask_union: expected (N,h,w)");
    const int n = masks.dim(0), h = masks.dim(1), w = masks.dim(2);
    Array u({h, w});
    for (int k = 0; k < n; ++k) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (masks.at(k, y, x) != 0.0) u.at(y, x) = 1.0;
            }
        }
    }
    return u;
}

Var semantic_perceptual_loss(const Var& rec, const Array& gt, const Array& masks,
                             const PerceptualExtractor& phi, bool masked_stage0) {
    if (!rec->value.same_shape(gt) && rec->value.size() != shape_numel(gt.shape())) {
        throw std::invalid_argument("semantic_perceptual_loss: image shape mismatch");
    }
    std::vector<Var> rec_stages = phi.forward(rec);
    std::vector<Array> gt_stages = phi.forward_const(gt);

    Var total;
    for (int l = 0; l < phi.stages(); ++l) {
        Var diff = ag::sub(rec_stages[static_cast<std::size_t>(l)],
                           ag::constant(gt_stages[static_cast<std::size_t>(l)]));
        if (l == 0 && masked_stage0) {
            Array u = mask_union(masks);
            if (u.dim(0) != diff->value.dim(1) || u.dim(1) != diff->value.dim(2)) {
                throw std::invalid_argument(
                    "semantic_perceptual_loss: mask dims must match stage-0 dims");
            }
            diff = ag::mul_spatial(diff, ag::constant(u));
        }
        Var term = ag::mean_all(ag::square(diff));
        total = total ? ag::add(total, term) : term;
    }
    return total;
}

Var relational_distillation_loss(const Var& f_semantic, const Array& f_sam) {
    if (!f_semantic->value.same_shape(f_sam)) {
        throw std::invalid_argument("relational_distillation_loss: shape mismatch");
    }
    auto gram_of = [](const Var& f) {
        Var v = ag::flatten_spatial_rows(ag::channel_l2_normalize(f));
        return ag::matmul(v, ag::transpose(v));  // (HW, HW)
    };
    Var g_student = gram_of(f_semantic);
    Var g_teacher;
    {
        ag::NoGradGuard ng;
        g_teacher = gram_of(ag::constant(f_sam));
    }
    return ag::mean_all(ag::abs_v(ag::sub(g_student, ag::constant(g_teacher->value))));
}

Array occlusion_weights(const Array& gt_k, const Array& gt_km1, const Array& flow,
                        double alpha) {
    ag::NoGradGuard ng;
    Var warped = ag::warp_bilinear(ag::constant(gt_km1), flow);
    Array w(gt_k.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = gt_k[i] - warped->value[i];
        w[i] = std::exp(-alpha * d * d);
    }
    return w;
}

Var temporal_consistency_loss(const Var& rec_k, const Var& rec_km1,
                              const Array& gt_k, const Array& gt_km1,
                              const Array& flow, double alpha) {
    if (!rec_k->value.same_shape(rec_km1->value) || !rec_k->value.same_shape(gt_k)) {
        throw std::invalid_argument("temporal_consistency_loss: shape mismatch");
    }
    Array weights = occlusion_weights(gt_k, gt_km1, flow, alpha);
    Var diff = ag::abs_v(ag::sub(rec_k, ag::warp_bilinear(rec_km1, flow)));
    Var weighted = ag::mul(diff, ag::constant(weights));
    return ag::mean_all(weighted);
}

Var total_loss(const LossParts& parts, const LossWeights& weights) {
    Var total = parts.semantic;
    if (parts.temporal) total = ag::add(total, parts.temporal);
    total = ag::add(total, ag::scale(parts.distill, weights.lambda));
    return total;
}

}  // namespace e2v::loss
