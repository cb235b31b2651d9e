#include "e2v/model.hpp"

#include <cmath>
#include <stdexcept>

namespace e2v::net {

int ModelConfig::encoder_channels(int level) const {
    return base_channels << level;
}

int ModelConfig::decoder_channels(int level) const {
    return level <= 1 ? base_channels : (base_channels << (level - 1));
}

void ModelConfig::validate() const {
    if (num_encoders < 1) throw std::invalid_argument("num_encoders must be >= 1");
    if (input_bins < 1) throw std::invalid_argument("input_bins must be >= 1");
    if (base_channels < 1 || bottleneck_channels < 1) {
        throw std::invalid_argument("channel counts must be positive");
    }
}

Backbone::Backbone(const ModelConfig& cfg, nn::ParamStore& ps, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int cin = cfg_.input_bins;
    for (int i = 0; i < cfg_.num_encoders; ++i) {
        const int cout = cfg_.encoder_channels(i);
        EncoderLevel lvl;
        lvl.down = nn::Conv2d(ps, "backbone.enc" + std::to_string(i) + ".down", cin,
                              cout, 5, 2, rng);
        lvl.lstm = nn::ConvLSTMCell(ps, "backbone.enc" + std::to_string(i) + ".lstm",
                                    cout, cout, rng);
        encoders_.push_back(std::move(lvl));
        cin = cout;
    }
    for (int i = 0; i < cfg_.num_residual_blocks; ++i) {
        resblocks_.emplace_back(ps, "backbone.res" + std::to_string(i), cin, rng);
    }
    to_bottleneck_ =
        nn::Conv2d(ps, "backbone.bottleneck", cin, cfg_.bottleneck_channels, 3, 1, rng);

    for (int i = 0; i < cfg_.num_encoders; ++i) {
        const int prev = (i == cfg_.num_encoders - 1) ? cfg_.bottleneck_channels
                                                      : cfg_.decoder_channels(i + 1);
        const int skip = (i == 0) ? cfg_.input_bins : cfg_.encoder_channels(i - 1);
        decoders_.emplace_back(ps, "backbone.dec" + std::to_string(i), prev + skip,
                               cfg_.decoder_channels(i), 3, 1, rng);
    }
    head_ = nn::Conv2d(ps, "backbone.head", cfg_.decoder_channels(0), 1, 3, 1, rng);

    hyper1_ = nn::Conv2d(ps, "backbone.cfhm.c1", cfg_.input_bins + 1, 8, 3, 2, rng);
    hyper2_ = nn::Conv2d(ps, "backbone.cfhm.c2", 8, 16, 3, 2, rng);
    for (int i = 0; i < cfg_.num_encoders; ++i) {
        const int ch = cfg_.decoder_channels(i);
        nn::Conv2d head(ps, "backbone.cfhm.head" + std::to_string(i), 16, ch * 9, 1, 1,
                        rng);
        // start at the identity filter: zero weights, delta bias
        head.w->value.fill(0.0);
        for (int c = 0; c < ch; ++c) head.b->value[static_cast<std::size_t>(c) * 9 + 4] = 1.0;
        hyper_heads_.push_back(std::move(head));
    }
}

Backbone::Encoded Backbone::encoder_forward(const Var& voxel,
                                            RecurrentState& state) const {
    if (voxel->value.ndim() != 3 || voxel->value.dim(0) != cfg_.input_bins) {
        throw std::invalid_argument("encoder_forward: voxel bins mismatch");
    }
    const int H = voxel->value.dim(1), W = voxel->value.dim(2);
    const int down = 1 << cfg_.num_encoders;
    if (H % down != 0 || W % down != 0) {
        throw std::invalid_argument("encoder_forward: spatial dims not divisible by 2^levels");
    }

    if (state.empty()) {
        int h = H, w = W;
        for (int i = 0; i < cfg_.num_encoders; ++i) {
            h /= 2;
            w /= 2;
            const int ch = cfg_.encoder_channels(i);
            state.levels.emplace_back(ag::constant(Array({ch, h, w})),
                                      ag::constant(Array({ch, h, w})));
        }
    }

    Encoded out;
    out.skips.push_back(voxel);
    Var x = voxel;
    for (int i = 0; i < cfg_.num_encoders; ++i) {
        Var y = encoders_[static_cast<std::size_t>(i)].down.forward(x);
        auto [h_next, c_next] = encoders_[static_cast<std::size_t>(i)].lstm.forward(
            y, state.levels[static_cast<std::size_t>(i)].first,
            state.levels[static_cast<std::size_t>(i)].second);
        state.levels[static_cast<std::size_t>(i)] = {h_next, c_next};
        x = h_next;
        if (i + 1 < cfg_.num_encoders) out.skips.push_back(x);
    }
    for (const auto& rb : resblocks_) x = rb.forward(x);
    out.f_e = to_bottleneck_.forward(x);
    return out;
}

std::vector<Var> Backbone::cfhm_generate(const Var& voxel, const Var& prev_frame) const {
    Var prev = prev_frame;
    if (prev->value.ndim() == 2) {
        prev = ag::reshape(prev, {1, prev->value.dim(0), prev->value.dim(1)});
    }
    Var x = ag::concat_channels(voxel, prev);
    x = ag::relu(hyper1_.forward(x));
    x = ag::relu(hyper2_.forward(x));
    Var ctx = ag::global_avg_pool(x);
    std::vector<Var> filters;
    for (int i = cfg_.num_encoders - 1; i >= 0; --i) {
        Var f = hyper_heads_[static_cast<std::size_t>(i)].forward(ctx);
        filters.push_back(ag::reshape(f, {cfg_.decoder_channels(i), 3, 3}));
    }
    return filters;
}

Var Backbone::decoder_forward(const Var& f, const Var& skip,
                              const std::optional<Var>& dyn_filter, int level) const {
    if (skip->value.dim(1) != 2 * f->value.dim(1) ||
        skip->value.dim(2) != 2 * f->value.dim(2)) {
        throw std::invalid_argument("decoder_forward: skip dims must be 2x input dims");
    }
    Var up = ag::upsample_bilinear2x(f);
    Var y = decoders_[static_cast<std::size_t>(level)].forward(
        ag::concat_channels(up, skip));
    if (dyn_filter) y = ag::conv2d_depthwise(y, *dyn_filter, 1);
    return ag::relu(y);
}

Var Backbone::reconstruct_frame(const Var& f_e_prime, const std::vector<Var>& skips,
                                const std::vector<Var>& cfhm_filters) const {
    Var x = f_e_prime;
    std::size_t fi = 0;
    for (int i = cfg_.num_encoders - 1; i >= 0; --i, ++fi) {
        std::optional<Var> dyn;
        if (!cfhm_filters.empty()) dyn = cfhm_filters[fi];
        x = decoder_forward(x, skips[static_cast<std::size_t>(i)], dyn, i);
    }
    Var img = ag::sigmoid(head_.forward(x));
    return ag::reshape(img, {img->value.dim(1), img->value.dim(2)});
}

}  // namespace e2v::net
