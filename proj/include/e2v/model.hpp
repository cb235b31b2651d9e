#pragma once

#include <optional>
#include <string>
#include <vector>

#include "e2v/nn.hpp"

namespace e2v::net {

using ag::Var;

struct ModelConfig {
    int input_bins = 5;
    int base_channels = 16;
    int num_encoders = 2;
    int num_residual_blocks = 2;
    int bottleneck_channels = 64;  // channel width of F_e
    bool use_cfhm = true;

    // decoder output channels, level 0 is full resolution
    int decoder_channels(int level) const;
    int encoder_channels(int level) const;
    void validate() const;
};

// Per-level ConvLSTM hidden/cell pairs. Zeroed at sequence start; carried as
// graph variables inside a BPTT window.
struct RecurrentState {
    std::vector<std::pair<Var, Var>> levels;
    bool empty() const { return levels.empty(); }
    void reset() { levels.clear(); }
};

// Strided-conv + ConvLSTM encoders, residual bottleneck, bilinear-upsample
// decoders and a dynamic-filter hypernetwork on the decoder path.
class Backbone {
public:
    Backbone() = default;
    Backbone(const ModelConfig& cfg, nn::ParamStore& ps, Rng& rng);

    struct Encoded {
        Var f_e;
        std::vector<Var> skips;  // skips[0] = input voxel, skips[i] = enc level i-1
    };

    // voxel: (B, H, W); spatial dims must divide by 2^num_encoders.
    Encoded encoder_forward(const Var& voxel, RecurrentState& state) const;

    // Per-decoder-level depthwise 3x3 filters from (voxel ⊕ previous frame).
    // Deepest level first, matching the decode order.
    std::vector<Var> cfhm_generate(const Var& voxel, const Var& prev_frame) const;

    // One decoder level: bilinear 2x upsample, concat skip, conv, ReLU; the
    // dynamic filter, when present, post-multiplies the convolution.
    Var decoder_forward(const Var& f, const Var& skip,
                        const std::optional<Var>& dyn_filter, int level) const;

    // Full decoder stack plus sigmoid head; returns (H, W) in (0,1).
    Var reconstruct_frame(const Var& f_e_prime, const std::vector<Var>& skips,
                          const std::vector<Var>& cfhm_filters) const;

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    struct EncoderLevel {
        nn::Conv2d down;
        nn::ConvLSTMCell lstm;
    };
    std::vector<EncoderLevel> encoders_;
    std::vector<nn::ResidualBlock> resblocks_;
    nn::Conv2d to_bottleneck_;
    std::vector<nn::Conv2d> decoders_;  // indexed by level, 0 = full resolution
    nn::Conv2d head_;
    nn::Conv2d hyper1_, hyper2_;
    std::vector<nn::Conv2d> hyper_heads_;  // 1x1 heads emitting level filters
};

}  // namespace e2v::net
