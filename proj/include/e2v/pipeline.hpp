#pragma once

#include <string>

#include "e2v/model.hpp"
#include "e2v/semantics.hpp"

namespace e2v::net {

// Feature fusion selected at construction: "sff" (gated attention), "add",
// "mean", "xattn", or "none" (decoder consumes F_e directly; the
// direct-distillation ablation).
struct PipelineConfig {
    ModelConfig model;
    std::string fusion = "sff";
    std::uint64_t init_seed = 1;
};

// Backbone + CFA + fusion block as one trainable unit. All components are
// constructed in a fixed order from one seed so runs are reproducible and
// checkpoints byte-stable; ablated components still register parameters,
// which keeps initial weights identical across fusion modes for a given seed.
class E2vModel {
public:
    explicit E2vModel(const PipelineConfig& cfg);

    struct StepOut {
        ag::Var frame;       // (H, W) in (0,1)
        ag::Var f_e;         // encoder bottleneck feature
        ag::Var f_semantic;  // CFA output (= f_e when fusion == "none")
    };

    // One recurrent step. voxel: (B,H,W) raw polarity grid (normalized
    // internally); prev_frame: last reconstruction, zeros at sequence start.
    StepOut step(const Array& voxel_chw, RecurrentState& state,
                 const Array& prev_frame);

    // Tape-free reconstruction for inference paths.
    Array infer_frame(const Array& voxel_chw, RecurrentState& state,
                      const Array& prev_frame);

    nn::ParamStore& params() { return params_; }
    const PipelineConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return backbone_; }

    void save(const std::string& path) const;
    static E2vModel load(const std::string& path);

private:
    PipelineConfig cfg_;
    nn::ParamStore params_;
    Backbone backbone_;
    sem::Cfa cfa_;
    sem::Sff sff_;
    sem::CrossAttentionFusion xattn_;
};

// Per-grid standardization of the nonzero cells; zeros stay zero and an
// all-zero grid is returned unchanged.
Array normalize_voxel(const Array& voxel_chw);

}  // namespace e2v::net
