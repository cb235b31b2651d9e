#include "e2v/pipeline.hpp"

#include <cmath>
#include <stdexcept>

#include "e2v/io.hpp"

namespace e2v::net {

Array normalize_voxel(const Array& voxel_chw) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < voxel_chw.size(); ++i) {
        const double v = voxel_chw[i];
        if (v != 0.0) {
            sum += v;
            sum_sq += v * v;
            ++count;
        }
    }
    if (count == 0) return voxel_chw;
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    const double sd = std::sqrt(std::max(var, 0.0));
    if (sd < 1e-12) return voxel_chw;
    Array out(voxel_chw.shape());
    for (std::size_t i = 0; i < voxel_chw.size(); ++i) {
        const double v = voxel_chw[i];
        out[i] = v != 0.0 ? (v - mean) / sd : 0.0;
    }
    return out;
}

E2vModel::E2vModel(const PipelineConfig& cfg) : cfg_(cfg) {
    Rng rng(derive_seed(cfg.init_seed, "model_init"));
    backbone_ = Backbone(cfg.model, params_, rng);
    cfa_ = sem::Cfa(params_, "cfa", cfg.model.bottleneck_channels, rng);
    sff_ = sem::Sff(params_, "sff", cfg.model.bottleneck_channels, rng);
    xattn_ = sem::CrossAttentionFusion(params_, "xattn",
                                       cfg.model.bottleneck_channels, rng);
}

E2vModel::StepOut E2vModel::step(const Array& voxel_chw, RecurrentState& state,
                                 const Array& prev_frame) {
    ag::Var voxel = ag::constant(normalize_voxel(voxel_chw));
    Backbone::Encoded enc = backbone_.encoder_forward(voxel, state);

    StepOut out;
    out.f_e = enc.f_e;
    ag::Var fused;
    if (cfg_.fusion == "none") {
        out.f_semantic = enc.f_e;
        fused = enc.f_e;
    } else {
        out.f_semantic = cfa_.forward(enc.f_e);
        if (cfg_.fusion == "sff") {
            fused = sff_.forward(out.f_semantic, enc.f_e);
        } else if (cfg_.fusion == "add") {
            fused = ag::add(enc.f_e, out.f_semantic);
        } else if (cfg_.fusion == "mean") {
            fused = ag::scale(ag::add(enc.f_e, out.f_semantic), 0.5);
        } else if (cfg_.fusion == "xattn") {
            fused = xattn_.forward(out.f_semantic, enc.f_e);
        } else {
            throw std::invalid_argument("unknown fusion mode: " + cfg_.fusion);
        }
    }

    std::vector<ag::Var> filters;
    if (cfg_.model.use_cfhm) {
        filters = backbone_.cfhm_generate(voxel, ag::constant(prev_frame));
    }
    out.frame = backbone_.reconstruct_frame(fused, enc.skips, filters);
    return out;
}

Array E2vModel::infer_frame(const Array& voxel_chw, RecurrentState& state,
                            const Array& prev_frame) {
    ag::NoGradGuard ng;
    return step(voxel_chw, state, prev_frame).frame->value;
}

void E2vModel::save(const std::string& path) const {
    io::Checkpoint ckpt;
    ckpt.config["input_bins"] = std::to_string(cfg_.model.input_bins);
    ckpt.config["base_channels"] = std::to_string(cfg_.model.base_channels);
    ckpt.config["num_encoders"] = std::to_string(cfg_.model.num_encoders);
    ckpt.config["num_residual_blocks"] = std::to_string(cfg_.model.num_residual_blocks);
    ckpt.config["bottleneck_channels"] = std::to_string(cfg_.model.bottleneck_channels);
    ckpt.config["use_cfhm"] = cfg_.model.use_cfhm ? "1" : "0";
    ckpt.config["fusion"] = cfg_.fusion;
    ckpt.config["init_seed"] = std::to_string(cfg_.init_seed);
    for (const auto& [name, var] : params_.items()) {
        ckpt.params.emplace_back(name, var->value);
    }
    io::write_checkpoint(path, ckpt);
}

E2vModel E2vModel::load(const std::string& path) {
    io::Checkpoint ckpt = io::read_checkpoint(path);
    auto need = [&](const std::string& key) {
        auto it = ckpt.config.find(key);
        if (it == ckpt.config.end()) {
            throw std::runtime_error("checkpoint missing config key: " + key);
        }
        return it->second;
    };
    PipelineConfig cfg;
    cfg.model.input_bins = std::stoi(need("input_bins"));
    cfg.model.base_channels = std::stoi(need("base_channels"));
    cfg.model.num_encoders = std::stoi(need("num_encoders"));
    cfg.model.num_residual_blocks = std::stoi(need("num_residual_blocks"));
    cfg.model.bottleneck_channels = std::stoi(need("bottleneck_channels"));
    cfg.model.use_cfhm = need("use_cfhm") == "1";
    cfg.fusion = need("fusion");
    cfg.init_seed = std::stoull(need("init_seed"));

    E2vModel model(cfg);
    if (ckpt.params.size() != model.params_.items().size()) {
        throw std::runtime_error("checkpoint parameter count mismatch");
    }
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const auto& [name, arr] = ckpt.params[i];
        const auto& [expect_name, var] = model.params_.items()[i];
        if (name != expect_name || !arr.same_shape(var->value)) {
            throw std::runtime_error("checkpoint parameter mismatch at " + name);
        }
        var->value = arr;
    }
    return model;
}

}  // namespace e2v::net
