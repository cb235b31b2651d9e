#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2v/errors.hpp"
#include "e2v/evalkit.hpp"
#include "e2v/losses.hpp"
#include "e2v/pipeline.hpp"
#include "e2v/synthgen.hpp"

namespace e2v::train {

struct TrainConfig {
    int seq_len = 16;
    int batch_size = 1;  // windows accumulated per optimizer step
    int epochs = 8;
    double learning_rate = 1e-3;
    double lambda = 1.8;
    double alpha = 50.0;
    std::uint64_t seed = 7;
    // full | direct_distill | fuse_add | fuse_mean | fuse_xattn | plain_perceptual
    std::string ablation = "full";
    int windows_per_seq = 1;
    double clip_norm = 1.0;
    std::uint64_t perceptual_seed = 9000;
    // top-N mask channels used by the semantic loss; the cache is area-ranked
    // so any n up to the cached N selects the n largest categories
    int n_masks = 10;
    void validate() const;
};

// fusion mode + supervision switches implied by an ablation name
struct AblationWiring {
    std::string fusion;      // pipeline fusion mode
    bool masked_stage0;      // semantic vs plain perceptual supervision
    bool distill_on_f_e;     // true only for direct distillation
};
AblationWiring ablation_wiring(const std::string& ablation);

struct StepLog {
    long step = 0;
    double semantic = 0.0;
    double temporal = 0.0;
    double distill = 0.0;
    double total = 0.0;
};

struct TrainResult {
    std::string checkpoint_path;
    std::vector<StepLog> steps;
};

// In-memory training set: sequences plus their per-frame teacher records.
struct LoadedDataset {
    std::vector<synth::SceneSequence> sequences;
    std::vector<std::string> names;
};

LoadedDataset load_dataset(const std::string& dataset_dir);

// Sequence window training per the run protocol: per window, reset the
// recurrent state, unroll seq_len steps, accumulate the combined loss, one
// Adam step (gradient accumulation across batch_size windows). Deterministic
// given config.seed.
TrainResult train(const std::string& dataset_dir, const std::string& cache_dir,
                  const std::string& out_dir, const net::ModelConfig& mcfg,
                  const TrainConfig& tcfg);

struct AblationRun {
    std::string ablation;
    std::uint64_t seed = 0;
    double mse = 0.0;
    double ssim = 0.0;
};

struct AblationTable {
    std::vector<AblationRun> runs;
    std::vector<std::string> ablations;
    std::vector<std::uint64_t> seeds;
    double median_mse(const std::string& ablation) const;
    const AblationRun& run(const std::string& ablation, std::uint64_t seed) const;
};

// Trains every (ablation, seed) pair, scores each on the held-out set and
// writes ablation_table.csv with per-seed values and deltas against "full".
AblationTable run_ablation_suite(const std::string& dataset_dir,
                                 const std::string& cache_dir,
                                 const std::string& heldout_dir,
                                 const std::string& out_dir,
                                 const net::ModelConfig& mcfg,
                                 const TrainConfig& base,
                                 const std::vector<std::string>& ablations,
                                 const std::vector<std::uint64_t>& seeds, int jobs);

}  // namespace e2v::train
