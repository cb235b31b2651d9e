#pragma once

#include <optional>
#include <string>
#include <vector>

#include "e2v/events.hpp"
#include "e2v/losses.hpp"
#include "e2v/pipeline.hpp"
#include "e2v/synthgen.hpp"

namespace e2v::eval {

double mse(const Array& rec, const Array& gt);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1. Computed over positions where the full window fits.
double ssim(const Array& rec, const Array& gt, int window = 11, double k1 = 0.01,
            double k2 = 0.03, double sigma = 1.5);

// Stage-wise RMS feature distance, summed over stages. Reported as
// "lpips_proxy" everywhere; not comparable to pretrained-LPIPS numbers.
double perceptual_distance(const Array& a, const Array& b,
                           const loss::PerceptualExtractor& phi);

// Nearest ground-truth frame within the tolerance (seconds); equidistant
// neighbors resolve to the earlier index. Empty when nothing is close enough.
std::optional<std::size_t> match_nearest_frame(double recon_time,
                                               const std::vector<double>& gt_times,
                                               double tolerance = 1e-3);

struct SequenceScore {
    int sequence = 0;
    double mse = 0.0;
    double ssim = 0.0;
    double lpips_proxy = 0.0;
    int matched = 0;
    int skipped = 0;
};

struct EvalReport {
    std::vector<SequenceScore> per_sequence;
    double mse = 0.0;
    double ssim = 0.0;
    double lpips_proxy = 0.0;
    int matched = 0;
    int skipped = 0;
    void finalize();  // aggregates = mean of per-sequence values
};

// A reconstruction request: one voxel grid and the time it stands for.
struct GridItem {
    Array voxel_chw;
    double recon_time = 0.0;
};

// Recurrent inference over one sequence worth of grids (state reset at start).
std::vector<Array> reconstruct_grids(net::E2vModel& model,
                                     const std::vector<GridItem>& items);

enum class Grouping { BetweenFrames, FixedDuration, FixedCount };

struct GroupingSpec {
    Grouping mode = Grouping::BetweenFrames;
    double dt = 0.02;            // FixedDuration
    std::size_t count = 1000;    // FixedCount
    double discard_ratio = 0.0;  // BetweenFrames
    std::uint64_t discard_seed = 0;
    int bins = 5;
};

std::vector<GridItem> make_grid_items(const synth::SceneSequence& seq,
                                      const GroupingSpec& grouping);

// Score one sequence: reconstruct, match frames within tolerance, average.
SequenceScore score_sequence(net::E2vModel& model, const synth::SceneSequence& seq,
                             int seq_index, const GroupingSpec& grouping,
                             const loss::PerceptualExtractor& phi,
                             double tolerance = 1e-3);

EvalReport evaluate_dataset(net::E2vModel& model,
                            const std::vector<synth::SceneSequence>& seqs,
                            const GroupingSpec& grouping,
                            const loss::PerceptualExtractor& phi,
                            double tolerance = 1e-3, int jobs = 1);

struct RobustnessPoint {
    double setting = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    int matched = 0;
    bool missing = false;  // no matched frames at this setting
};

struct RobustnessCurve {
    std::string axis;
    std::vector<RobustnessPoint> points;
};

// axis: "sparsity" (9 fixed-count settings), "rate" (10 duration settings),
// "irregularity" (10 discard ratios; 0.0 equals the standard evaluation).
RobustnessCurve robustness_sweep(net::E2vModel& model,
                                 const std::vector<synth::SceneSequence>& seqs,
                                 const std::string& axis,
                                 const std::vector<double>& settings,
                                 const loss::PerceptualExtractor& phi,
                                 double tolerance = 1e-3, int jobs = 1,
                                 std::uint64_t discard_seed = 0);

std::vector<double> default_axis_settings(const std::string& axis,
                                          double sparsity_scale);

void write_report_csv(const std::string& dir, const EvalReport& report);
void write_curve_csv(const std::string& path, const RobustnessCurve& curve,
                     const std::string& header_note);

}  // namespace e2v::eval
