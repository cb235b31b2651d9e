#include "e2v/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace e2v::eval {

double mse(const Array& rec, const Array& gt) {
    if (!rec.same_shape(gt)) throw std::invalid_argument("mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const double d = rec[i] - gt[i];
        s += d * d;
    }
    return s / static_cast<double>(rec.size());
}

double ssim(const Array& rec, const Array& gt, int window, double k1, double k2,
            double sigma) {
    if (!rec.same_shape(gt)) throw std::invalid_argument("ssim: shape mismatch");
    const int h = rec.dim(0), w = rec.dim(1);
    if (h < window || w < window) {
        throw std::invalid_argument("ssim: image smaller than window");
    }
    // gaussian window, normalized
    std::vector<double> g(static_cast<std::size_t>(window));
    const int r = window / 2;
    double gsum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - r;
        g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        gsum += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= gsum;

    const double c1 = k1 * k1, c2 = k2 * k2;
    const int oh = h - window + 1, ow = w - window + 1;
    double total = 0.0;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int wy = 0; wy < window; ++wy) {
                for (int wx = 0; wx < window; ++wx) {
                    const double wgt = g[static_cast<std::size_t>(wy)] *
                                       g[static_cast<std::size_t>(wx)];
                    const double va = rec.at(y + wy, x + wx);
                    const double vb = gt.at(y + wy, x + wx);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    return total / static_cast<double>(oh * ow);
}

double perceptual_distance(const Array& a, const Array& b,
                           const loss::PerceptualExtractor& phi) {
    const std::vector<Array> fa = phi.forward_const(a);
    const std::vector<Array> fb = phi.forward_const(b);
    double total = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        double s = 0.0;
        for (std::size_t i = 0; i < fa[l].size(); ++i) {
            const double d = fa[l][i] - fb[l][i];
            s += d * d;
        }
        total += std::sqrt(s / static_cast<double>(fa[l].size()));
    }
    return total;
}

std::optional<std::size_t> match_nearest_frame(double recon_time,
                                               const std::vector<double>& gt_times,
                                               double tolerance) {
    if (gt_times.empty()) return std::nullopt;
    auto it = std::lower_bound(gt_times.begin(), gt_times.end(), recon_time);
    std::optional<std::size_t> best;
    double best_dt = 0.0;
    // lower candidate first, so an equidistant pair resolves to the earlier index
    if (it != gt_times.begin()) {
        const std::size_t idx = static_cast<std::size_t>(it - gt_times.begin()) - 1;
        best = idx;
        best_dt = std::fabs(gt_times[idx] - recon_time);
    }
    if (it != gt_times.end()) {
        const std::size_t idx = static_cast<std::size_t>(it - gt_times.begin());
        const double dt = std::fabs(gt_times[idx] - recon_time);
        if (!best || dt < best_dt) {
            best = idx;
            best_dt = dt;
        }
    }
    if (best && best_dt <= tolerance) return best;
    return std::nullopt;
}

void EvalReport::finalize() {
    mse = ssim = lpips_proxy = 0.0;
    matched = skipped = 0;
    int counted = 0;
    for (const auto& s : per_sequence) {
        matched += s.matched;
        skipped += s.skipped;
        if (s.matched > 0) {
            mse += s.mse;
            ssim += s.ssim;
            lpips_proxy += s.lpips_proxy;
            ++counted;
        }
    }
    if (counted > 0) {
        mse /= counted;
        ssim /= counted;
        lpips_proxy /= counted;
    }
}

std::vector<Array> reconstruct_grids(net::E2vModel& model,
                                     const std::vector<GridItem>& items) {
    ag::NoGradGuard ng;
    net::RecurrentState state;
    const int bins = model.config().model.input_bins;
    std::vector<Array> frames;
    Array prev;
    for (const auto& item : items) {
        if (item.voxel_chw.dim(0) != bins) {
            throw std::invalid_argument("reconstruct_grids: bin count mismatch");
        }
        if (prev.empty()) {
            prev = Array({item.voxel_chw.dim(1), item.voxel_chw.dim(2)});
        }
        Array frame = model.infer_frame(item.voxel_chw, state, prev);
        prev = frame;
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<GridItem> make_grid_items(const synth::SceneSequence& seq,
                                      const GroupingSpec& grouping) {
    const Resolution res = seq.events.resolution();
    std::vector<GridItem> items;
    switch (grouping.mode) {
        case Grouping::BetweenFrames: {
            FrameGrouping fg =
                group_between_frames(seq.events, seq.frame_times,
                                     grouping.discard_ratio, grouping.discard_seed);
            for (std::size_t i = 0; i < fg.groups.size(); ++i) {
                GridItem item;
                item.voxel_chw =
                    build_voxel_grid(fg.groups[i], grouping.bins, res).to_chw();
                item.recon_time = fg.boundary_times[i + 1];
                items.push_back(std::move(item));
            }
            break;
        }
        case Grouping::FixedDuration: {
            auto groups = group_fixed_duration(seq.events, grouping.dt);
            const double t0 = seq.events.t_first();
            for (std::size_t i = 0; i < groups.size(); ++i) {
                GridItem item;
                item.voxel_chw =
                    build_voxel_grid(groups[i], grouping.bins, res).to_chw();
                item.recon_time = t0 + grouping.dt * static_cast<double>(i + 1);
                items.push_back(std::move(item));
            }
            break;
        }
        case Grouping::FixedCount: {
            auto groups = group_fixed_count(seq.events, grouping.count);
            for (const auto& grp : groups) {
                GridItem item;
                item.voxel_chw = build_voxel_grid(grp, grouping.bins, res).to_chw();
                item.recon_time = grp.t_last();
                items.push_back(std::move(item));
            }
            break;
        }
    }
    return items;
}

SequenceScore score_sequence(net::E2vModel& model, const synth::SceneSequence& seq,
                             int seq_index, const GroupingSpec& grouping,
                             const loss::PerceptualExtractor& phi,
                             double tolerance) {
    SequenceScore score;
    score.sequence = seq_index;
    std::vector<GridItem> items = make_grid_items(seq, grouping);
    std::vector<Array> frames = reconstruct_grids(model, items);
    double sum_mse = 0, sum_ssim = 0, sum_lpips = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        auto match = match_nearest_frame(items[i].recon_time, seq.frame_times, tolerance);
        if (!match) {
            ++score.skipped;
            continue;
        }
        const Array& gt = seq.frames[*match];
        sum_mse += mse(frames[i], gt);
        sum_ssim += ssim(frames[i], gt);
        sum_lpips += perceptual_distance(frames[i], gt, phi);
        ++score.matched;
    }
    if (score.matched > 0) {
        score.mse = sum_mse / score.matched;
        score.ssim = sum_ssim / score.matched;
        score.lpips_proxy = sum_lpips / score.matched;
    }
    return score;
}

EvalReport evaluate_dataset(net::E2vModel& model,
                            const std::vector<synth::SceneSequence>& seqs,
                            const GroupingSpec& grouping,
                            const loss::PerceptualExtractor& phi, double tolerance,
                            int jobs) {
    EvalReport report;
    report.per_sequence.resize(seqs.size());
    if (jobs <= 1 || seqs.size() <= 1) {
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            report.per_sequence[i] = score_sequence(model, seqs[i], static_cast<int>(i),
                                                    grouping, phi, tolerance);
        }
    } else {
        // each worker gets its own model copy; recurrent inference stays
        // sequential inside one sequence
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const int n_workers = std::min<int>(jobs, static_cast<int>(seqs.size()));
        for (int t = 0; t < n_workers; ++t) {
            pool.emplace_back([&, t]() {
                (void)t;
                net::E2vModel local(model.config());
                for (std::size_t i = 0; i < local.params().items().size(); ++i) {
                    local.params().items()[i].second->value =
                        model.params().items()[i].second->value;
                }
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= seqs.size()) break;
                    report.per_sequence[i] = score_sequence(
                        local, seqs[i], static_cast<int>(i), grouping, phi, tolerance);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    report.finalize();
    return report;
}

std::vector<double> default_axis_settings(const std::string& axis,
                                          double sparsity_scale) {
    std::vector<double> settings;
    if (axis == "sparsity") {
        for (int n = 5000; n <= 45000; n += 5000) {
            settings.push_back(std::max(1.0, std::round(n * sparsity_scale)));
        }
    } else if (axis == "rate") {
        for (int ms = 10; ms <= 100; ms += 10) settings.push_back(ms / 1000.0);
    } else if (axis == "irregularity") {
        for (int i = 0; i <= 9; ++i) settings.push_back(i / 10.0);
    } else {
        throw std::invalid_argument("unknown robustness axis: " + axis);
    }
    return settings;
}

RobustnessCurve robustness_sweep(net::E2vModel& model,
                                 const std::vector<synth::SceneSequence>& seqs,
                                 const std::string& axis,
                                 const std::vector<double>& settings,
                                 const loss::PerceptualExtractor& phi,
                                 double tolerance, int jobs,
                                 std::uint64_t discard_seed) {
    RobustnessCurve curve;
    curve.axis = axis;
    for (double setting : settings) {
        GroupingSpec grouping;
        grouping.bins = model.config().model.input_bins;
        if (axis == "sparsity") {
            grouping.mode = Grouping::FixedCount;
            grouping.count = static_cast<std::size_t>(setting);
        } else if (axis == "rate") {
            grouping.mode = Grouping::FixedDuration;
            grouping.dt = setting;
        } else if (axis == "irregularity") {
            grouping.mode = Grouping::BetweenFrames;
            grouping.discard_ratio = setting;
            grouping.discard_seed = discard_seed;
        } else {
            throw std::invalid_argument("unknown robustness axis: " + axis);
        }
        EvalReport report = evaluate_dataset(model, seqs, grouping, phi, tolerance, jobs);
        RobustnessPoint point;
        point.setting = setting;
        point.matched = report.matched;
        if (report.matched == 0) {
            point.missing = true;
        } else {
            point.mse = report.mse;
            point.ssim = report.ssim;
        }
        curve.points.push_back(point);
    }
    return curve;
}

void write_report_csv(const std::string& dir, const EvalReport& report) {
    {
        std::ofstream os(dir + "/report.csv");
        os << "sequence,mse,ssim,lpips_proxy,matched,skipped\n";
        os.precision(12);
        for (const auto& s : report.per_sequence) {
            os << s.sequence << ',' << s.mse << ',' << s.ssim << ',' << s.lpips_proxy
               << ',' << s.matched << ',' << s.skipped << '\n';
        }
    }
    {
        std::ofstream os(dir + "/aggregate.csv");
        os << "mse,ssim,lpips_proxy,matched,skipped\n";
        os.precision(12);
        os << report.mse << ',' << report.ssim << ',' << report.lpips_proxy << ','
           << report.matched << ',' << report.skipped << '\n';
    }
}

void write_curve_csv(const std::string& path, const RobustnessCurve& curve,
                     const std::string& header_note) {
    std::ofstream os(path);
    if (!header_note.empty()) os << "# " << header_note << '\n';
    os << "setting,mse,ssim,matched,missing\n";
    os.precision(12);
    for (const auto& p : curve.points) {
        os << p.setting << ',' << p.mse << ',' << p.ssim << ',' << p.matched << ','
           << (p.missing ? 1 : 0) << '\n';
    }
}

}  // namespace e2v::eval
