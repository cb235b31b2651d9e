#include "e2v/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "e2v/errors.hpp"
#include "e2v/io.hpp"

namespace e2v::train {

void TrainConfig::validate() const {
    if (seq_len < 2) throw UsageError("seq_len must be >= 2 (temporal loss needs pairs)");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (windows_per_seq < 1) throw UsageError("windows_per_seq must be >= 1");
    if (lambda < 0.0) throw UsageError("lambda must be >= 0");
    if (!(alpha > 0.0)) throw UsageError("alpha must be > 0");
    if (n_masks < 1) throw UsageError("n_masks must be >= 1");
    ablation_wiring(ablation);
}

AblationWiring ablation_wiring(const std::string& ablation) {
    if (ablation == "full") return {"sff", true, false};
    if (ablation == "direct_distill") return {"none", true, true};
    if (ablation == "fuse_add") return {"add", true, false};
    if (ablation == "fuse_mean") return {"mean", true, false};
    if (ablation == "fuse_xattn") return {"xattn", true, false};
    if (ablation == "plain_perceptual") return {"sff", false, false};
    throw UsageError("unknown ablation: " + ablation);
}

LoadedDataset load_dataset(const std::string& dataset_dir) {
    namespace fs = std::filesystem;
    LoadedDataset ds;
    if (!fs::is_directory(dataset_dir)) {
        throw DataError("dataset directory not found: " + dataset_dir);
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        ds.sequences.push_back(synth::read_sequence_dir(dataset_dir + "/" + name));
        ds.names.push_back(name);
    }
    if (ds.sequences.empty()) throw DataError("no sequences in " + dataset_dir);
    return ds;
}

namespace {

std::string teacher_record_path(const std::string& cache_dir, const std::string& seq,
                                std::size_t frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/%06zu.tch", frame);
    return cache_dir + "/" + seq + buf;
}

Array first_mask_channels(const Array& masks, int n) {
    const int total = masks.dim(0);
    const int keep = std::min(n, total);
    Array out({keep, masks.dim(1), masks.dim(2)});
    std::copy(masks.data(), masks.data() + out.size(), out.data());
    return out;
}

}  // namespace

TrainResult train(const std::string& dataset_dir, const std::string& cache_dir,
                  const std::string& out_dir, const net::ModelConfig& mcfg,
                  const TrainConfig& tcfg) {
    tcfg.validate();
    const AblationWiring wiring = ablation_wiring(tcfg.ablation);
    LoadedDataset ds = load_dataset(dataset_dir);

    const Resolution res = ds.sequences.front().events.resolution();
    for (const auto& seq : ds.sequences) {
        if (!(seq.events.resolution() == res)) {
            throw DataError("mixed resolutions in dataset " + dataset_dir);
        }
    }

    // split each sequence's events into per-frame-interval groups once
    std::vector<std::vector<EventStream>> step_groups;
    for (const auto& seq : ds.sequences) {
        step_groups.push_back(
            group_between_frames(seq.events, seq.frame_times, 0.0, 0).groups);
    }

    net::PipelineConfig pcfg;
    pcfg.model = mcfg;
    pcfg.fusion = wiring.fusion;
    pcfg.init_seed = derive_seed(tcfg.seed, "init");
    net::E2vModel model(pcfg);

    loss::PerceptualExtractor phi(res.height, res.width, tcfg.perceptual_seed);
    loss::LossWeights weights{tcfg.lambda, tcfg.alpha};
    nn::Adam opt(model.params(), tcfg.learning_rate, 0.9, 0.999, 1e-8, tcfg.clip_norm);

    io::ensure_dir(out_dir);
    std::ofstream loss_csv(out_dir + "/loss.csv");
    loss_csv << "step,semantic,temporal,distill,total\n";
    loss_csv.precision(12);

    TrainResult result;
    long step_counter = 0;
    int pending_windows = 0;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng order_rng(derive_seed(tcfg.seed, "order_epoch_" + std::to_string(epoch)));
        std::vector<std::size_t> seq_order(ds.sequences.size());
        for (std::size_t i = 0; i < seq_order.size(); ++i) seq_order[i] = i;
        order_rng.shuffle(seq_order);

        for (std::size_t si : seq_order) {
            const synth::SceneSequence& seq = ds.sequences[si];
            const int frame_count = static_cast<int>(seq.frames.size());
            if (frame_count < 2) continue;
            const int len = std::min(tcfg.seq_len, frame_count - 1);

            for (int w = 0; w < tcfg.windows_per_seq; ++w) {
                const int max_start = frame_count - len;  // starts in [1, max_start]
                const int start =
                    max_start > 1
                        ? 1 + static_cast<int>(order_rng.bounded(
                                  static_cast<std::uint64_t>(max_start)))
                        : 1;

                // teacher records for the window
                std::vector<io::TeacherRecord> records;
                bool missing = false;
                for (int k = start; k < start + len; ++k) {
                    const std::string path = teacher_record_path(
                        cache_dir, ds.names[si], static_cast<std::size_t>(k));
                    if (!io::file_exists(path)) {
                        std::cerr << "warning: missing teacher record " << path
                                  << ", skipping window\n";
                        missing = true;
                        break;
                    }
                    records.push_back(io::read_teacher_record(path));
                }
                if (missing) continue;

                net::RecurrentState state;
                Array prev_frame({res.height, res.width});
                ag::Var prev_rec;
                ag::Var window_loss;
                double sum_semantic = 0, sum_temporal = 0, sum_distill = 0;

                for (int k = start; k < start + len; ++k) {
                    const EventStream& grp = step_groups[si][static_cast<std::size_t>(k - 1)];
                    Array voxel =
                        build_voxel_grid(grp, mcfg.input_bins, res).to_chw();
                    net::E2vModel::StepOut out = model.step(voxel, state, prev_frame);

                    const io::TeacherRecord& rec =
                        records[static_cast<std::size_t>(k - start)];
                    if (!rec.feature.same_shape(out.f_e->value)) {
                        throw DataError(
                            "teacher feature shape does not match F_e; regenerate the "
                            "cache with the current model config");
                    }

                    loss::LossParts parts;
                    parts.semantic = loss::semantic_perceptual_loss(
                        out.frame, seq.frames[static_cast<std::size_t>(k)],
                        first_mask_channels(rec.masks, tcfg.n_masks), phi,
                        wiring.masked_stage0);
                    const ag::Var& target = wiring.distill_on_f_e ? out.f_e : out.f_semantic;
                    parts.distill =
                        loss::relational_distillation_loss(target, rec.feature);
                    if (k > start) {
                        parts.temporal = loss::temporal_consistency_loss(
                            out.frame, prev_rec, seq.frames[static_cast<std::size_t>(k)],
                            seq.frames[static_cast<std::size_t>(k - 1)],
                            seq.flows[static_cast<std::size_t>(k - 1)], tcfg.alpha);
                        sum_temporal += ag::scalar(parts.temporal);
                    }
                    sum_semantic += ag::scalar(parts.semantic);
                    sum_distill += ag::scalar(parts.distill);

                    ag::Var step_total = loss::total_loss(parts, weights);
                    window_loss = window_loss ? ag::add(window_loss, step_total)
                                              : step_total;
                    prev_rec = out.frame;
                    prev_frame = out.frame->value;
                }

                window_loss = ag::scale(window_loss, 1.0 / static_cast<double>(len));
                const double total = ag::scalar(window_loss);
                if (!std::isfinite(total)) {
                    throw NumericError(
                        "non-finite loss at step " + std::to_string(step_counter) +
                        " (sequence " + ds.names[si] + ", window start " +
                        std::to_string(start) + "): semantic=" +
                        std::to_string(sum_semantic / len) + " temporal=" +
                        std::to_string(sum_temporal / len) + " distill=" +
                        std::to_string(sum_distill / len));
                }

                ag::backward(window_loss);
                if (++pending_windows == tcfg.batch_size) {
                    opt.step();
                    opt.zero_grad();
                    pending_windows = 0;
                }

                StepLog log;
                log.step = step_counter++;
                log.semantic = sum_semantic / len;
                log.temporal = sum_temporal / std::max(1, len - 1);
                log.distill = sum_distill / len;
                log.total = total;
                loss_csv << log.step << ',' << log.semantic << ',' << log.temporal
                         << ',' << log.distill << ',' << log.total << '\n';
                result.steps.push_back(log);
            }
        }
        loss_csv.flush();
    }
    if (pending_windows > 0) {
        opt.step();
        opt.zero_grad();
    }

    result.checkpoint_path = out_dir + "/checkpoint.e2vckpt";
    model.save(result.checkpoint_path);
    return result;
}

// ---------------------------------------------------------------------------
// ablation suite
// ---------------------------------------------------------------------------

double AblationTable::median_mse(const std::string& ablation) const {
    std::vector<double> values;
    for (const auto& r : runs) {
        if (r.ablation == ablation) values.push_back(r.mse);
    }
    if (values.empty()) throw std::invalid_argument("no runs for " + ablation);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const AblationRun& AblationTable::run(const std::string& ablation,
                                      std::uint64_t seed) const {
    for (const auto& r : runs) {
        if (r.ablation == ablation && r.seed == seed) return r;
    }
    throw std::invalid_argument("missing run " + ablation);
}

AblationTable run_ablation_suite(const std::string& dataset_dir,
                                 const std::string& cache_dir,
                                 const std::string& heldout_dir,
                                 const std::string& out_dir,
                                 const net::ModelConfig& mcfg,
                                 const TrainConfig& base,
                                 const std::vector<std::string>& ablations,
                                 const std::vector<std::uint64_t>& seeds, int jobs) {
    if (ablations.size() < 2) {
        throw UsageError("ablation suite needs at least 2 configurations");
    }
    LoadedDataset heldout = load_dataset(heldout_dir);
    const Resolution res = heldout.sequences.front().events.resolution();
    loss::PerceptualExtractor phi(res.height, res.width, base.perceptual_seed);

    AblationTable table;
    table.ablations = ablations;
    table.seeds = seeds;
    table.runs.resize(ablations.size() * seeds.size());

    struct Job {
        std::size_t slot;
        std::string ablation;
        std::uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (std::size_t a = 0; a < ablations.size(); ++a) {
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            jobs_list.push_back({a * seeds.size() + s, ablations[a], seeds[s]});
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs_list.size()) break;
            const Job& job = jobs_list[j];
            TrainConfig tcfg = base;
            tcfg.ablation = job.ablation;
            tcfg.seed = job.seed;
            const std::string run_dir =
                out_dir + "/" + job.ablation + "_seed" + std::to_string(job.seed);
            io::ensure_dir(run_dir);
            TrainResult tr = train(dataset_dir, cache_dir, run_dir, mcfg, tcfg);

            net::E2vModel model = net::E2vModel::load(tr.checkpoint_path);
            eval::GroupingSpec grouping;
            grouping.bins = mcfg.input_bins;
            eval::EvalReport report =
                eval::evaluate_dataset(model, heldout.sequences, grouping, phi);
            AblationRun run;
            run.ablation = job.ablation;
            run.seed = job.seed;
            run.mse = report.mse;
            run.ssim = report.ssim;
            table.runs[job.slot] = run;
            std::cerr << "ablation " << job.ablation << " seed " << job.seed
                      << ": mse=" << run.mse << " ssim=" << run.ssim << "\n";
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(jobs_list.size())));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    io::ensure_dir(out_dir);
    std::ofstream os(out_dir + "/ablation_table.csv");
    os << "ablation,seed,mse,ssim,delta_mse_vs_full,delta_ssim_vs_full\n";
    os.precision(12);
    for (const auto& r : table.runs) {
        os << r.ablation << ',' << r.seed << ',' << r.mse << ',' << r.ssim;
        bool has_full = false;
        for (const auto& a : ablations) has_full = has_full || a == "full";
        if (has_full) {
            const AblationRun& full = table.run("full", r.seed);
            os << ',' << (r.mse - full.mse) << ',' << (r.ssim - full.ssim);
        } else {
            os << ",,";
        }
        os << '\n';
    }
    return table;
}

}  // namespace e2v::train
