// e2v — synthetic event-to-video reconstruction toolkit.
// Subcommands: simulate | teacher | train | reconstruct | evaluate |
// robustness | ablate. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric
// failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "e2v/config.hpp"
#include "e2v/errors.hpp"
#include "e2v/evalkit.hpp"
#include "e2v/io.hpp"
#include "e2v/plot.hpp"
#include "e2v/semantics.hpp"
#include "e2v/synthgen.hpp"
#include "e2v/trainer.hpp"

namespace {

using e2v::cfg::RunConfig;

e2v::net::ModelConfig model_config_from(const RunConfig& rc) {
    e2v::net::ModelConfig mc;
    mc.input_bins = rc.get_int("bins");
    mc.base_channels = rc.get_int("base_channels");
    mc.num_encoders = rc.get_int("num_encoders");
    mc.num_residual_blocks = rc.get_int("num_residual_blocks");
    mc.bottleneck_channels = rc.get_int("bottleneck_channels");
    mc.use_cfhm = rc.get_bool("use_cfhm");
    mc.validate();
    return mc;
}

e2v::train::TrainConfig train_config_from(const RunConfig& rc) {
    e2v::train::TrainConfig tc;
    tc.seq_len = rc.get_int("seq_len");
    tc.batch_size = rc.get_int("batch_size");
    tc.epochs = rc.get_int("epochs");
    tc.learning_rate = rc.get_double("learning_rate");
    tc.lambda = rc.get_double("lambda");
    tc.alpha = rc.get_double("alpha");
    tc.seed = rc.get_u64("seed");
    tc.ablation = rc.get("ablation");
    tc.windows_per_seq = rc.get_int("windows_per_seq");
    tc.clip_norm = rc.get_double("clip_norm");
    tc.perceptual_seed = rc.get_u64("perceptual_seed");
    tc.n_masks = rc.get_int("n_masks");
    tc.validate();
    return tc;
}

// Reads one sequence's metadata to derive resolution-dependent dimensions.
e2v::Resolution dataset_resolution(const std::string& dataset_dir) {
    namespace fs = std::filesystem;
    for (const auto& entry : fs::directory_iterator(dataset_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
            auto meta = e2v::io::read_meta((entry.path() / "meta.json").string());
            return {std::stoi(meta.at("width")), std::stoi(meta.at("height"))};
        }
    }
    throw e2v::DataError("no sequences found in " + dataset_dir);
}

int perceptual_stage0_dim(int image_dim) { return (image_dim - 1) / 4 + 1; }

int cmd_simulate(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    const int n = rc.get_int("sequences");
    const int size = rc.get_int("resolution");
    const std::uint64_t seed = rc.get_u64("seed");
    for (int i = 0; i < n; ++i) {
        e2v::synth::SceneSpec spec = e2v::synth::make_random_scene(
            {size, size}, rc.get_double("duration"), rc.get_double("frame_rate"),
            rc.get_int("sprites_min"), rc.get_int("sprites_max"),
            rc.get_double("epsilon_min"), rc.get_double("epsilon_max"),
            rc.get_double("log_offset"),
            e2v::derive_seed(seed, "sequence_" + std::to_string(i)));
        e2v::synth::SceneSequence seq = e2v::synth::generate_sequence(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "/seq_%06d", i);
        e2v::synth::write_sequence_dir(out + name, seq, spec);
        std::cerr << "sequence " << i << ": " << seq.events.size() << " events, eps="
                  << spec.contrast_threshold << "\n";
    }
    return 0;
}

int cmd_teacher(const RunConfig& rc) {
    const std::string dataset = rc.get("dataset");
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);

    const e2v::Resolution res = dataset_resolution(dataset);
    const e2v::net::ModelConfig mc = model_config_from(rc);
    e2v::sem::TeacherConfig tc;
    tc.channels = mc.bottleneck_channels;
    tc.feature_h = res.height >> mc.num_encoders;
    tc.feature_w = res.width >> mc.num_encoders;
    tc.n_masks = rc.get_int("n_masks");
    tc.mask_h = perceptual_stage0_dim(res.height);
    tc.mask_w = perceptual_stage0_dim(res.width);
    tc.seed = rc.get_u64("teacher_seed");
    e2v::sem::OracleTeacher teacher(tc);

    e2v::sem::PrecomputeReport report = e2v::sem::precompute_teacher(dataset, out, teacher);
    std::cerr << "teacher cache: " << report.sequences_done << " sequences, "
              << report.frames_written << " written, " << report.frames_skipped
              << " already cached\n";
    for (const auto& err : report.errors) std::cerr << "error: " << err << "\n";
    if (report.sequences_done == 0) throw e2v::DataError("teacher precompute failed");
    if (report.errors.empty()) {
        std::ofstream marker(out + "/cache_complete");
        marker << report.sequences_done << "\n";
    }
    return report.errors.empty() ? 0 : 2;
}

int cmd_train(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    e2v::train::TrainResult result =
        e2v::train::train(rc.get("dataset"), rc.get("cache"), out,
                          model_config_from(rc), train_config_from(rc));
    std::cerr << "checkpoint: " << result.checkpoint_path << " ("
              << result.steps.size() << " steps)\n";
    return 0;
}

e2v::eval::GroupingSpec grouping_from(const RunConfig& rc, int bins) {
    e2v::eval::GroupingSpec g;
    g.bins = bins;
    const std::string mode = rc.get("grouping");
    if (mode == "frames") {
        g.mode = e2v::eval::Grouping::BetweenFrames;
        g.discard_ratio = rc.get_double("discard_ratio");
        g.discard_seed = e2v::derive_seed(rc.get_u64("seed"), "discard");
    } else if (mode == "duration") {
        g.mode = e2v::eval::Grouping::FixedDuration;
        g.dt = rc.get_double("dt");
        if (!(g.dt > 0.0)) throw e2v::UsageError("dt must be > 0");
    } else if (mode == "count") {
        g.mode = e2v::eval::Grouping::FixedCount;
        g.count = static_cast<std::size_t>(rc.get_int("count"));
        if (g.count < 1) throw e2v::UsageError("count must be >= 1");
    } else {
        throw e2v::UsageError("unknown grouping: " + mode);
    }
    return g;
}

int cmd_reconstruct(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    if (rc.get("checkpoint").empty()) throw e2v::UsageError("--checkpoint is required");
    if (rc.get("events").empty()) throw e2v::UsageError("--events is required");

    e2v::net::E2vModel model = e2v::net::E2vModel::load(rc.get("checkpoint"));
    const int bins = model.config().model.input_bins;

    // events may be a raw .evb1 file or a sequence directory
    e2v::synth::SceneSequence seq;
    const std::string events_path = rc.get("events");
    if (std::filesystem::is_directory(events_path)) {
        seq = e2v::synth::read_sequence_dir(events_path);
    } else {
        seq.events = e2v::io::read_evb1(events_path);
    }
    const std::string mode = rc.get("grouping");
    if (mode == "frames" && seq.frame_times.empty()) {
        throw e2v::UsageError("grouping=frames needs a sequence directory for --events");
    }

    std::vector<e2v::eval::GridItem> items =
        e2v::eval::make_grid_items(seq, grouping_from(rc, bins));
    std::vector<e2v::Array> frames = e2v::eval::reconstruct_grids(model, items);

    e2v::io::ensure_dir(out + "/frames");
    std::ofstream times(out + "/times.csv");
    times << "frame,time\n";
    times.precision(12);
    char name[64];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "%s/frames/%06zu.pgm", out.c_str(), i);
        e2v::io::write_pgm(name, frames[i]);
        times << i << ',' << items[i].recon_time << '\n';
    }
    std::cerr << "reconstructed " << frames.size() << " frames\n";
    return 0;
}

int cmd_evaluate(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    if (rc.get("checkpoint").empty()) throw e2v::UsageError("--checkpoint is required");

    e2v::net::E2vModel model = e2v::net::E2vModel::load(rc.get("checkpoint"));
    e2v::train::LoadedDataset ds = e2v::train::load_dataset(rc.get("dataset"));
    const e2v::Resolution res = ds.sequences.front().events.resolution();
    e2v::loss::PerceptualExtractor phi(res.height, res.width,
                                       rc.get_u64("perceptual_seed"));
    e2v::eval::EvalReport report = e2v::eval::evaluate_dataset(
        model, ds.sequences, grouping_from(rc, model.config().model.input_bins), phi,
        rc.get_double("tolerance_ms") / 1000.0, rc.get_int("jobs"));
    e2v::eval::write_report_csv(out, report);
    std::cout << "mse=" << report.mse << " ssim=" << report.ssim
              << " lpips_proxy=" << report.lpips_proxy << " matched=" << report.matched
              << " skipped=" << report.skipped << "\n";
    return 0;
}

int cmd_robustness(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    if (rc.get("checkpoint").empty()) throw e2v::UsageError("--checkpoint is required");

    e2v::net::E2vModel model = e2v::net::E2vModel::load(rc.get("checkpoint"));
    e2v::train::LoadedDataset ds = e2v::train::load_dataset(rc.get("dataset"));
    const e2v::Resolution res = ds.sequences.front().events.resolution();
    e2v::loss::PerceptualExtractor phi(res.height, res.width,
                                       rc.get_u64("perceptual_seed"));

    const std::string axis = rc.get("axis");
    const double scale = rc.get_double("sparsity_scale");
    std::vector<double> settings = e2v::eval::default_axis_settings(axis, scale);
    e2v::eval::RobustnessCurve curve = e2v::eval::robustness_sweep(
        model, ds.sequences, axis, settings, phi,
        rc.get_double("tolerance_ms") / 1000.0, rc.get_int("jobs"),
        e2v::derive_seed(rc.get_u64("seed"), "discard"));

    std::string note;
    if (axis == "sparsity") {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "sparsity counts = reference grid 5000..45000 step 5000, scaled by %g",
                      scale);
        note = buf;
    }
    e2v::eval::write_curve_csv(out + "/curves_" + axis + ".csv", curve, note);

    e2v::plot::Series mse_series{"MSE", {}, {}};
    e2v::plot::Series ssim_series{"SSIM", {}, {}};
    for (const auto& p : curve.points) {
        if (p.missing) continue;
        mse_series.x.push_back(p.setting);
        mse_series.y.push_back(p.mse);
        ssim_series.x.push_back(p.setting);
        ssim_series.y.push_back(p.ssim);
    }
    e2v::plot::line_chart(out + "/curves_" + axis + ".png", "robustness " + axis, axis,
                          {mse_series, ssim_series});
    std::cout << "axis=" << axis << " points=" << curve.points.size() << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& rc) {
    const std::string out = rc.get("out");
    e2v::io::ensure_dir(out);
    rc.write_resolved(out);
    const std::string heldout =
        rc.get("heldout").empty() ? rc.get("dataset") : rc.get("heldout");

    const std::string grid = rc.get("grid");
    if (!grid.empty()) {
        // hyperparameter grid on the full model, e.g. lambda=0.5,1.0,1.5,1.8,2.0
        const auto eq = grid.find('=');
        if (eq == std::string::npos) {
            throw e2v::UsageError("grid must look like key=v1,v2,...");
        }
        const std::string key = grid.substr(0, eq);
        if (key != "lambda" && key != "n_masks") {
            throw e2v::UsageError("grid key must be lambda or n_masks");
        }
        std::vector<std::string> values;
        {
            std::istringstream vs(grid.substr(eq + 1));
            std::string tok;
            while (std::getline(vs, tok, ',')) {
                if (!tok.empty()) values.push_back(tok);
            }
        }
        if (values.empty()) throw e2v::UsageError("grid value list is empty");
        std::vector<std::uint64_t> seeds;
        for (const auto& t : rc.get_string_list("seeds")) seeds.push_back(std::stoull(t));
        if (seeds.empty()) seeds.push_back(1);

        e2v::train::LoadedDataset hd = e2v::train::load_dataset(heldout);
        const e2v::Resolution res = hd.sequences.front().events.resolution();
        e2v::loss::PerceptualExtractor phi(res.height, res.width,
                                           rc.get_u64("perceptual_seed"));
        std::ofstream os(out + "/grid_table.csv");
        os << key << ",seed,mse,ssim\n";
        os.precision(12);
        for (const std::string& value : values) {
            for (std::uint64_t seed : seeds) {
                RunConfig run_rc = rc;
                run_rc.set(key, value);
                run_rc.set("seed", std::to_string(seed));
                run_rc.set("ablation", "full");
                const std::string run_dir =
                    out + "/" + key + "_" + value + "_seed" + std::to_string(seed);
                e2v::io::ensure_dir(run_dir);
                e2v::train::TrainResult tr = e2v::train::train(
                    run_rc.get("dataset"), run_rc.get("cache"), run_dir,
                    model_config_from(run_rc), train_config_from(run_rc));
                e2v::net::E2vModel model = e2v::net::E2vModel::load(tr.checkpoint_path);
                e2v::eval::GroupingSpec grouping;
                grouping.bins = model.config().model.input_bins;
                e2v::eval::EvalReport report =
                    e2v::eval::evaluate_dataset(model, hd.sequences, grouping, phi);
                os << value << ',' << seed << ',' << report.mse << ',' << report.ssim
                   << '\n';
                std::cerr << key << '=' << value << " seed " << seed
                          << ": mse=" << report.mse << " ssim=" << report.ssim << "\n";
            }
        }
        return 0;
    }

    std::vector<std::uint64_t> seeds;
    for (const auto& t : rc.get_string_list("seeds")) seeds.push_back(std::stoull(t));
    if (seeds.empty()) throw e2v::UsageError("seeds list is empty");
    e2v::train::run_ablation_suite(rc.get("dataset"), rc.get("cache"), heldout, out,
                                   model_config_from(rc), train_config_from(rc),
                                   rc.get_string_list("ablations"), seeds,
                                   rc.get_int("jobs"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic event-to-video reconstruction toolkit"};
    app.require_subcommand(1);

    const std::vector<std::string> command_names = {
        "simulate", "teacher", "train", "reconstruct", "evaluate", "robustness",
        "ablate"};
    struct SubState {
        CLI::App* sub = nullptr;
        std::string config_file;
        std::vector<std::pair<std::string, CLI::Option*>> options;
    };
    std::map<std::string, SubState> subs;
    for (const auto& name : command_names) {
        SubState state;
        state.sub = app.add_subcommand(name);
        state.sub->add_option("--config", state.config_file, "key=value config file");
        for (const auto& spec : e2v::cfg::key_table()) {
            state.options.emplace_back(
                spec.name, state.sub->add_option("--" + std::string(spec.name),
                                                 spec.help));
        }
        subs[name] = std::move(state);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        for (const auto& name : command_names) {
            const SubState& state = subs[name];
            if (!state.sub->parsed()) continue;
            RunConfig rc;
            if (!state.config_file.empty()) rc.load_file(state.config_file);
            for (const auto& [key, opt] : state.options) {
                if (opt->count() > 0) rc.set(key, opt->results().back());
            }
            rc.apply_env_fallbacks();
            if (name == "simulate") return cmd_simulate(rc);
            if (name == "teacher") return cmd_teacher(rc);
            if (name == "train") return cmd_train(rc);
            if (name == "reconstruct") return cmd_reconstruct(rc);
            if (name == "evaluate") return cmd_evaluate(rc);
            if (name == "robustness") return cmd_robustness(rc);
            if (name == "ablate") return cmd_ablate(rc);
        }
        return 1;
    } catch (const e2v::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const e2v::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const e2v::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
}
