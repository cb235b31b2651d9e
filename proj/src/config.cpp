#include "e2v/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "e2v/io.hpp"

namespace e2v::cfg {

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        // paths / general
        {"out", "out", "output directory"},
        {"dataset", "dataset", "dataset directory (synthgen layout)"},
        {"cache", "teacher_cache", "teacher cache directory"},
        {"heldout", "", "held-out dataset directory"},
        {"checkpoint", "", "checkpoint path"},
        {"events", "", "event file (.evb1) or sequence directory"},
        {"seed", "7", "master seed (env E2V_SEED is the fallback)"},
        {"jobs", "1", "parallel workers for sequence-level work"},
        // simulate
        {"sequences", "20", "number of synthetic sequences"},
        {"resolution", "64", "square canvas size in pixels"},
        {"duration", "2.0", "sequence length in seconds"},
        {"frame_rate", "50", "frames per second"},
        {"sprites_min", "2", "minimum sprites per scene"},
        {"sprites_max", "4", "maximum sprites per scene"},
        {"epsilon_min", "0.1", "contrast threshold range, lower bound"},
        {"epsilon_max", "1.5", "contrast threshold range, upper bound"},
        {"log_offset", "0.001", "offset c added before the log"},
        // teacher
        {"n_masks", "10", "top-N categorical masks"},
        {"teacher_seed", "4242", "frozen teacher seed"},
        // model
        {"bins", "5", "voxel grid temporal bins"},
        {"base_channels", "16", "first encoder width"},
        {"num_encoders", "2", "encoder levels"},
        {"num_residual_blocks", "2", "residual blocks at the bottleneck"},
        {"bottleneck_channels", "64", "channels of F_e"},
        {"use_cfhm", "1", "enable the dynamic-filter hypernetwork"},
        // train
        {"seq_len", "16", "unroll length per window"},
        {"batch_size", "1", "windows per optimizer step"},
        {"epochs", "8", "training epochs"},
        {"learning_rate", "0.001", "Adam learning rate"},
        {"lambda", "1.8", "distillation loss weight"},
        {"alpha", "50", "occlusion mask sharpness"},
        {"windows_per_seq", "1", "training windows sampled per sequence per epoch"},
        {"clip_norm", "1.0", "global gradient-norm clip (0 disables)"},
        {"ablation", "full",
         "full | direct_distill | fuse_add | fuse_mean | fuse_xattn | plain_perceptual"},
        {"perceptual_seed", "9000", "frozen perceptual extractor seed"},
        // evaluate / reconstruct / robustness
        {"grouping", "frames", "frames | duration | count"},
        {"dt", "0.02", "fixed-duration window in seconds"},
        {"count", "1000", "events per fixed-count group"},
        {"discard_ratio", "0.0", "irregularity frame-discard ratio"},
        {"tolerance_ms", "1.0", "nearest-frame matching tolerance in milliseconds"},
        {"axis", "sparsity", "robustness axis: sparsity | rate | irregularity"},
        {"sparsity_scale", "0.1",
         "scales the 5000..45000 fixed-count grid to the synthetic event budget"},
        // ablate
        {"ablations", "full,direct_distill,fuse_add,fuse_mean,plain_perceptual",
         "comma list of ablation settings"},
        {"seeds", "1,2,3,4,5", "comma list of seeds for the ablation suite"},
        {"grid", "", "hyperparameter grid, e.g. lambda=0.5,1.0,1.5,1.8,2.0"},
    };
    return table;
}

RunConfig::RunConfig() {
    const auto& table = key_table();
    values_.reserve(table.size());
    for (const auto& spec : table) values_.emplace_back(spec.default_value);
    set_.assign(table.size(), false);
}

std::size_t RunConfig::index_of(const std::string& key) const {
    const auto& table = key_table();
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (key == table[i].name) return i;
    }
    throw UsageError("unknown configuration key: " + key);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + ":" + std::to_string(lineno) +
                             ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto ke = key.find_last_not_of(" \t");
        key = key.substr(0, ke + 1);
        const auto vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        set(key, value);
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const std::size_t i = index_of(key);
    values_[i] = value;
    set_[i] = true;
}

void RunConfig::apply_env_fallbacks() {
    if (!was_set("seed")) {
        if (const char* env = std::getenv("E2V_SEED")) {
            values_[index_of("seed")] = env;
        }
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    return values_[index_of(key)];
}

bool RunConfig::was_set(const std::string& key) const { return set_[index_of(key)]; }

int RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get(key));
    } catch (const std::exception&) {
        throw UsageError("key '" + key + "' is not an integer: " + get(key));
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw UsageError("key '" + key + "' is not a number: " + get(key));
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw UsageError("key '" + key + "' is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::exception&) {
        throw UsageError("key '" + key + "' is not an unsigned integer: " + get(key));
    }
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream is(get(key));
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw UsageError("key '" + key + "' has a non-numeric entry: " + tok);
        }
    }
    return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream is(get(key));
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

void RunConfig::write_resolved(const std::string& dir) const {
    io::ensure_dir(dir);
    std::ofstream os(dir + "/resolved.cfg");
    const auto& table = key_table();
    for (std::size_t i = 0; i < table.size(); ++i) {
        os << table[i].name << '=' << values_[i] << '\n';
    }
}

}  // namespace e2v::cfg
