#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2v/errors.hpp"

namespace e2v::cfg {

struct KeySpec {
    const char* name;
    const char* default_value;
    const char* help;
};

// Every configuration key with its default. CLI flags mirror these 1:1.
const std::vector<KeySpec>& key_table();

// Flat key=value configuration. Layering: defaults, then file, then explicit
// sets (CLI flags). E2V_SEED fills "seed" only when nothing set it.
class RunConfig {
public:
    RunConfig();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // unknown key -> UsageError
    void apply_env_fallbacks();

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    bool was_set(const std::string& key) const;

    // echoed into every output directory
    void write_resolved(const std::string& dir) const;

private:
    std::vector<std::string> values_;
    std::vector<bool> set_;
    std::size_t index_of(const std::string& key) const;
};

}  // namespace e2v::cfg
