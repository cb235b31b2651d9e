#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace e2v {

// Deterministic RNG built on mt19937_64 with hand-rolled distributions so
// that streams are identical across standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1), 53 mantissa bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Simple modulo; bias is irrelevant at
    // the range sizes used here but the stream must stay reproducible.
    std::uint64_t bounded(std::uint64_t n) { return gen_() % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(bounded(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Box-Muller without caching so the stream has a fixed draw count.
    double gaussian();

    // Fisher-Yates. Test oracles re-implement this exact procedure.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Derives a child seed from a master seed and a role label (splitmix64 over
// the label bytes). One master seed fans out to data order, init, teacher,
// discard sampling, etc. without stream collisions.
std::uint64_t derive_seed(std::uint64_t master, std::string_view role);

}  // namespace e2v
