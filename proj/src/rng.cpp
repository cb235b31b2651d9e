#include "e2v/rng.hpp"

#include <cmath>

namespace e2v {

double Rng::gaussian() {
    // Draw u1 in (0,1] to keep log() finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view role) {
    std::uint64_t h = splitmix64(master);
    for (unsigned char c : role) {
        h = splitmix64(h ^ c);
    }
    return h;
}

}  // namespace e2v
