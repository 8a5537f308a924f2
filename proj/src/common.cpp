#include "mimo/common.hpp"

#include <atomic>
#include <cmath>

#include "mimo/kernels.hpp"

namespace mimo {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t Rng::next_u64() {
    return gen_();
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) {
        throw ConfigError("Rng::index: n must be positive");
    }
    // Multiplicative range reduction; bias is O(n / 2^64).
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Rng Rng::derive(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x51ed2701a9b1e1edULL)));
}

namespace {
std::atomic<int> g_workers{1};
}

int workers() {
    return g_workers.load();
}

void set_workers(int n) {
    const int clamped = n < 1 ? 1 : n;
    g_workers.store(clamped);
    kernels::set_parallel_enabled(clamped > 1);
}

} // namespace mimo
