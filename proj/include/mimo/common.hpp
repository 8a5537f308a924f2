#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mimo {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 2, NumericError -> 3, IoError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic RNG. All randomness in the library flows through this type so
// that results are bit-reproducible across platforms: mt19937_64 is fully
// specified by the standard, and the normal/uniform transforms below are
// fixed-algorithm (no implementation-defined distributions).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    // Standard normal via Box-Muller (no state caching).
    double normal();

    // Uniform index in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    // Independent child stream; derived from the construction seed, so the
    // parent's consumed state does not affect the child.
    Rng derive(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

// Worker pool size for coarse-grained parallel loops (grid cells, replicate
// training runs, sweep cells). Results are reduced in index order, so the
// setting never changes numeric output. Default 1.
int workers();
void set_workers(int n);

} // namespace mimo
