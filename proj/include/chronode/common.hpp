#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace chronode {

using Real = double;

// Shape or argument violations detectable before any numerics run.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API contract violations (non-scalar loss, bad enum combination, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Runtime numeric failures: NaN loss, solver step underflow, step limits.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid run configuration (CLI / config file level).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seeded RNG wrapper so every stochastic choice in the library goes
// through one deterministic source.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    Real uniform(Real lo, Real hi) {
        std::uniform_real_distribution<Real> d(lo, hi);
        return d(gen_);
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        return d(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace chronode
