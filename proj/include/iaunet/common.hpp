#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace iaunet {

// Error taxonomy maps onto the CLI exit codes: usage errors exit 1,
// data/validation/IO errors exit 2, numeric errors exit 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// splitmix64 step, used both as a mixer and to derive sub-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive a deterministic seed for a named sub-stream. All stochastic
// consumers (model init, shuffling, triplet sampling, augmentation) take
// positionally derived seeds so that resuming a run never needs to
// fast-forward an RNG.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t v : salts) {
        s = splitmix64(s ^ v);
    }
    return s;
}

inline std::uint64_t hash_str(const std::string& s) {
    // FNV-1a
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h = (h ^ c) * 1099511628211ULL;
    }
    return h;
}

// Deterministic RNG with portable draw semantics. std::mt19937_64 output is
// specified by the standard; the distributions below are implemented by hand
// because the std:: distribution objects are implementation-defined and would
// break bit-identical logs across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        if (n <= 0) throw UsageError("Rng::uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return static_cast<std::int64_t>(r % un);
    }

    // Box-Muller, one value per call (the second root is discarded to keep
    // the stream position a pure function of the call count).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::string state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        if (is.fail()) throw ValidationError("Rng::set_state: malformed engine state");
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace iaunet
