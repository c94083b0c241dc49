// Shared error types, deterministic RNG, and number formatting.
#pragma once

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace acopf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedCase : Error { using Error::Error; };
struct UnsupportedFeature : Error { using Error::Error; };
struct SingularBranch : Error { using Error::Error; };
struct SingularJacobian : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NotConverged : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct NonPositiveTrueCost : Error { using Error::Error; };
struct TooSmall : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FormatVersionMismatch : Error { using Error::Error; };

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 wrapper with platform-independent uniform draws. The standard
// distributions are implementation-defined, so doubles and bounded ints are
// derived from raw 64-bit output directly.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Derives an independent stream for one Monte Carlo draw index.
    static Rng for_draw(uint64_t master_seed, uint64_t draw_index) {
        uint64_t s = master_seed;
        (void)splitmix64(s);
        s ^= 0x632be59bd9b4e019ULL * (draw_index + 1);
        uint64_t mixed = splitmix64(s);
        return Rng(mixed);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Uniform integer in [0, n), rejection-sampled so the result does not
    // depend on the standard library.
    uint64_t below(uint64_t n) {
        if (n == 0) throw Error("Rng::below: n must be positive");
        uint64_t threshold = (~uint64_t{0} - n + 1) % n;
        for (;;) {
            uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace acopf
