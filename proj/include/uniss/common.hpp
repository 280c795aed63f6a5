// Shared error types, deterministic randomness, and small utilities.
//
// Every random draw in the library goes through Rng / derive_seed so that a
// run is reproducible bit-for-bit from a single root seed.  std::<distribution>
// classes are implementation-defined, so the few distributions we need are
// spelled out explicitly.
#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uniss {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration values.
struct ConfigError : Error { using Error::Error; };
// A numeric input fell outside its documented domain.
struct OutOfRange : Error { using Error::Error; };
// A prompt violated the shape rules of its task.
struct PromptShapeError : Error { using Error::Error; };
// An emitted token sequence does not parse under the task's grammar.
struct MalformedOutput : Error { using Error::Error; };
// Text contains characters outside the language's alphabet.
struct AlphabetError : Error { using Error::Error; };
// Token ids that cannot be decoded back to a waveform or text.
struct DecodeError : Error { using Error::Error; };
// Malformed caller-supplied data (empty reference, bad manifest row, ...).
struct InputError : Error { using Error::Error; };
// A training phase cannot run with the data or settings it was given.
struct ScheduleError : Error { using Error::Error; };
// A batch with no supervised positions; loss is undefined.
struct DegenerateBatch : Error { using Error::Error; };
// File system or serialization failure.
struct IoError : Error { using Error::Error; };

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from a root seed and a label, so that
// unrelated consumers (packing shuffle, sampler, pad noise, ...) never share a
// stream even when they draw in a different order between runs.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    return splitmix64(root ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index) {
    return splitmix64(derive_seed(root, label) ^ splitmix64(index));
}

// mt19937_64 with explicitly coded draws.  The raw engine is well defined by
// the standard; only the distribution adapters on top of it are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1) with 53 usable bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).  Rejection keeps the draw unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw OutOfRange("Rng::below: n must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v;
        do { v = engine_(); } while (v >= limit);
        return v % n;
    }

    int range(int lo, int hi) {  // inclusive endpoints
        if (hi < lo) throw OutOfRange("Rng::range: hi < lo");
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // Box-Muller, one value per call; the cached twin keeps draws cheap.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Categorical draw by inverse CDF walk over the weights in index order.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw OutOfRange("Rng::categorical: negative or NaN weight");
            total += w;
        }
        if (total <= 0.0) throw OutOfRange("Rng::categorical: weights sum to zero");
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;  // u landed on accumulated rounding slack
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace uniss
