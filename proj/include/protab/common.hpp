#pragma once

// Shared basics: task kinds, error types, and the seeded RNG used everywhere.
// All randomness in the library flows through Rng instances derived from
// explicit seeds, so any (config, seed) pair replays bit-identically.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace protab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Task { binclass, multiclass, regression };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::binclass: return "binclass";
        case Task::multiclass: return "multiclass";
        case Task::regression: return "regression";
    }
    return "?";
}

Task task_from_name(const std::string& name);

// Base error for the library. Subcommands map these to exit code 2.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PROTAB_DEFINE_ERROR(Name)                                  \
    class Name : public Error {                                    \
      public:                                                      \
        explicit Name(const std::string& msg) : Error(msg) {}      \
    }

PROTAB_DEFINE_ERROR(MissingColumn);
PROTAB_DEFINE_ERROR(TypeMismatch);
PROTAB_DEFINE_ERROR(EmptyFile);
PROTAB_DEFINE_ERROR(BadRatios);
PROTAB_DEFINE_ERROR(TooFewRows);
PROTAB_DEFINE_ERROR(SchemaMismatch);
PROTAB_DEFINE_ERROR(IncompatibleSpec);
PROTAB_DEFINE_ERROR(ShapeMismatch);
PROTAB_DEFINE_ERROR(TooFewPoints);
PROTAB_DEFINE_ERROR(NonFiniteInput);
PROTAB_DEFINE_ERROR(LabelOutOfRange);
PROTAB_DEFINE_ERROR(DegenerateBatch);
PROTAB_DEFINE_ERROR(DivergedLoss);
PROTAB_DEFINE_ERROR(MissingPrototypes);
PROTAB_DEFINE_ERROR(TooFewPairs);
PROTAB_DEFINE_ERROR(EmptyGroup);
PROTAB_DEFINE_ERROR(TooFewSamples);
PROTAB_DEFINE_ERROR(SingleClass);
PROTAB_DEFINE_ERROR(UnknownPreset);

#undef PROTAB_DEFINE_ERROR

// 64-bit mix (splitmix64 finalizer). Used to derive independent stream seeds
// from (seed, tag, tag, ...) tuples without correlated low bits.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    // Derived stream: Rng(seed).fork(tag1, tag2) is independent of fork(tag1).
    template <typename... Tags>
    static Rng from(std::uint64_t seed, Tags... tags) {
        std::uint64_t h = mix64(seed);
        ((h = hash_combine(h, static_cast<std::uint64_t>(tags))), ...);
        Rng r(0);
        r.engine_.seed(h);
        return r;
    }

    double uniform() {
        // 53-bit mantissa construction, uniform in [0,1)
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; self-contained so streams do not depend on libstdc++
    // distribution internals.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n)
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Sample m distinct indices from [0, n) without replacement (partial
// Fisher-Yates over an index vector).
std::vector<int> sample_without_replacement(int n, int m, Rng& rng);

// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9
// relative error). The standard library has erf but not its inverse.
double normal_quantile(double p);

}  // namespace protab
