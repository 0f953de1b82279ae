#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace pansharp {

// Error taxonomy; the CLI maps these onto exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};

// Caps OpenMP workers from PANSHARP_THREADS. Call once at process start.
inline void apply_thread_env() {
#if defined(_OPENMP)
    if (const char* env = std::getenv("PANSHARP_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

inline int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Deterministic RNG. mt19937_64 has a standardized sequence and all draws
// below avoid the implementation-defined std distributions, so a seed fixes
// every value across platforms and stdlib versions.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0,1) with 53 random bits
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) via rejection sampling.
    int64_t uniform_int(int64_t n) {
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return static_cast<int64_t>(v % un);
    }

    // In-place Fisher-Yates.
    template <typename V>
    void shuffle(V& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Blocked summation with a fixed block size: blocks may be summed by
// different threads but the combine order is fixed, so the result is
// identical for any thread count.
template <typename T>
T det_sum(const T* p, int64_t n) {
    constexpr int64_t kBlock = 4096;
    if (n <= kBlock) {
        T s = T(0);
        for (int64_t i = 0; i < n; ++i) s += p[i];
        return s;
    }
    int64_t nb = (n + kBlock - 1) / kBlock;
    std::vector<T> partial(nb, T(0));
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < nb; ++b) {
        int64_t lo = b * kBlock;
        int64_t hi = std::min(n, lo + kBlock);
        T s = T(0);
        for (int64_t i = lo; i < hi; ++i) s += p[i];
        partial[b] = s;
    }
    T s = T(0);
    for (int64_t b = 0; b < nb; ++b) s += partial[b];
    return s;
}

}  // namespace pansharp
