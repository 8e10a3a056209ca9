#pragma once

// Dense double-precision kernels used by the model training loops.
//
// Every kernel has a scalar reference implementation; on x86 an AVX2+FMA
// variant is selected at runtime when the CPU supports it. The active
// backend can be forced with the ECOFORECAST_SIMD environment variable
// ("scalar" or "avx2"), which takes precedence over CPU detection.

#include <cstddef>
#include <string>

namespace ecoforecast::kernels {

enum class Backend {
    scalar,
    avx2,
};

/// Function table for one backend. All pointers are always non-null.
struct Ops {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    double (*sqdist)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double*, double, std::size_t);
    // y[i] = dot(A.row(i), x) + b[i] for an n_rows x n_cols row-major A.
    // b may be null, in which case it is treated as zero.
    void (*matvec)(const double*, const double*, const double*, double*,
                   std::size_t, std::size_t);
};

/// Backend chosen by CPU detection plus the ECOFORECAST_SIMD override.
Backend detect_backend();

/// Replaces the active function table. Not thread safe; call before
/// spawning workers.
void set_backend(Backend b);

Backend active_backend();
const Ops& active();

const char* backend_name(Backend b);

// Convenience wrappers through the active table.

inline double dot(const double* a, const double* b, std::size_t n) {
    return active().dot(a, b, n);
}

inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }

inline double sumsq(const double* a, std::size_t n) {
    return active().sumsq(a, n);
}

inline double sqdist(const double* a, const double* b, std::size_t n) {
    return active().sqdist(a, b, n);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy(alpha, x, y, n);
}

inline void scale(double* x, double alpha, std::size_t n) {
    active().scale(x, alpha, n);
}

inline void matvec(const double* a, const double* x, const double* b, double* y,
                   std::size_t n_rows, std::size_t n_cols) {
    active().matvec(a, x, b, y, n_rows, n_cols);
}

namespace detail {
extern const Ops scalar_ops;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops avx2_ops;
#endif
}  // namespace detail

}  // namespace ecoforecast::kernels
