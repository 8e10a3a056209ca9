#include "ecoforecast/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace ecoforecast::kernels {

namespace {

double scalar_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double scalar_sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double scalar_sumsq(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

double scalar_sqdist(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void scalar_axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scalar_scale(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void scalar_matvec(const double* a, const double* x, const double* b, double* y,
                   std::size_t n_rows, std::size_t n_cols) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        const double* row = a + r * n_cols;
        double acc = b ? b[r] : 0.0;
        for (std::size_t c = 0; c < n_cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

Backend g_backend = detect_backend();
const Ops* g_ops = nullptr;

const Ops* table_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
    if (b == Backend::avx2) return &detail::avx2_ops;
#endif
    return &detail::scalar_ops;
}

}  // namespace

namespace detail {
const Ops scalar_ops = {scalar_dot,  scalar_sum,   scalar_sumsq, scalar_sqdist,
                        scalar_axpy, scalar_scale, scalar_matvec};
}  // namespace detail

Backend detect_backend() {
    if (const char* env = std::getenv("ECOFORECAST_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Backend::avx2;
#endif
    return Backend::scalar;
}

void set_backend(Backend b) {
    g_backend = b;
    g_ops = table_for(b);
}

Backend active_backend() { return g_backend; }

const Ops& active() {
    if (!g_ops) g_ops = table_for(g_backend);
    return *g_ops;
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::avx2:
            return "avx2";
        default:
            return "scalar";
    }
}

}  // namespace ecoforecast::kernels
