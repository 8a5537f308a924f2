#include "mimo/kernels.hpp"

#include "mimo/common.hpp"

#include <atomic>
#include <cmath>

namespace mimo::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the omp fork overhead dominates.
constexpr std::size_t kGemmThreshold = 1u << 15;
constexpr std::size_t kRowThreshold = 64;

inline std::ptrdiff_t sp(std::size_t v) {
    return static_cast<std::ptrdiff_t>(v);
}

inline void softmax_row(const double* x, double* y, std::size_t n) {
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) {
        if (x[j] > mx) mx = x[j];
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
        y[j] /= sum;
    }
}

inline void log_softmax_row(const double* x, double* y, std::size_t n) {
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) {
        if (x[j] > mx) mx = x[j];
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        sum += std::exp(x[j] - mx);
    }
    double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = x[j] - lse;
    }
}

} // namespace

bool parallel_enabled() {
    return g_parallel.load();
}

void set_parallel_enabled(bool on) {
    g_parallel.store(on);
}

void gemm_nn_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
        }
    }
}

void gemm_nn_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(workers())
    for (std::ptrdiff_t i = 0; i < sp(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * b[p * n + j];
            }
            double* dst = c + static_cast<std::size_t>(i) * n + j;
            *dst = accumulate ? *dst + acc : acc;
        }
    }
}

void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && m > 1 && m * k * n >= kGemmThreshold) {
        gemm_nn_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_nn_serial(a, b, c, m, k, n, accumulate);
    }
}

void gemm_nt_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[i * k + p] * b[j * k + p];
            }
            c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
        }
    }
}

void gemm_nt_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(workers())
    for (std::ptrdiff_t i = 0; i < sp(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[static_cast<std::size_t>(i) * k + p] * b[j * k + p];
            }
            double* dst = c + static_cast<std::size_t>(i) * n + j;
            *dst = accumulate ? *dst + acc : acc;
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && m > 1 && m * k * n >= kGemmThreshold) {
        gemm_nt_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_nt_serial(a, b, c, m, k, n, accumulate);
    }
}

void gemm_tn_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[p * m + i] * b[p * n + j];
            }
            c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
        }
    }
}

void gemm_tn_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) num_threads(workers())
    for (std::ptrdiff_t i = 0; i < sp(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[p * m + static_cast<std::size_t>(i)] * b[p * n + j];
            }
            double* dst = c + static_cast<std::size_t>(i) * n + j;
            *dst = accumulate ? *dst + acc : acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && m > 1 && m * k * n >= kGemmThreshold) {
        gemm_tn_parallel(a, b, c, m, k, n, accumulate);
    } else {
        gemm_tn_serial(a, b, c, m, k, n, accumulate);
    }
}

void softmax_rows_serial(const double* in, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_row(in + r * cols, out + r * cols, cols);
    }
}

void softmax_rows_parallel(const double* in, double* out, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(workers())
    for (std::ptrdiff_t r = 0; r < sp(rows); ++r) {
        softmax_row(in + static_cast<std::size_t>(r) * cols,
                    out + static_cast<std::size_t>(r) * cols, cols);
    }
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
    if (parallel_enabled() && rows >= kRowThreshold) {
        softmax_rows_parallel(in, out, rows, cols);
    } else {
        softmax_rows_serial(in, out, rows, cols);
    }
}

void log_softmax_rows_serial(const double* in, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        log_softmax_row(in + r * cols, out + r * cols, cols);
    }
}

void log_softmax_rows_parallel(const double* in, double* out, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(workers())
    for (std::ptrdiff_t r = 0; r < sp(rows); ++r) {
        log_softmax_row(in + static_cast<std::size_t>(r) * cols,
                        out + static_cast<std::size_t>(r) * cols, cols);
    }
}

void log_softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols) {
    if (parallel_enabled() && rows >= kRowThreshold) {
        log_softmax_rows_parallel(in, out, rows, cols);
    } else {
        log_softmax_rows_serial(in, out, rows, cols);
    }
}

} // namespace mimo::kernels
