#pragma once

#include <cstddef>

// Dense kernels behind the tensor ops. Each kernel comes in two variants: a
// serial reference (`*_serial`) and an OpenMP version (`*_parallel`). The
// parallel variants split work over independent output elements only -- every
// output element is produced by the same serial inner loop in both variants --
// so the two are bit-identical and tests compare them exactly. The unsuffixed
// entry points dispatch on the global switch and a size threshold.
namespace mimo::kernels {

bool parallel_enabled();
void set_parallel_enabled(bool on);

// c(m x n) = a(m x k) * b(k x n); accumulate adds into c instead of overwriting.
void gemm_nn_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nn_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c(m x n) = a(m x k) * b(n x k)^T
void gemm_nt_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// c(m x n) = a(k x m)^T * b(k x n)
void gemm_tn_serial(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn_parallel(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// Row-wise softmax / log-softmax with max subtraction.
void softmax_rows_serial(const double* in, double* out, std::size_t rows, std::size_t cols);
void softmax_rows_parallel(const double* in, double* out, std::size_t rows, std::size_t cols);
void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

void log_softmax_rows_serial(const double* in, double* out, std::size_t rows, std::size_t cols);
void log_softmax_rows_parallel(const double* in, double* out, std::size_t rows, std::size_t cols);
void log_softmax_rows(const double* in, double* out, std::size_t rows, std::size_t cols);

} // namespace mimo::kernels
