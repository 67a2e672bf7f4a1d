#pragma once

#include <cstddef>

namespace rewriter::kernels {

// Dense double-precision kernels. Every kernel exists twice: a plain serial
// reference in kernels::serial and an OpenMP version in kernels::parallel.
// The dispatching entry points below pick the parallel version when it is
// worth it. Both versions compute each output element with the identical
// serial inner loop, so results are bitwise equal regardless of thread count.

namespace serial {
// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void tanh(const double* a, double* out, std::size_t n);
void sigmoid(const double* a, double* out, std::size_t n);
// row-wise softmax over the last axis, numerically shifted by the row max
void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void tanh(const double* a, double* out, std::size_t n);
void sigmoid(const double* a, double* out, std::size_t n);
void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols);
}  // namespace parallel

int max_threads();
void set_threads(int n);  // n <= 1 forces the serial path everywhere
bool in_parallel_region();

// Dispatched entry points used by the autodiff tape.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void tanh(const double* a, double* out, std::size_t n);
void sigmoid(const double* a, double* out, std::size_t n);
void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols);

}  // namespace rewriter::kernels
