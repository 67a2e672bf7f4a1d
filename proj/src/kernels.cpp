#include "rewriter/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rewriter::kernels {

namespace {
int g_threads = -1;  // -1: use the OpenMP default

// Work thresholds below which the parallel version is not worth spawning.
constexpr std::size_t kMatmulFlopCutoff = 1u << 15;
constexpr std::size_t kElementwiseCutoff = 1u << 14;

inline double dot(const double* a, const double* b, std::size_t k, std::size_t ldb) {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += a[i] * b[i * ldb];
  return s;
}

inline void softmax_row(const double* a, double* out, std::size_t cols) {
  double mx = a[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(a[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= z;
}
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j, k, n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void tanh(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
}

void sigmoid(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
}

void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(a + i * cols, out + i * cols, cols);
}

}  // namespace serial

namespace parallel {

// Each output element is produced by exactly one thread with the same inner
// loop as the serial kernel, so the two backends agree bitwise.

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot(a + i * k, b + j, k, n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) out[i] = a[i] * b[i];
}

void tanh(const double* a, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) out[i] = std::tanh(a[i]);
}

void sigmoid(const double* a, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
}

void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(rows); ++i)
    softmax_row(a + i * cols, out + i * cols, cols);
}

}  // namespace parallel

namespace {
inline bool go_parallel(std::size_t work, std::size_t cutoff) {
  return max_threads() > 1 && !in_parallel_region() && work >= cutoff;
}
}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n, kMatmulFlopCutoff))
    parallel::matmul(a, b, c, m, k, n);
  else
    serial::matmul(a, b, c, m, k, n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  if (go_parallel(n, kElementwiseCutoff))
    parallel::add(a, b, out, n);
  else
    serial::add(a, b, out, n);
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  if (go_parallel(n, kElementwiseCutoff))
    parallel::sub(a, b, out, n);
  else
    serial::sub(a, b, out, n);
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  if (go_parallel(n, kElementwiseCutoff))
    parallel::mul(a, b, out, n);
  else
    serial::mul(a, b, out, n);
}

void tanh(const double* a, double* out, std::size_t n) {
  if (go_parallel(n, kElementwiseCutoff))
    parallel::tanh(a, out, n);
  else
    serial::tanh(a, out, n);
}

void sigmoid(const double* a, double* out, std::size_t n) {
  if (go_parallel(n, kElementwiseCutoff))
    parallel::sigmoid(a, out, n);
  else
    serial::sigmoid(a, out, n);
}

void softmax_rows(const double* a, double* out, std::size_t rows, std::size_t cols) {
  if (go_parallel(rows * cols, kElementwiseCutoff))
    parallel::softmax_rows(a, out, rows, cols);
  else
    serial::softmax_rows(a, out, rows, cols);
}

}  // namespace rewriter::kernels
