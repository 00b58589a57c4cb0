#include "macflow/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstddef>

namespace macflow::kernels {
namespace {

std::atomic<bool> g_single_thread{false};

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

bool use_parallel(std::size_t outer, std::size_t work) {
  return !g_single_thread.load(std::memory_order_relaxed) && outer > 1 &&
         work >= kParallelWork && omp_get_max_threads() > 1;
}

inline void gemm_row(const double* __restrict a_row, const double* __restrict b,
                     double* __restrict c_row, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* __restrict b_row = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

// Four rows at once so each row of B is loaded once per four outputs. The
// per-element accumulation order over p is the same as gemm_row's.
inline void gemm_rows4(const double* __restrict a, const double* __restrict b,
                       double* __restrict c, std::size_t k, std::size_t m) {
  double* __restrict c0 = c;
  double* __restrict c1 = c + m;
  double* __restrict c2 = c + 2 * m;
  double* __restrict c3 = c + 3 * m;
  for (std::size_t p = 0; p < k; ++p) {
    const double a0 = a[p], a1 = a[k + p], a2 = a[2 * k + p], a3 = a[3 * k + p];
    const double* __restrict b_row = b + p * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double bv = b_row[j];
      c0[j] += a0 * bv;
      c1[j] += a1 * bv;
      c2[j] += a2 * bv;
      c3[j] += a3 * bv;
    }
  }
}

// Rows [4*block, min(4*block+4, n)).
inline void gemm_block(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                       std::size_t m, std::size_t block) {
  const std::size_t i = 4 * block;
  if (i + 4 <= n) {
    gemm_rows4(a + i * k, b, c + i * m, k, m);
  } else {
    for (std::size_t r = i; r < n; ++r) gemm_row(a + r * k, b, c + r * m, k, m);
  }
}

inline void gemm_tn_row(const double* __restrict a, const double* __restrict b,
                        double* __restrict c_row, std::size_t n, std::size_t k, std::size_t m,
                        std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a[i * k + p];
    const double* __restrict b_row = b + i * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

inline void gemm_nt_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                        std::size_t m, bool accumulate) {
  // Four outputs at a time; each is still summed in p order.
  std::size_t j = 0;
  for (; j + 4 <= k; j += 4) {
    const double *b0 = b + j * m, *b1 = b0 + m, *b2 = b1 + m, *b3 = b2 + m;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      const double x = a_row[p];
      s0 += x * b0[p];
      s1 += x * b1[p];
      s2 += x * b2[p];
      s3 += x * b3[p];
    }
    const double s[4] = {s0, s1, s2, s3};
    for (std::size_t q = 0; q < 4; ++q) c_row[j + q] = accumulate ? c_row[j + q] + s[q] : s[q];
  }
  for (; j < k; ++j) {
    const double* b_row = b + j * m;
    double acc = 0.0;
    for (std::size_t p = 0; p < m; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = accumulate ? c_row[j] + acc : acc;
  }
}

}  // namespace

void gemm_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, 0.0);
  for (std::size_t blk = 0; blk < (n + 3) / 4; ++blk) gemm_block(a, b, c, n, k, m, blk);
}

void gemm_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m, bool accumulate) {
  const auto blocks = static_cast<std::ptrdiff_t>((n + 3) / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i = 4 * static_cast<std::size_t>(blk);
    if (!accumulate) std::fill(c + i * m, c + std::min(i + 4, n) * m, 0.0);
    gemm_block(a, b, c, n, k, m, static_cast<std::size_t>(blk));
  }
}

void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * m, 0.0);
  for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a, b, c + p * m, n, k, m, p);
}

void gemm_tn_parallel(const double* a, const double* b, double* c, std::size_t n,
                      std::size_t k, std::size_t m, bool accumulate) {
  const auto outer = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < outer; ++p) {
    double* c_row = c + p * m;
    if (!accumulate) std::fill(c_row, c_row + m, 0.0);
    gemm_tn_row(a, b, c_row, n, k, m, static_cast<std::size_t>(p));
  }
}

void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) gemm_nt_row(a + i * m, b, c + i * k, k, m, accumulate);
}

void gemm_nt_parallel(const double* a, const double* b, double* c, std::size_t n,
                      std::size_t k, std::size_t m, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_nt_row(a + i * m, b, c + i * k, k, m, accumulate);
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
          std::size_t m, bool accumulate) {
  if (use_parallel((n + 3) / 4, n * k * m)) {
    gemm_parallel(a, b, c, n, k, m, accumulate);
  } else {
    gemm_serial(a, b, c, n, k, m, accumulate);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  if (use_parallel(k, n * k * m)) {
    gemm_tn_parallel(a, b, c, n, k, m, accumulate);
  } else {
    gemm_tn_serial(a, b, c, n, k, m, accumulate);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  if (use_parallel(n, n * k * m)) {
    gemm_nt_parallel(a, b, c, n, k, m, accumulate);
  } else {
    gemm_nt_serial(a, b, c, n, k, m, accumulate);
  }
}

void set_single_thread(bool on) {
  g_single_thread.store(on, std::memory_order_relaxed);
  if (on) omp_set_num_threads(1);
}

bool single_thread() { return g_single_thread.load(std::memory_order_relaxed); }

int max_threads() { return single_thread() ? 1 : omp_get_max_threads(); }

}  // namespace macflow::kernels
