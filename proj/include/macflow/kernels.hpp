#pragma once

#include <cstddef>

// Dense matrix kernels used by the autodiff tape and the inference path.
//
// Each kernel has a serial reference and an OpenMP version that splits the
// outermost output dimension across threads. Every output element is reduced
// by exactly one thread in the same order as the serial loop, so the two
// versions agree bitwise; tests rely on that.
namespace macflow::kernels {

// C(n x m) (+)= A(n x k) * B(k x m)
void gemm_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate);
void gemm_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m, bool accumulate);

// C(k x m) (+)= A(n x k)^T * B(n x m)
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate);
void gemm_tn_parallel(const double* a, const double* b, double* c, std::size_t n,
                      std::size_t k, std::size_t m, bool accumulate);

// C(n x k) (+)= A(n x m) * B(k x m)^T
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate);
void gemm_nt_parallel(const double* a, const double* b, double* c, std::size_t n,
                      std::size_t k, std::size_t m, bool accumulate);

// Dispatching entry points. They use the parallel kernels when threading is
// enabled and the problem is large enough to amortize the fork.
void gemm(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
          std::size_t m, bool accumulate = false);
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate = false);
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate = false);

// Single-thread mode pins OpenMP to one thread and routes every call through
// the serial kernels.
void set_single_thread(bool on);
bool single_thread();
int max_threads();

}  // namespace macflow::kernels
