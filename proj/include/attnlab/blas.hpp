#pragma once

#include <cstddef>

namespace attnlab {

// Row-major dgemm: C = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k, op(B) is k x n, C is m x n. Leading dimensions allow
// operating on column slices of a wider matrix without copying.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc);

// OpenBLAS picks its kernel family from OPENBLAS_CORETYPE when the shared
// library loads, which is before any code in this process runs. On machines
// whose cpuid model is unknown to the library (common inside VMs) the
// fallback kernel is several times slower than the AVX-512 one, so when the
// variable is unset and AVX-512 is available this re-execs the process once
// with the kernel pinned. Call first thing in main.
void ensure_fast_blas(char** argv);

}  // namespace attnlab
