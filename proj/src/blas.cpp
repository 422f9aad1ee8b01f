#include "attnlab/blas.hpp"

#include <cblas.h>
#include <malloc.h>
#include <unistd.h>

#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace attnlab {
namespace {

// Large tensors churn through malloc during training; keep big blocks on the
// heap instead of mmap so freed buffers are reused without page faults.
struct RuntimeInit {
  RuntimeInit() {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
  }
};
const RuntimeInit runtime_init;

struct BlasThreadInit {
  BlasThreadInit() { openblas_set_num_threads(1); }
};

}  // namespace

void ensure_fast_blas(char** argv) {
#if defined(__x86_64__)
  if (getenv("OPENBLAS_CORETYPE") != nullptr) return;
  if (getenv("ATTNLAB_NO_REEXEC") != nullptr) return;
  if (!__builtin_cpu_supports("avx512f")) return;
  setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
  setenv("ATTNLAB_NO_REEXEC", "1", 1);
  execv("/proc/self/exe", argv);
  // exec failed; continue with the slow kernels
#else
  (void)argv;
#endif
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  static const BlasThreadInit thread_init;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace attnlab
