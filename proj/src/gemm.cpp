#include "gemm.hpp"

#include <cblas.h>

#include <mutex>

namespace scg::detail {
namespace {

// One graph is evaluated on one thread; BLAS threading would make reduction
// order depend on the host.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              accumulate ? 1.0 : 0.0, c, static_cast<int>(n));
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm(CblasNoTrans, CblasNoTrans, m, n, k, a, k, b, n, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm(CblasTrans, CblasNoTrans, m, n, k, a, m, b, n, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm(CblasNoTrans, CblasTrans, m, n, k, a, k, b, k, c, accumulate);
}

}  // namespace scg::detail
