#pragma once

#include <cstddef>

// Row-major dense products backed by CBLAS. All variants accumulate into C
// when `accumulate` is set, otherwise overwrite it.
namespace scg::detail {

// C[M,N] = A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[M,N] = A^T * B with A stored [K,M]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C[M,N] = A * B^T with B stored [N,K]
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

}  // namespace scg::detail
