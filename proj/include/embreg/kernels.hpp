#pragma once

#include <cstddef>
#include <span>

// Dense inner loops. Every kernel exists twice: a plain serial reference and
// an OpenMP version that splits the outer row loop across threads. Both
// accumulate each output element in the same order, so results are bitwise
// identical for any thread count.

namespace embreg::kernels {

namespace serial {
// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
// D[n,n] Euclidean distances between the rows of P[n,d].
void pairwise_distances(std::size_t n, std::size_t d, const double* p, double* out);
}  // namespace serial

namespace omp {
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void pairwise_distances(std::size_t n, std::size_t d, const double* p, double* out);
}  // namespace omp

bool have_openmp();
int max_threads();

// Dispatchers used by the rest of the library. Small problems stay serial.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate);
void pairwise_distances(std::size_t n, std::size_t d, const double* p, double* out);

}  // namespace embreg::kernels
