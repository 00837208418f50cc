#include <cmath>
#include <cstdint>

#include "embreg/kernels.hpp"

#ifdef EMBREG_HAVE_OPENMP
#include <omp.h>
#endif

namespace embreg::kernels {

namespace omp {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void pairwise_distances(std::size_t n, std::size_t d, const double* p, double* out) {
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        const double diff = p[i * d + q] - p[j * d + q];
        acc += diff * diff;
      }
      out[i * n + j] = std::sqrt(acc);
    }
  }
}

}  // namespace omp

bool have_openmp() {
#ifdef EMBREG_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef EMBREG_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 16;

bool go_parallel(std::size_t work) {
#ifdef EMBREG_HAVE_OPENMP
  return work >= kParallelWork && omp_get_max_threads() > 1 && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}
}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  if (go_parallel(m * k * n))
    omp::gemm_nn(m, k, n, a, b, c, accumulate);
  else
    serial::gemm_nn(m, k, n, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  if (go_parallel(m * k * n))
    omp::gemm_nt(m, k, n, a, b, c, accumulate);
  else
    serial::gemm_nt(m, k, n, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
             bool accumulate) {
  if (go_parallel(m * k * n))
    omp::gemm_tn(m, k, n, a, b, c, accumulate);
  else
    serial::gemm_tn(m, k, n, a, b, c, accumulate);
}

void pairwise_distances(std::size_t n, std::size_t d, const double* p, double* out) {
  if (go_parallel(n * n * d))
    omp::pairwise_distances(n, d, p, out);
  else
    serial::pairwise_distances(n, d, p, out);
}

}  // namespace embreg::kernels
