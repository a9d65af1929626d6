#ifndef SVIGLMM_PARALLEL_HPP
#define SVIGLMM_PARALLEL_HPP

#include <cstddef>

namespace sviglmm {

/// Execution policy for the per-cluster kernels. Serial is the reference
/// implementation; Parallel uses OpenMP worker threads.
enum class Execution { Serial, Parallel };

/// Number of worker threads, honoring the SVI_GLMM_THREADS cap.
int worker_threads();

/// Override the thread cap (0 restores the environment default).
void set_thread_cap(int n);

/// Apply fn(i) for i in [0, n). Under Execution::Parallel the iterations run
/// on OpenMP threads; fn must not touch shared mutable state except slots
/// owned by iteration i.
template <typename Fn>
void for_each_index(std::ptrdiff_t n, Execution exec, Fn&& fn);

}  // namespace sviglmm

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sviglmm {

template <typename Fn>
void for_each_index(std::ptrdiff_t n, Execution exec, Fn&& fn) {
#ifdef _OPENMP
  if (exec == Execution::Parallel && worker_threads() > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)exec;
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

}  // namespace sviglmm

#endif
