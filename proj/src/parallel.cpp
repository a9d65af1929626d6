#include "sviglmm/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sviglmm {

namespace {
int g_thread_cap = 0;

int env_cap() {
  static const int cap = [] {
    if (const char* s = std::getenv("SVI_GLMM_THREADS")) {
      const int v = std::atoi(s);
      if (v > 0) return v;
    }
    return 0;
  }();
  return cap;
}
}  // namespace

int worker_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (env_cap() > 0 && env_cap() < n) n = env_cap();
  if (g_thread_cap > 0 && g_thread_cap < n) n = g_thread_cap;
  return n < 1 ? 1 : n;
}

void set_thread_cap(int n) { g_thread_cap = n; }

}  // namespace sviglmm
