#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace icl {

// Worker count resolution: explicit argument wins, then ICL_WORKERS, then
// the OpenMP default. 1 means serial.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ICL_WORKERS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Data-parallel loop over [0, n). Each item must be independent and write
// only to its own slots, so serial and parallel execution are bit-identical.
// The serial path is the reference implementation used by the tests and the
// benchmark tool.
template <typename Body>
void parallel_for(std::int64_t n, int workers, Body&& body) {
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::int64_t i = 0; i < n; ++i) body(i);
#else
  for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

template <typename Body>
void serial_for(std::int64_t n, Body&& body) {
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace icl
