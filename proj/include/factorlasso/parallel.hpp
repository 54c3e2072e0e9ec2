#pragma once

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace factorlasso {

// 0 = auto (OpenMP default team size; 1 without OpenMP).
int resolve_threads(int requested);

bool openmp_enabled();

// Data-parallel loop: body(i) for i in [0, count). Each index is written by
// exactly one thread, so results are identical for every thread count.
template <class F>
void parallel_for(int count, int threads, F&& body) {
  threads = resolve_threads(threads);
#ifdef _OPENMP
  if (threads > 1 && count > 1) {
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
#pragma omp critical
        {
          if (!err) err = std::current_exception();
        }
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#endif
  for (int i = 0; i < count; ++i) body(i);
}

}  // namespace factorlasso
