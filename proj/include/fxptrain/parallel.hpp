#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fxptrain::par {

// Process-wide switch between the OpenMP kernels and the serial path.
// Every parallel loop in the library assigns each output element to exactly
// one thread and keeps per-element reduction order fixed, so flipping this
// switch (or changing the thread count) never changes a single bit of the
// result. Tests assert that equivalence; the benchmark measures its cost.
bool enabled();
void set_enabled(bool on);

int max_threads();
void set_threads(int n);  // n <= 0 restores the OpenMP default

template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifdef _OPENMP
  if (enabled() && n > 1) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    body(i);
  }
}

}  // namespace fxptrain::par
