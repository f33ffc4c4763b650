#pragma once

namespace panoepi {

// Caps the number of OpenMP threads used by the parallel kernels.
// n >= 1 sets the cap; n <= 0 is ignored (keeps the current setting).
void set_max_threads(int n);

// Threads the parallel kernels will use right now (1 when built without
// OpenMP).
int max_threads();

}  // namespace panoepi
