#pragma once

#include <cstddef>

namespace hetprod {

// Number of worker threads used by parallel loops. Numeric results never
// depend on this value: every reduction runs over a partition that is fixed
// by the problem size alone.
void set_num_threads(int threads);
int num_threads();

}  // namespace hetprod
