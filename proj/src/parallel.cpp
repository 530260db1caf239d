#include "sae/parallel.hpp"

#include <omp.h>

namespace sae {

void set_worker_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace sae
