#pragma once

#include <exception>
#include <utility>

namespace sae {

/// Holds the first exception thrown inside an OpenMP loop body so it can be
/// rethrown on the calling thread once the loop is done.
class ExceptionSlot {
 public:
  template <typename F>
  void run(F&& body) noexcept {
    try {
      std::forward<F>(body)();
    } catch (...) {
#pragma omp critical(sae_exception_slot)
      {
        if (!first_) first_ = std::current_exception();
      }
    }
  }

  void rethrow() const {
    if (first_) std::rethrow_exception(first_);
  }

 private:
  std::exception_ptr first_;
};

/// Sets the OpenMP worker count; n <= 0 keeps the runtime default.
void set_worker_count(int n);

}  // namespace sae
