#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rgcd/autodiff/tape.hpp"

namespace rgcd::ad {

// A scalar objective built on a fresh tape from leaf handles of `params`.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `f` against central differences,
// entry by entry. Error per entry is |ad - fd| / max(1, |fd|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Array>& params,
                           double fd_step = 1e-6);

}  // namespace rgcd::ad
