#include "rgcd/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "rgcd/error.hpp"

namespace rgcd::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Array>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  Var root = f(tape, leaves);
  const double v = root.value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Array>& params, double fd_step) {
  if (!(fd_step > 0.0)) throw DomainError("grad_check: fd_step must be positive");

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p));
  Var root = f(tape, leaves);
  if (!std::isfinite(root.value().item())) throw NumericError("grad_check: objective is not finite");
  tape.backward(root);

  GradCheckResult result;
  std::vector<Array> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Array& analytic = tape.grad(leaves[p]);
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double x0 = params[p][i];
      probe[p][i] = x0 + fd_step;
      const double up = evaluate(f, probe);
      probe[p][i] = x0 - fd_step;
      const double down = evaluate(f, probe);
      probe[p][i] = x0;
      const double fd = (up - down) / (2.0 * fd_step);
      const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
      }
      ++result.checked;
    }
  }
  return result;
}

}  // namespace rgcd::ad
