#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cir/tensor.hpp"

namespace cir::nd {

struct GradCheckReport {
  double max_rel_error = 0.0;
  // Location of the worst element, for diagnostics.
  std::string worst;
};

// Compares tape gradients of a scalar-valued expression against central
// differences. fn is re-evaluated with perturbed inputs, so it must be a
// pure function of the input values (batch-norm running-stat updates are
// fine: they do not feed back into the same call's output).
//
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3);
// the floor keeps round-off on near-zero gradients from dominating.
GradCheckReport gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    std::vector<Tensor> inputs, double step = 1e-5);

}  // namespace cir::nd
