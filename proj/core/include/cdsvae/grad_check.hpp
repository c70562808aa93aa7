#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cdsvae/tensor.hpp"

namespace cdsvae::ad {

struct GradCheckReport {
  // max over coordinates of |tape - fd| / max(1, |tape|, |fd|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tol = 0.0;
  bool passed = false;
};

// Compares the tape gradient of scalar f at `point` against central finite
// differences with step `step`.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double tol, float step = 1e-3f);

// Same comparison for a loss closed over `params`, perturbing parameter values
// in place (restored afterwards). `stride` > 1 checks every stride-th
// coordinate of each parameter.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  double tol, float step = 1e-3f, std::size_t stride = 1);

}  // namespace cdsvae::ad
