#pragma once

#include <functional>
#include <vector>

#include "deepshield/diffcore/autograd.hpp"

namespace deepshield {

/// Hook applied to the analytic gradients before comparison; used to prove
/// that the harness catches a broken backward pass.
using GradTamper = std::function<void(std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of scalar `fn` against central finite
/// differences for every element of `params`. Returns
/// max |analytic - numeric| / max(1, |analytic|).
double grad_check(const std::function<Var<double>()>& fn, const std::vector<Var<double>>& params,
                  double epsilon = 1e-5, const GradTamper& tamper = {});

}  // namespace deepshield
