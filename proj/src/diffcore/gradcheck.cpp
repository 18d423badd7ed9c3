#include "deepshield/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "deepshield/errors.hpp"

namespace deepshield {

namespace {

double evaluate(const std::function<Var<double>()>& fn) {
  Var<double> out = fn();
  if (out.numel() != 1) throw ContractError("grad_check function must return a scalar, got " + shape_str(out.shape()));
  return out.value()[0];
}

}  // namespace

double grad_check(const std::function<Var<double>()>& fn, const std::vector<Var<double>>& params, double epsilon,
                  const GradTamper& tamper) {
  if (!(epsilon > 0.0)) throw ConfigError("grad_check epsilon must be positive");
  for (auto p : params) p.zero_grad();
  Var<double> loss = fn();
  if (loss.numel() != 1) throw ContractError("grad_check function must return a scalar, got " + shape_str(loss.shape()));
  backward(loss);

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : Tensor<double>(p.shape()));
  if (tamper) tamper(analytic);

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var<double> p = params[k];
    auto& w = p.mutable_value();
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double saved = w[i];
      w[i] = saved + epsilon;
      const double up = evaluate(fn);
      w[i] = saved - epsilon;
      const double down = evaluate(fn);
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace deepshield
