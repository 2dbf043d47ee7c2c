#include "comer/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace comer::num {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           double eps, double floor) {
  for (auto& in : inputs) {
    if (!in.requires_grad()) throw std::invalid_argument("grad_check: inputs must be parameters");
    in.zero_grad();
  }
  Tensor out = f();
  if (out.numel() != 1) {
    throw ShapeError("grad_check: function output must be scalar, got " + to_string(out.shape()));
  }
  backward(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = f().item();
      values[i] = saved - eps;
      const double minus = f().item();
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = rel;
        report.input = k;
        report.coord = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace comer::num
