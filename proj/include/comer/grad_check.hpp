#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "comer/tensor.hpp"

namespace comer::num {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t input = 0;  // index into the checked inputs of the worst coordinate
  std::size_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences (f(x+eps) - f(x-eps)) / 2eps
/// for every coordinate of every input. The relative error of a coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); `floor` keeps
/// vanishing components from turning round-off into huge ratios.
///
/// `f` must rebuild its graph on every call and return a scalar; inputs must
/// be parameter tensors.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           double eps = 1e-4, double floor = 1e-6);

}  // namespace comer::num
