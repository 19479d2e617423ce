#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pixelstack/tensor.hpp"

namespace pixelstack {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares autodiff gradients of a scalar function against central
/// differences. Every tensor in `leaves` must be a leaf requiring grad; it is
/// perturbed in place and restored. Relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport gradient_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                               double h = 1e-5, double tol = 1e-4);

/// Single-input form: `f` is evaluated on a leaf copy of `x`.
GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5, double tol = 1e-4);

}  // namespace pixelstack
