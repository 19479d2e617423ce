#include "pixelstack/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pixelstack/error.hpp"

namespace pixelstack {

GradCheckReport gradient_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                               double h, double tol) {
  GradCheckReport report;
  report.tolerance = tol;
  std::vector<Tensor> xs = leaves;
  for (auto& x : xs) {
    if (!x.is_leaf() || !x.requires_grad()) throw GraphError("gradient_check needs leaves that require grad");
    x.zero_grad();
  }
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (const auto& x : xs) {
    const auto g = x.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(x.numel(), 0.0);
  }
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto data = xs[t].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = f().item();
      data[i] = orig - h;
      const double fm = f().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++report.checked;
      if (report.checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = t;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h,
                               double tol) {
  const auto d = x.data();
  Tensor leaf = Tensor::from_data(x.shape(), std::vector<double>(d.begin(), d.end()), true);
  return gradient_check([&] { return f(leaf); }, {leaf}, h, tol);
}

}  // namespace pixelstack
