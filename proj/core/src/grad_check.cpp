#include "sluadv/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sluadv::nn {

namespace {

double evaluate(const GraphLoss& loss) {
  Tape tape;
  return tape.scalar(loss(tape));
}

}  // namespace

GradCheckReport grad_check(const GraphLoss& loss, std::span<const NamedParameter> params, double eps,
                           std::size_t max_entries_per_tensor) {
  for (const auto& p : params) p.param->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.param->grad);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& value = params[k].param->value;
    const auto size = static_cast<std::size_t>(value.size());
    std::size_t stride = 1;
    if (max_entries_per_tensor > 0 && size > max_entries_per_tensor) {
      stride = (size + max_entries_per_tensor - 1) / max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < size; i += stride) {
      double& x = value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double plus = evaluate(loss);
      x = saved - eps;
      const double minus = evaluate(loss);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.entries_checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_entry = params[k].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const GraphLoss& loss, std::span<const ParamGroup> groups, double eps,
                           std::size_t max_entries_per_tensor) {
  std::vector<NamedParameter> params;
  for (const auto& g : groups) {
    for (const auto& t : g.tensors) params.push_back({g.name + "/" + t.name, t.param});
  }
  return grad_check(loss, params, eps, max_entries_per_tensor);
}

}  // namespace sluadv::nn
