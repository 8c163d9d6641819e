#pragma once

#include <functional>
#include <span>
#include <string>

#include "sluadv/optim.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::nn {

/// Builds the scalar loss on `tape` from the current parameter values. Must
/// be deterministic (no dropout) and register the checked parameters as
/// trainable leaves.
using GraphLoss = std::function<Var(Tape&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;  // "tensor[index]"
  std::size_t entries_checked = 0;
};

/// Compares the tape's analytic gradient with central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) entry by entry. The relative error of
/// an entry is |a - n| / max(|a|, |n|, 1e-8). `max_entries_per_tensor` > 0
/// checks an evenly strided subset of large tensors.
GradCheckReport grad_check(const GraphLoss& loss, std::span<const NamedParameter> params, double eps = 1e-5,
                           std::size_t max_entries_per_tensor = 0);

/// Convenience overload over every tensor of `groups`.
GradCheckReport grad_check(const GraphLoss& loss, std::span<const ParamGroup> groups, double eps = 1e-5,
                           std::size_t max_entries_per_tensor = 0);

}  // namespace sluadv::nn
