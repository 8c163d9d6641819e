#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sluadv/tape.hpp"

namespace sluadv::nn {

struct NamedParameter {
  std::string name;
  Parameter* param = nullptr;
};

/// A named set of tensors updated together. Groups are views into a model;
/// `trainable` is what the optimizer consults.
struct ParamGroup {
  std::string name;
  std::vector<NamedParameter> tensors;
  bool trainable = true;

  std::size_t parameter_count() const;
};

void zero_grads(std::span<const ParamGroup> groups);
std::size_t parameter_count(std::span<const ParamGroup> groups);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments keyed by "group/tensor". Each tensor keeps its own update
/// count for bias correction, so tensors frozen for a while resume correctly.
struct OptimizerState {
  struct Moments {
    Matrix first;
    Matrix second;
    std::int64_t updates = 0;
  };
  std::map<std::string, Moments> moments;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every tensor in a trainable group.
/// Frozen groups are left untouched, moments included.
void adam_step(std::span<const ParamGroup> groups, OptimizerState& state, double lr, const AdamConfig& config = {});

/// scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
double noam_lr(std::int64_t step, int d_model, int warmup, double scale);

}  // namespace sluadv::nn
