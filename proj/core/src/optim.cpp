#include "sluadv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sluadv::nn {

std::size_t ParamGroup::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.param->value.size());
  return n;
}

void zero_grads(std::span<const ParamGroup> groups) {
  for (const auto& g : groups) {
    for (const auto& t : g.tensors) t.param->zero_grad();
  }
}

std::size_t parameter_count(std::span<const ParamGroup> groups) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.parameter_count();
  return n;
}

void adam_step(std::span<const ParamGroup> groups, OptimizerState& state, double lr, const AdamConfig& config) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  ++state.step;
  for (const auto& group : groups) {
    if (!group.trainable) continue;
    for (const auto& [name, param] : group.tensors) {
      Matrix& value = param->value;
      const Matrix& grad = param->grad;
      if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
        throw ShapeError("adam_step: gradient shape mismatch for " + group.name + "/" + name);
      }
      auto& m = state.moments[group.name + "/" + name];
      if (m.updates == 0) {
        m.first = Matrix::Zero(value.rows(), value.cols());
        m.second = Matrix::Zero(value.rows(), value.cols());
      }
      ++m.updates;
      m.first = config.beta1 * m.first + (1.0 - config.beta1) * grad;
      m.second = config.beta2 * m.second + (1.0 - config.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(m.updates));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(m.updates));
      value.array() -= lr * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + config.epsilon);
    }
  }
}

double noam_lr(std::int64_t step, int d_model, int warmup, double scale) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (d_model < 1 || warmup < 1) throw std::invalid_argument("noam_lr: d_model and warmup must be positive");
  const double s = static_cast<double>(step);
  return scale * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

}  // namespace sluadv::nn
