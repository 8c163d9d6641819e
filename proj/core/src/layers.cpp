#include "sluadv/layers.hpp"

#include <cmath>

namespace sluadv::nn {

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_real(rng, -limit, limit);
  return m;
}

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * standard_normal(rng);
  return m;
}

DenseLayer::DenseLayer(Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(glorot(out, in, rng)), bias(Matrix::Zero(1, out)) {}

Var DenseLayer::apply(Tape& tape, Var x, Activation activation, bool trainable) const {
  return dense(tape, x, tape.parameter(weight, trainable), tape.parameter(bias, trainable), activation);
}

void DenseLayer::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

}  // namespace sluadv::nn
