#pragma once

#include <string>
#include <vector>

#include "sluadv/ops.hpp"
#include "sluadv/optim.hpp"
#include "sluadv/random.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::nn {

/// Glorot-uniform rows x cols.
Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// y = activation(x W^T + b), W: out x in.
struct DenseLayer {
  Parameter weight;
  Parameter bias;

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out, Rng& rng);

  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }

  Var apply(Tape& tape, Var x, Activation activation, bool trainable) const;
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

}  // namespace sluadv::nn
