#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sluadv/random.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::nn {

/// Validity of the rows of a padded token-level tensor: row b * max_len + t
/// is a real token iff mask[b * max_len + t] != 0. Valid rows form a prefix
/// of every item.
struct SequenceMask {
  std::span<const std::uint8_t> mask;
  std::size_t max_len = 0;

  std::size_t batch_size() const { return max_len == 0 ? 0 : mask.size() / max_len; }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * max_len + t] != 0; }
  std::size_t length(std::size_t b) const;
};

enum class Activation { identity, relu, gelu };

double gelu(double x);

// Differentiable ops. Token-level inputs are (batch * max_len) x d.

Var matmul(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
/// sum_k weight_k * term_k over 1x1 terms.
Var weighted_sum(Tape& tape, const std::vector<std::pair<double, Var>>& terms);
Var activate(Tape& tape, Var x, Activation activation);

/// activation(x W^T + b) row-wise, with W stored d_out x d_in and b 1 x d_out.
Var dense(Tape& tape, Var x, Var weight, Var bias, Activation activation);

/// Inverted dropout; identity when `rng` is null or rate == 0.
Var dropout(Tape& tape, Var x, double rate, Rng* rng);

/// Row-wise layer normalization with learned gain and bias (1 x d each).
Var layer_norm(Tape& tape, Var x, Var gain, Var bias, double eps = 1e-5);

/// Rows of `table` selected by `ids`.
Var embedding(Tape& tape, Var table, std::span<const std::int32_t> ids);

/// x[b * max_len + t] += positions[t].
Var add_positions(Tape& tape, Var x, Var positions, std::size_t max_len);

/// Scaled dot-product self-attention over the valid positions of each item,
/// split across `n_heads` column blocks. Masked keys receive zero weight and
/// masked query rows produce zero output.
Var self_attention(Tape& tape, Var q, Var k, Var v, const SequenceMask& mask, std::size_t n_heads);

/// Width-3 convolution along the token axis with zero padding outside the
/// valid prefix, followed by ReLU. kernel is d_out x (3 * d_in) laid out as
/// [previous | current | next]. Masked rows of the output are zero.
Var conv_tokens(Tape& tape, Var h, Var kernel, Var bias, const SequenceMask& mask);

/// Per-item, per-feature maximum over valid positions -> batch x d. Gradient
/// flows to the first maximizing position.
Var masked_max_pool(Tape& tape, Var h, const SequenceMask& mask);

Var concat_cols(Tape& tape, const std::vector<Var>& parts);

/// out[r] = sum_l parts[l][r] * weights(r / rows_per_item, l).
Var mix(Tape& tape, const std::vector<Var>& parts, Var weights, std::size_t rows_per_item);

/// Mean over rows of -log softmax(logits[r])[targets[r]] -> 1x1.
Var cross_entropy(Tape& tape, Var logits, std::span<const std::int32_t> targets);

/// Mean of all entries -> 1x1.
Var mean(Tape& tape, Var x);

// Plain helpers.

Matrix softmax_rows(const Matrix& logits);

struct SoftmaxXent {
  Eigen::VectorXd probabilities;
  double loss = 0.0;
};

/// Softmax with max subtraction and -log p[target].
SoftmaxXent softmax_xent(const Eigen::VectorXd& logits, std::int32_t target);

}  // namespace sluadv::nn
