#pragma once

#include <string>
#include <vector>

#include "sluadv/crf.hpp"
#include "sluadv/layers.hpp"

namespace sluadv {

/// FFN^I (two GELU dense layers, dropout after each) and the intent projection.
class IcDecoder {
 public:
  IcDecoder() = default;
  IcDecoder(int input_dim, int hidden_dim, int n_intents, double dropout, Rng& rng);

  /// batch x d sentence representations -> batch x n_intents logits.
  nn::Var logits(nn::Tape& tape, nn::Var sentence, Rng* dropout_rng) const;

  int input_dim() const { return static_cast<int>(hidden1_.in_dim()); }
  int n_intents() const { return static_cast<int>(output_.out_dim()); }
  nn::DenseLayer& output_layer() { return output_; }

  std::vector<nn::NamedParameter> parameters();

  bool trainable = true;

 private:
  nn::DenseLayer hidden1_, hidden2_, output_;
  double dropout_ = 0.5;
};

/// Position-wise FFN^S, the emission projection and the CRF transitions.
class SfDecoder {
 public:
  SfDecoder() = default;
  SfDecoder(int input_dim, int hidden_dim, int n_labels, double dropout, Rng& rng);

  /// (batch * max_len) x d -> (batch * max_len) x n_labels emission scores.
  nn::Var emissions(nn::Tape& tape, nn::Var tokens, Rng* dropout_rng) const;
  nn::Var transitions(nn::Tape& tape) const { return tape.parameter(transitions_, trainable); }

  int input_dim() const { return static_cast<int>(hidden1_.in_dim()); }
  int n_labels() const { return static_cast<int>(emit_.out_dim()); }
  const nn::Matrix& transition_matrix() const { return transitions_.value; }
  nn::Parameter& transition_parameter() { return transitions_; }

  std::vector<nn::NamedParameter> parameters();

  bool trainable = true;

 private:
  nn::DenseLayer hidden1_, hidden2_, emit_;
  nn::Parameter transitions_;  // (n_labels + 2) x (n_labels + 2)
  double dropout_ = 0.2;
};

/// One GELU dense layer plus a projection onto languages; used for both the
/// language predictor and the language discriminator.
class LangHead {
 public:
  LangHead() = default;
  LangHead(int input_dim, int hidden_dim, int n_languages, double dropout, Rng& rng);

  nn::Var logits(nn::Tape& tape, nn::Var sentence, Rng* dropout_rng) const;

  int n_languages() const { return static_cast<int>(output_.out_dim()); }
  nn::DenseLayer& output_layer() { return output_; }

  std::vector<nn::NamedParameter> parameters();

  bool trainable = true;

 private:
  nn::DenseLayer hidden_, output_;
  double dropout_ = 0.5;
};

/// Differentiable row-wise softmax.
nn::Var softmax(nn::Tape& tape, nn::Var logits);

}  // namespace sluadv
