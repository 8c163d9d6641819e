#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sluadv/corpus.hpp"
#include "sluadv/layers.hpp"

namespace sluadv {

/// Token-level representations and their max-pooled sentence vector.
struct EncoderOutput {
  nn::Var token_reps;    // (batch * max_len) x d
  nn::Var sentence_rep;  // batch x d
};

struct BertLikeConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_len = 32;
  double dropout = 0.1;
};

/// Small post-LN transformer trained from scratch: token + learned position
/// embeddings, then per layer masked multi-head self-attention and a GELU
/// feed-forward block, each followed by residual + layer norm.
class BertLikeEncoder {
 public:
  BertLikeEncoder() = default;
  BertLikeEncoder(const BertLikeConfig& config, Rng& rng);

  /// `token_ids` and `mask` index rows as b * max_len + t. Throws
  /// std::invalid_argument when the padded length exceeds config.max_len.
  EncoderOutput forward(nn::Tape& tape, std::span<const std::int32_t> token_ids, const nn::SequenceMask& mask,
                        Rng* dropout_rng) const;

  const BertLikeConfig& config() const { return config_; }
  nn::Parameter& token_embeddings() { return token_embeddings_; }

  std::vector<nn::NamedParameter> parameters();

  bool trainable = true;

 private:
  struct Layer {
    nn::DenseLayer query, key, value, output;
    nn::Parameter ln1_gain, ln1_bias;
    nn::DenseLayer ffn_in, ffn_out;
    nn::Parameter ln2_gain, ln2_bias;
  };

  BertLikeConfig config_;
  nn::Parameter token_embeddings_;
  nn::Parameter position_embeddings_;
  std::vector<Layer> layers_;
};

/// One width-3 convolution over tokens (ReLU) followed by masked max-pooling.
class CnnEncoder {
 public:
  CnnEncoder() = default;
  CnnEncoder(int input_dim, int output_dim, Rng& rng);

  EncoderOutput forward(nn::Tape& tape, nn::Var inputs, const nn::SequenceMask& mask) const;

  int input_dim() const { return static_cast<int>(kernel_.value.cols() / 3); }
  int output_dim() const { return static_cast<int>(kernel_.value.rows()); }
  nn::Parameter& kernel() { return kernel_; }
  nn::Parameter& bias() { return bias_; }

  std::vector<nn::NamedParameter> parameters();

  bool trainable = true;

 private:
  nn::Parameter kernel_;  // output_dim x (3 * input_dim)
  nn::Parameter bias_;    // 1 x output_dim
};

/// Replaces token embedding rows from a text matrix file with lines
/// "<token> v_1 ... v_d". Tokens absent from `vocab` are skipped; returns the
/// number of rows replaced.
std::size_t import_token_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                    BertLikeEncoder& encoder);

}  // namespace sluadv
