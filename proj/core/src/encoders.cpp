#include "sluadv/encoders.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sluadv {

using nn::Activation;
using nn::Matrix;
using nn::Var;

BertLikeEncoder::BertLikeEncoder(const BertLikeConfig& config, Rng& rng) : config_(config) {
  if (config.vocab_size < 2 || config.d_model < 1 || config.max_len < 1 || config.n_layers < 0) {
    throw std::invalid_argument("BertLikeEncoder: invalid sizes");
  }
  if (config.n_heads < 1 || config.d_model % config.n_heads != 0) {
    throw std::invalid_argument("BertLikeEncoder: d_model must be divisible by n_heads");
  }
  const Eigen::Index d = config.d_model;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  token_embeddings_ = nn::Parameter(nn::normal(config.vocab_size, d, emb_std, rng));
  position_embeddings_ = nn::Parameter(nn::normal(config.max_len, d, emb_std, rng));
  for (int i = 0; i < config.n_layers; ++i) {
    Layer layer;
    layer.query = nn::DenseLayer(d, d, rng);
    layer.key = nn::DenseLayer(d, d, rng);
    layer.value = nn::DenseLayer(d, d, rng);
    layer.output = nn::DenseLayer(d, d, rng);
    layer.ln1_gain = nn::Parameter(Matrix::Ones(1, d));
    layer.ln1_bias = nn::Parameter(Matrix::Zero(1, d));
    layer.ffn_in = nn::DenseLayer(d, config.ffn_dim, rng);
    layer.ffn_out = nn::DenseLayer(config.ffn_dim, d, rng);
    layer.ln2_gain = nn::Parameter(Matrix::Ones(1, d));
    layer.ln2_bias = nn::Parameter(Matrix::Zero(1, d));
    layers_.push_back(std::move(layer));
  }
}

EncoderOutput BertLikeEncoder::forward(nn::Tape& tape, std::span<const std::int32_t> token_ids,
                                       const nn::SequenceMask& mask, Rng* dropout_rng) const {
  if (mask.max_len > static_cast<std::size_t>(config_.max_len)) {
    throw std::invalid_argument("sequence of length " + std::to_string(mask.max_len) + " exceeds max_len " +
                                std::to_string(config_.max_len));
  }
  if (token_ids.size() != mask.mask.size()) throw nn::ShapeError("BertLikeEncoder: ids and mask differ in size");

  const bool tr = trainable;
  Var x = nn::embedding(tape, tape.parameter(token_embeddings_, tr), token_ids);
  x = nn::add_positions(tape, x, tape.parameter(position_embeddings_, tr), mask.max_len);
  x = nn::dropout(tape, x, config_.dropout, dropout_rng);

  for (const Layer& layer : layers_) {
    const Var q = layer.query.apply(tape, x, Activation::identity, tr);
    const Var k = layer.key.apply(tape, x, Activation::identity, tr);
    const Var v = layer.value.apply(tape, x, Activation::identity, tr);
    Var attended = nn::self_attention(tape, q, k, v, mask, static_cast<std::size_t>(config_.n_heads));
    attended = layer.output.apply(tape, attended, Activation::identity, tr);
    attended = nn::dropout(tape, attended, config_.dropout, dropout_rng);
    x = nn::layer_norm(tape, nn::add(tape, x, attended), tape.parameter(layer.ln1_gain, tr),
                       tape.parameter(layer.ln1_bias, tr));

    Var ff = layer.ffn_in.apply(tape, x, Activation::gelu, tr);
    ff = layer.ffn_out.apply(tape, ff, Activation::identity, tr);
    ff = nn::dropout(tape, ff, config_.dropout, dropout_rng);
    x = nn::layer_norm(tape, nn::add(tape, x, ff), tape.parameter(layer.ln2_gain, tr),
                       tape.parameter(layer.ln2_bias, tr));
  }
  return {x, nn::masked_max_pool(tape, x, mask)};
}

std::vector<nn::NamedParameter> BertLikeEncoder::parameters() {
  std::vector<nn::NamedParameter> out{{"token_embeddings", &token_embeddings_},
                                      {"position_embeddings", &position_embeddings_}};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    const std::string p = "layer" + std::to_string(i);
    l.query.collect(out, p + ".query");
    l.key.collect(out, p + ".key");
    l.value.collect(out, p + ".value");
    l.output.collect(out, p + ".output");
    out.push_back({p + ".ln1.gain", &l.ln1_gain});
    out.push_back({p + ".ln1.bias", &l.ln1_bias});
    l.ffn_in.collect(out, p + ".ffn_in");
    l.ffn_out.collect(out, p + ".ffn_out");
    out.push_back({p + ".ln2.gain", &l.ln2_gain});
    out.push_back({p + ".ln2.bias", &l.ln2_bias});
  }
  return out;
}

CnnEncoder::CnnEncoder(int input_dim, int output_dim, Rng& rng)
    : kernel_(nn::glorot(output_dim, 3 * input_dim, rng)), bias_(Matrix::Zero(1, output_dim)) {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("CnnEncoder: invalid sizes");
}

EncoderOutput CnnEncoder::forward(nn::Tape& tape, Var inputs, const nn::SequenceMask& mask) const {
  const Var tokens =
      nn::conv_tokens(tape, inputs, tape.parameter(kernel_, trainable), tape.parameter(bias_, trainable), mask);
  return {tokens, nn::masked_max_pool(tape, tokens, mask)};
}

std::vector<nn::NamedParameter> CnnEncoder::parameters() { return {{"kernel", &kernel_}, {"bias", &bias_}}; }

std::size_t import_token_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                    BertLikeEncoder& encoder) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  Matrix& table = encoder.token_embeddings().value;
  std::size_t replaced = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    for (double v; fields >> v;) values.push_back(v);
    if (static_cast<Eigen::Index>(values.size()) != table.cols()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(table.cols()) + " values");
    }
    const std::int32_t id = vocab.token_id(token);
    if (id == kUnkId && normalize_token(token) != kUnkToken) continue;
    for (Eigen::Index j = 0; j < table.cols(); ++j) table(id, j) = values[static_cast<std::size_t>(j)];
    ++replaced;
  }
  return replaced;
}

}  // namespace sluadv
