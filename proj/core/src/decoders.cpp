#include "sluadv/decoders.hpp"

#include <stdexcept>

namespace sluadv {

using nn::Activation;
using nn::Matrix;
using nn::Var;

IcDecoder::IcDecoder(int input_dim, int hidden_dim, int n_intents, double dropout, Rng& rng)
    : hidden1_(input_dim, hidden_dim, rng),
      hidden2_(hidden_dim, hidden_dim, rng),
      output_(hidden_dim, n_intents, rng),
      dropout_(dropout) {
  if (n_intents < 1) throw std::invalid_argument("IcDecoder: need at least one intent");
}

Var IcDecoder::logits(nn::Tape& tape, Var sentence, Rng* dropout_rng) const {
  Var h = hidden1_.apply(tape, sentence, Activation::gelu, trainable);
  h = nn::dropout(tape, h, dropout_, dropout_rng);
  h = hidden2_.apply(tape, h, Activation::gelu, trainable);
  h = nn::dropout(tape, h, dropout_, dropout_rng);
  return output_.apply(tape, h, Activation::identity, trainable);
}

std::vector<nn::NamedParameter> IcDecoder::parameters() {
  std::vector<nn::NamedParameter> out;
  hidden1_.collect(out, "ffn1");
  hidden2_.collect(out, "ffn2");
  output_.collect(out, "output");
  return out;
}

SfDecoder::SfDecoder(int input_dim, int hidden_dim, int n_labels, double dropout, Rng& rng)
    : hidden1_(input_dim, hidden_dim, rng),
      hidden2_(hidden_dim, hidden_dim, rng),
      emit_(hidden_dim, n_labels, rng),
      transitions_(Matrix::Zero(n_labels + 2, n_labels + 2)),
      dropout_(dropout) {
  if (n_labels < 1) throw std::invalid_argument("SfDecoder: need at least one label");
}

Var SfDecoder::emissions(nn::Tape& tape, Var tokens, Rng* dropout_rng) const {
  Var h = hidden1_.apply(tape, tokens, Activation::gelu, trainable);
  h = nn::dropout(tape, h, dropout_, dropout_rng);
  h = hidden2_.apply(tape, h, Activation::gelu, trainable);
  h = nn::dropout(tape, h, dropout_, dropout_rng);
  return emit_.apply(tape, h, Activation::identity, trainable);
}

std::vector<nn::NamedParameter> SfDecoder::parameters() {
  std::vector<nn::NamedParameter> out;
  hidden1_.collect(out, "ffn1");
  hidden2_.collect(out, "ffn2");
  emit_.collect(out, "emission");
  out.push_back({"transitions", &transitions_});
  return out;
}

LangHead::LangHead(int input_dim, int hidden_dim, int n_languages, double dropout, Rng& rng)
    : hidden_(input_dim, hidden_dim, rng), output_(hidden_dim, n_languages, rng), dropout_(dropout) {
  if (n_languages < 1) throw std::invalid_argument("LangHead: need at least one language");
}

Var LangHead::logits(nn::Tape& tape, Var sentence, Rng* dropout_rng) const {
  Var h = hidden_.apply(tape, sentence, Activation::gelu, trainable);
  h = nn::dropout(tape, h, dropout_, dropout_rng);
  return output_.apply(tape, h, Activation::identity, trainable);
}

std::vector<nn::NamedParameter> LangHead::parameters() {
  std::vector<nn::NamedParameter> out;
  hidden_.collect(out, "ffn");
  output_.collect(out, "output");
  return out;
}

Var softmax(nn::Tape& tape, Var logits) {
  Matrix p = nn::softmax_rows(tape.value(logits));
  return tape.record("softmax", p, {logits}, [logits, p](nn::Tape& t, const Matrix& g) {
    if (Matrix* gz = t.grad_buffer(logits)) {
      const Eigen::VectorXd dots = g.cwiseProduct(p).rowwise().sum();
      *gz += p.cwiseProduct(g - dots.replicate(1, g.cols()));
    }
  });
}

}  // namespace sluadv
