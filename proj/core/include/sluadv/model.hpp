#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sluadv/batch.hpp"
#include "sluadv/checkpoint.hpp"
#include "sluadv/corpus.hpp"
#include "sluadv/decoders.hpp"
#include "sluadv/encoders.hpp"

namespace sluadv {

struct ModelConfig {
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_len = 32;
  double encoder_dropout = 0.1;
  int decoder_hidden = 0;  // 0 means d_model
  int cnn_dim = 128;
  double ic_dropout = 0.5;
  double sf_dropout = 0.2;
  double lang_dropout = 0.5;

  /// 768-wide decoders and 512-wide CNN encoders.
  static ModelConfig parity();

  int hidden() const { return decoder_hidden > 0 ? decoder_hidden : d_model; }
  void validate() const;
};

/// Nonnegative weights of the adversarial losses.
struct LossWeights {
  double alpha_d = 1.0;
  double alpha_i = 1.0;
  double alpha_s = 1.0;
  double alpha_p = 1.0;
  double beta_d = 0.2;

  /// (1, 1, 1, 1, 0.2) for three or more languages, (1, 1, 0.5, 0.5, 0.2) for two.
  static LossWeights defaults_for(std::size_t n_languages);
  void validate() const;
};

/// Logits rather than probabilities; distributions are softmax of each row.
/// The language heads are only set by the adversarial model.
struct ModelOutputs {
  nn::Var intent_logits;         // batch x n_intents
  nn::Var emissions;             // (batch * max_len) x n_slots
  nn::Var transitions;           // (n_slots + 2) x (n_slots + 2)
  nn::Var predictor_logits;      // batch x n_languages
  nn::Var discriminator_logits;  // batch x n_languages
};

struct DecodedUtterance {
  std::int32_t intent = 0;
  std::vector<std::int32_t> slots;
};

/// Argmax intents and Viterbi slot paths from already computed outputs.
std::vector<DecodedUtterance> decode_outputs(const nn::Tape& tape, const ModelOutputs& out,
                                             const EncodedBatch& batch);

/// Encoder + IC head + SF head trained on L = L_i + L_s.
class StandardModel {
 public:
  StandardModel(Vocabulary vocab, const ModelConfig& config, std::uint64_t seed);

  ModelOutputs forward(nn::Tape& tape, const EncodedBatch& batch, Rng* dropout_rng) const;
  nn::Var intent_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;
  nn::Var slot_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;
  nn::Var joint_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;

  std::vector<DecodedUtterance> decode(const EncodedBatch& batch) const;

  /// Groups "encoder", "ic_decoder", "sf_decoder"; trainable flags mirror the modules.
  std::vector<nn::ParamGroup> parameter_groups();

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  BertLikeEncoder& encoder() { return encoder_; }
  IcDecoder& ic_decoder() { return ic_; }
  SfDecoder& sf_decoder() { return sf_; }

 private:
  Vocabulary vocab_;
  ModelConfig config_;
  std::uint64_t seed_;
  BertLikeEncoder encoder_;
  IcDecoder ic_;
  SfDecoder sf_;
};

/// Specific and shared representations joined along the feature axis.
struct CombinedRepresentation {
  nn::Var tokens;    // (batch * max_len) x 2 d_cnn
  nn::Var sentence;  // batch x 2 d_cnn
};

/// h^specific = sum_l p_pred[:, l] * h^{enc_l}, likewise for sentences, then
/// concatenated with the shared encoder output.
CombinedRepresentation combine_representations(nn::Tape& tape, const std::vector<EncoderOutput>& per_language,
                                               nn::Var p_pred, const EncoderOutput& shared, std::size_t max_len);

/// enc_bert feeding N language-specific CNNs, enc_lang (predictor input) and
/// enc_shared (discriminator input). N is the number of languages in the vocabulary.
class AdversarialModel {
 public:
  AdversarialModel(Vocabulary vocab, const ModelConfig& config, std::uint64_t seed);

  ModelOutputs forward(nn::Tape& tape, const EncodedBatch& batch, Rng* dropout_rng) const;
  /// Only the enc_bert -> enc_shared -> discriminator path; sets discriminator_logits.
  ModelOutputs forward_discriminator(nn::Tape& tape, const EncodedBatch& batch, Rng* dropout_rng) const;
  nn::Var intent_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;
  nn::Var slot_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;
  nn::Var predictor_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;
  nn::Var discriminator_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const;

  /// L_1 = alpha_d L_d
  nn::Var loss_task1(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch, const LossWeights& w) const;
  /// L_2 = alpha_i L_i + alpha_s L_s + alpha_p L_p - beta_d L_d
  nn::Var loss_task2(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch, const LossWeights& w) const;

  std::vector<DecodedUtterance> decode(const EncodedBatch& batch) const;

  /// Groups "encoder", "enc.<language>" per language, "enc_lang", "enc_shared",
  /// "predictor", "discriminator", "ic_decoder", "sf_decoder".
  std::vector<nn::ParamGroup> parameter_groups();

  std::size_t language_count() const { return specific_.size(); }
  std::size_t encoder_count() const { return specific_.size() + 3; }

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }

  BertLikeEncoder& encoder() { return encoder_; }
  CnnEncoder& specific_encoder(std::size_t language) { return specific_.at(language); }
  CnnEncoder& language_encoder() { return lang_enc_; }
  CnnEncoder& shared_encoder() { return shared_enc_; }
  LangHead& predictor() { return predictor_; }
  LangHead& discriminator() { return discriminator_; }
  IcDecoder& ic_decoder() { return ic_; }
  SfDecoder& sf_decoder() { return sf_; }

 private:
  Vocabulary vocab_;
  ModelConfig config_;
  std::uint64_t seed_;
  BertLikeEncoder encoder_;
  std::vector<CnnEncoder> specific_;
  CnnEncoder lang_enc_;
  CnnEncoder shared_enc_;
  LangHead predictor_;
  LangHead discriminator_;
  IcDecoder ic_;
  SfDecoder sf_;
};

enum class ModelVariant { standard, adversarial };

std::string to_string(ModelVariant v);
ModelVariant parse_variant(std::string_view name);

using SluModel = std::variant<StandardModel, AdversarialModel>;

SluModel make_model(ModelVariant variant, Vocabulary vocab, const ModelConfig& config, std::uint64_t seed);

/// Eval-mode inference in batches of `batch_size`.
std::vector<DecodedUtterance> predict(const SluModel& model, std::span<const EncodedUtterance> items,
                                      std::size_t batch_size = 64);
const Vocabulary& model_vocab(const SluModel& model);

/// Checkpoints carry the variant, config and vocabulary in their metadata.
nn::Checkpoint capture_model(StandardModel& model, std::int64_t step);
nn::Checkpoint capture_model(AdversarialModel& model, std::int64_t step);
nn::Checkpoint capture_model(SluModel& model, std::int64_t step);
SluModel model_from_checkpoint(const nn::Checkpoint& checkpoint);
void save_model(const std::filesystem::path& path, SluModel& model, std::int64_t step = 0);
SluModel load_model(const std::filesystem::path& path);

}  // namespace sluadv
