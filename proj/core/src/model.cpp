#include "sluadv/model.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace sluadv {

using nn::Matrix;
using nn::Var;

namespace {

nn::SequenceMask mask_of(const EncodedBatch& batch) { return {batch.mask, batch.max_len}; }

BertLikeConfig encoder_config(const Vocabulary& vocab, const ModelConfig& c) {
  return {static_cast<int>(vocab.token_count()), c.d_model, c.n_layers, c.n_heads, c.ffn_dim, c.max_len,
          c.encoder_dropout};
}

void check_vocab(const Vocabulary& vocab) {
  if (vocab.intent_count() == 0) throw std::invalid_argument("model: vocabulary has no intents");
  if (vocab.language_count() == 0) throw std::invalid_argument("model: vocabulary has no languages");
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

nlohmann::json config_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},         {"n_layers", c.n_layers},        {"n_heads", c.n_heads},
          {"ffn_dim", c.ffn_dim},         {"max_len", c.max_len},          {"encoder_dropout", c.encoder_dropout},
          {"decoder_hidden", c.decoder_hidden}, {"cnn_dim", c.cnn_dim},    {"ic_dropout", c.ic_dropout},
          {"sf_dropout", c.sf_dropout},   {"lang_dropout", c.lang_dropout}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.ffn_dim = j.at("ffn_dim");
  c.max_len = j.at("max_len");
  c.encoder_dropout = j.at("encoder_dropout");
  c.decoder_hidden = j.at("decoder_hidden");
  c.cnn_dim = j.at("cnn_dim");
  c.ic_dropout = j.at("ic_dropout");
  c.sf_dropout = j.at("sf_dropout");
  c.lang_dropout = j.at("lang_dropout");
  return c;
}

}  // namespace

ModelConfig ModelConfig::parity() {
  ModelConfig c;
  c.decoder_hidden = 768;
  c.cnn_dim = 512;
  return c;
}

void ModelConfig::validate() const {
  if (d_model < 1 || n_layers < 0 || n_heads < 1 || ffn_dim < 1 || max_len < 1 || cnn_dim < 1 ||
      decoder_hidden < 0) {
    throw std::invalid_argument("model config: sizes must be positive");
  }
  if (d_model % n_heads != 0) throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  for (double p : {encoder_dropout, ic_dropout, sf_dropout, lang_dropout}) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("model config: dropout must lie in [0, 1)");
  }
}

LossWeights LossWeights::defaults_for(std::size_t n_languages) {
  if (n_languages == 2) return {1.0, 1.0, 0.5, 0.5, 0.2};
  return {1.0, 1.0, 1.0, 1.0, 0.2};
}

void LossWeights::validate() const {
  for (double w : {alpha_d, alpha_i, alpha_s, alpha_p, beta_d}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be nonnegative");
  }
}

std::vector<DecodedUtterance> decode_outputs(const nn::Tape& tape, const ModelOutputs& out,
                                             const EncodedBatch& batch) {
  const Matrix& intents = tape.value(out.intent_logits);
  auto paths = nn::crf_decode_batch(tape.value(out.emissions), tape.value(out.transitions), mask_of(batch));
  std::vector<DecodedUtterance> result(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    Eigen::Index best = 0;
    intents.row(static_cast<Eigen::Index>(b)).maxCoeff(&best);
    result[b].intent = static_cast<std::int32_t>(best);
    result[b].slots = std::move(paths[b]);
  }
  return result;
}

// ---------------------------------------------------------------- standard

StandardModel::StandardModel(Vocabulary vocab, const ModelConfig& config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config), seed_(seed) {
  config_.validate();
  check_vocab(vocab_);
  Rng rng(seed);
  encoder_ = BertLikeEncoder(encoder_config(vocab_, config_), rng);
  const int n_intents = static_cast<int>(vocab_.intent_count());
  const int n_slots = static_cast<int>(vocab_.slot_count());
  ic_ = IcDecoder(config_.d_model, config_.hidden(), n_intents, config_.ic_dropout, rng);
  sf_ = SfDecoder(config_.d_model, config_.hidden(), n_slots, config_.sf_dropout, rng);
}

ModelOutputs StandardModel::forward(nn::Tape& tape, const EncodedBatch& batch, Rng* dropout_rng) const {
  const EncoderOutput enc = encoder_.forward(tape, batch.tokens, mask_of(batch), dropout_rng);
  ModelOutputs out;
  out.intent_logits = ic_.logits(tape, enc.sentence_rep, dropout_rng);
  out.emissions = sf_.emissions(tape, enc.token_reps, dropout_rng);
  out.transitions = sf_.transitions(tape);
  return out;
}

Var StandardModel::intent_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::cross_entropy(tape, out.intent_logits, batch.intents);
}

Var StandardModel::slot_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::crf_nll(tape, out.emissions, out.transitions, batch.slots, mask_of(batch));
}

Var StandardModel::joint_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::add(tape, intent_loss(tape, out, batch), slot_loss(tape, out, batch));
}

std::vector<DecodedUtterance> StandardModel::decode(const EncodedBatch& batch) const {
  nn::Tape tape;
  const ModelOutputs out = forward(tape, batch, nullptr);
  return decode_outputs(tape, out, batch);
}

std::vector<nn::ParamGroup> StandardModel::parameter_groups() {
  return {{"encoder", encoder_.parameters(), encoder_.trainable},
          {"ic_decoder", ic_.parameters(), ic_.trainable},
          {"sf_decoder", sf_.parameters(), sf_.trainable}};
}

// ------------------------------------------------------------- adversarial

CombinedRepresentation combine_representations(nn::Tape& tape, const std::vector<EncoderOutput>& per_language,
                                               Var p_pred, const EncoderOutput& shared, std::size_t max_len) {
  if (per_language.empty()) throw nn::ShapeError("combine_representations: no language encoders");
  std::vector<Var> tokens, sentences;
  for (const EncoderOutput& e : per_language) {
    tokens.push_back(e.token_reps);
    sentences.push_back(e.sentence_rep);
  }
  const Var specific_tokens = nn::mix(tape, tokens, p_pred, max_len);
  const Var specific_sentence = nn::mix(tape, sentences, p_pred, 1);
  return {nn::concat_cols(tape, {specific_tokens, shared.token_reps}),
          nn::concat_cols(tape, {specific_sentence, shared.sentence_rep})};
}

AdversarialModel::AdversarialModel(Vocabulary vocab, const ModelConfig& config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config), seed_(seed) {
  config_.validate();
  check_vocab(vocab_);
  Rng rng(seed);
  encoder_ = BertLikeEncoder(encoder_config(vocab_, config_), rng);
  const std::size_t n = vocab_.language_count();
  const int d = config_.d_model;
  const int c = config_.cnn_dim;
  const int h = config_.hidden();
  for (std::size_t l = 0; l < n; ++l) specific_.emplace_back(d, c, rng);
  lang_enc_ = CnnEncoder(d, c, rng);
  shared_enc_ = CnnEncoder(d, c, rng);
  predictor_ = LangHead(c, h, static_cast<int>(n), config_.lang_dropout, rng);
  discriminator_ = LangHead(c, h, static_cast<int>(n), config_.lang_dropout, rng);
  const int n_intents = static_cast<int>(vocab_.intent_count());
  const int n_slots = static_cast<int>(vocab_.slot_count());
  ic_ = IcDecoder(2 * c, h, n_intents, config_.ic_dropout, rng);
  sf_ = SfDecoder(2 * c, h, n_slots, config_.sf_dropout, rng);

  const auto cnn = static_cast<std::size_t>(3 * d * c + c);
  const auto head = dense_count(c, h) + dense_count(h, n);
  const auto ic = dense_count(2 * c, h) + dense_count(h, h) + dense_count(h, n_intents);
  const auto sf = dense_count(2 * c, h) + dense_count(h, h) + dense_count(h, n_slots) +
                  static_cast<std::size_t>((n_slots + 2) * (n_slots + 2));
  const std::vector<nn::ParamGroup> enc_group{{"encoder", encoder_.parameters(), true}};
  const std::size_t expected = nn::parameter_count(enc_group) + (n + 2) * cnn + 2 * head + ic + sf;
  if (nn::parameter_count(parameter_groups()) != expected) {
    throw std::logic_error("AdversarialModel: parameter census mismatch");
  }
}

ModelOutputs AdversarialModel::forward(nn::Tape& tape, const EncodedBatch& batch, Rng* dropout_rng) const {
  const nn::SequenceMask mask = mask_of(batch);
  const EncoderOutput bert = encoder_.forward(tape, batch.tokens, mask, dropout_rng);
  std::vector<EncoderOutput> per_language;
  per_language.reserve(specific_.size());
  for (const CnnEncoder& enc : specific_) per_language.push_back(enc.forward(tape, bert.token_reps, mask));
  const EncoderOutput lang = lang_enc_.forward(tape, bert.token_reps, mask);
  const EncoderOutput shared = shared_enc_.forward(tape, bert.token_reps, mask);

  ModelOutputs out;
  out.predictor_logits = predictor_.logits(tape, lang.sentence_rep, dropout_rng);
  out.discriminator_logits = discriminator_.logits(tape, shared.sentence_rep, dropout_rng);
  const Var p_pred = softmax(tape, out.predictor_logits);
  const CombinedRepresentation combined =
      combine_representations(tape, per_language, p_pred, shared, batch.max_len);
  out.intent_logits = ic_.logits(tape, combined.sentence, dropout_rng);
  out.emissions = sf_.emissions(tape, combined.tokens, dropout_rng);
  out.transitions = sf_.transitions(tape);
  return out;
}

ModelOutputs AdversarialModel::forward_discriminator(nn::Tape& tape, const EncodedBatch& batch,
                                                     Rng* dropout_rng) const {
  const nn::SequenceMask mask = mask_of(batch);
  const EncoderOutput bert = encoder_.forward(tape, batch.tokens, mask, dropout_rng);
  const EncoderOutput shared = shared_enc_.forward(tape, bert.token_reps, mask);
  ModelOutputs out;
  out.discriminator_logits = discriminator_.logits(tape, shared.sentence_rep, dropout_rng);
  return out;
}

Var AdversarialModel::intent_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::cross_entropy(tape, out.intent_logits, batch.intents);
}

Var AdversarialModel::slot_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::crf_nll(tape, out.emissions, out.transitions, batch.slots, mask_of(batch));
}

Var AdversarialModel::predictor_loss(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch) const {
  return nn::cross_entropy(tape, out.predictor_logits, batch.languages);
}

Var AdversarialModel::discriminator_loss(nn::Tape& tape, const ModelOutputs& out,
                                         const EncodedBatch& batch) const {
  return nn::cross_entropy(tape, out.discriminator_logits, batch.languages);
}

Var AdversarialModel::loss_task1(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch,
                                 const LossWeights& w) const {
  return nn::scale(tape, discriminator_loss(tape, out, batch), w.alpha_d);
}

Var AdversarialModel::loss_task2(nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch,
                                 const LossWeights& w) const {
  return nn::weighted_sum(tape, {{w.alpha_i, intent_loss(tape, out, batch)},
                                 {w.alpha_s, slot_loss(tape, out, batch)},
                                 {w.alpha_p, predictor_loss(tape, out, batch)},
                                 {-w.beta_d, discriminator_loss(tape, out, batch)}});
}

std::vector<DecodedUtterance> AdversarialModel::decode(const EncodedBatch& batch) const {
  nn::Tape tape;
  const ModelOutputs out = forward(tape, batch, nullptr);
  return decode_outputs(tape, out, batch);
}

std::vector<nn::ParamGroup> AdversarialModel::parameter_groups() {
  std::vector<nn::ParamGroup> groups{{"encoder", encoder_.parameters(), encoder_.trainable}};
  for (std::size_t l = 0; l < specific_.size(); ++l) {
    groups.push_back({"enc." + vocab_.language(static_cast<std::int32_t>(l)), specific_[l].parameters(),
                      specific_[l].trainable});
  }
  groups.push_back({"enc_lang", lang_enc_.parameters(), lang_enc_.trainable});
  groups.push_back({"enc_shared", shared_enc_.parameters(), shared_enc_.trainable});
  groups.push_back({"predictor", predictor_.parameters(), predictor_.trainable});
  groups.push_back({"discriminator", discriminator_.parameters(), discriminator_.trainable});
  groups.push_back({"ic_decoder", ic_.parameters(), ic_.trainable});
  groups.push_back({"sf_decoder", sf_.parameters(), sf_.trainable});
  return groups;
}

// ------------------------------------------------------------------ common

std::string to_string(ModelVariant v) { return v == ModelVariant::standard ? "standard" : "adversarial"; }

ModelVariant parse_variant(std::string_view name) {
  if (name == "standard" || name == "standard-mono" || name == "standard-multi") return ModelVariant::standard;
  if (name == "adversarial") return ModelVariant::adversarial;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

SluModel make_model(ModelVariant variant, Vocabulary vocab, const ModelConfig& config, std::uint64_t seed) {
  if (variant == ModelVariant::standard) return SluModel(std::in_place_type<StandardModel>, std::move(vocab), config, seed);
  return SluModel(std::in_place_type<AdversarialModel>, std::move(vocab), config, seed);
}

std::vector<DecodedUtterance> predict(const SluModel& model, std::span<const EncodedUtterance> items,
                                      std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be positive");
  std::vector<DecodedUtterance> out;
  out.reserve(items.size());
  for (std::size_t start = 0; start < items.size(); start += batch_size) {
    const auto chunk = items.subspan(start, std::min(batch_size, items.size() - start));
    const EncodedBatch batch = make_batch(chunk);
    auto decoded = std::visit([&](const auto& m) { return m.decode(batch); }, model);
    for (auto& d : decoded) out.push_back(std::move(d));
  }
  return out;
}

const Vocabulary& model_vocab(const SluModel& model) {
  return std::visit([](const auto& m) -> const Vocabulary& { return m.vocab(); }, model);
}

namespace {

template <typename Model>
nn::Checkpoint capture_any(Model& m, ModelVariant variant, std::int64_t step) {
  const Vocabulary& v = m.vocab();
  const nlohmann::json meta{{"variant", to_string(variant)},
                            {"config", config_json(m.config())},
                            {"vocab",
                             {{"tokens", v.tokens()},
                              {"intents", v.intents()},
                              {"slots", v.slots()},
                              {"languages", v.languages()}}}};
  const auto groups = m.parameter_groups();
  nn::Checkpoint cp = nn::capture(groups, m.seed(), step);
  cp.metadata = meta.dump();
  return cp;
}

}  // namespace

nn::Checkpoint capture_model(StandardModel& model, std::int64_t step) {
  return capture_any(model, ModelVariant::standard, step);
}

nn::Checkpoint capture_model(AdversarialModel& model, std::int64_t step) {
  return capture_any(model, ModelVariant::adversarial, step);
}

nn::Checkpoint capture_model(SluModel& model, std::int64_t step) {
  return std::visit([&](auto& m) { return capture_model(m, step); }, model);
}

SluModel model_from_checkpoint(const nn::Checkpoint& checkpoint) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(checkpoint.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  ModelVariant variant;
  ModelConfig config;
  Vocabulary vocab;
  try {
    variant = parse_variant(meta.at("variant").get<std::string>());
    config = config_from_json(meta.at("config"));
    const auto& v = meta.at("vocab");
    for (const auto& t : v.at("tokens")) vocab.add_token(t.get<std::string>());
    for (const auto& t : v.at("intents")) vocab.add_intent(t.get<std::string>());
    for (const auto& t : v.at("slots")) vocab.add_slot(t.get<std::string>());
    for (const auto& t : v.at("languages")) vocab.add_language(t.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw nn::CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  SluModel model = make_model(variant, std::move(vocab), config, checkpoint.seed);
  std::visit(
      [&](auto& m) {
        const auto groups = m.parameter_groups();
        nn::restore(groups, checkpoint);
      },
      model);
  return model;
}

void save_model(const std::filesystem::path& path, SluModel& model, std::int64_t step) {
  nn::write_checkpoint(path, capture_model(model, step));
}

SluModel load_model(const std::filesystem::path& path) { return model_from_checkpoint(nn::read_checkpoint(path)); }

}  // namespace sluadv
