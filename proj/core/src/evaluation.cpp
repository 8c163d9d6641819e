#include "sluadv/evaluation.hpp"

#include <stdexcept>

#include "sluadv/batch.hpp"

namespace sluadv {

std::map<std::string, LanguageMetrics> evaluate_predictions(const Corpus& reference,
                                                            const std::vector<Prediction>& predictions) {
  if (reference.size() != predictions.size()) {
    throw std::invalid_argument("evaluate_predictions: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(reference.size()) + " utterances");
  }
  struct Accumulator {
    std::vector<std::vector<Chunk>> ref_chunks, hyp_chunks;
    std::vector<std::string> ref_intents, hyp_intents;
    SemerCounts semer;
  };
  std::map<std::string, Accumulator> acc;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const Utterance& u = reference[i];
    const Prediction& p = predictions[i];
    Accumulator& a = acc[u.language];
    a.ref_chunks.push_back(extract_chunks(u.slots));
    a.hyp_chunks.push_back(extract_chunks(p.slots));
    a.ref_intents.push_back(u.intent);
    a.hyp_intents.push_back(p.intent);
    a.semer += semer_utterance(u, p.intent, p.slots);
  }
  std::map<std::string, LanguageMetrics> out;
  for (const auto& [language, a] : acc) {
    LanguageMetrics m;
    m.language = language;
    m.n_utterances = a.ref_intents.size();
    m.semer = a.semer.rate();
    m.slot_f1 = slot_f1(a.ref_chunks, a.hyp_chunks).f1;
    m.ic_accuracy = intent_accuracy(a.ref_intents, a.hyp_intents);
    out.emplace(language, m);
  }
  return out;
}

std::vector<Prediction> to_predictions(const Vocabulary& vocab, const std::vector<DecodedUtterance>& decoded) {
  std::vector<Prediction> out;
  out.reserve(decoded.size());
  for (const DecodedUtterance& d : decoded) {
    Prediction p;
    p.intent = vocab.intent(d.intent);
    for (std::int32_t s : d.slots) p.slots.push_back(vocab.slot(s));
    out.push_back(std::move(p));
  }
  return out;
}

std::map<std::string, LanguageMetrics> evaluate_model(const SluModel& model, const Corpus& test) {
  const Vocabulary& vocab = model_vocab(model);
  const std::vector<EncodedUtterance> encoded = encode(vocab, test);
  return evaluate_predictions(test, to_predictions(vocab, predict(model, encoded)));
}

LanguageMetrics averaged(const std::map<std::string, LanguageMetrics>& per_language) {
  if (per_language.empty()) throw std::invalid_argument("averaged: no languages");
  LanguageMetrics avg;
  avg.language = "avg";
  for (const auto& [_, m] : per_language) {
    avg.n_utterances += m.n_utterances;
    avg.semer += m.semer;
    avg.slot_f1 += m.slot_f1;
    avg.ic_accuracy += m.ic_accuracy;
  }
  const auto n = static_cast<double>(per_language.size());
  avg.semer /= n;
  avg.slot_f1 /= n;
  avg.ic_accuracy /= n;
  return avg;
}

}  // namespace sluadv
