#include "sluadv/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace sluadv {

EncodedUtterance encode(const Vocabulary& vocab, const Utterance& u) {
  EncodedUtterance out;
  out.tokens.reserve(u.tokens.size());
  for (const auto& t : u.tokens) out.tokens.push_back(vocab.token_id(t));
  for (const auto& s : u.slots) out.slots.push_back(vocab.slot_id(s));
  out.intent = vocab.intent_id(u.intent);
  out.language = vocab.language_id(u.language);
  return out;
}

std::vector<EncodedUtterance> encode(const Vocabulary& vocab, const Corpus& corpus) {
  std::vector<EncodedUtterance> out;
  out.reserve(corpus.size());
  for (const auto& u : corpus) out.push_back(encode(vocab, u));
  return out;
}

EncodedBatch make_batch(std::span<const EncodedUtterance* const> items) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  EncodedBatch batch;
  batch.batch_size = items.size();
  for (const auto* u : items) {
    if (u->tokens.empty()) throw std::invalid_argument("utterance without tokens in batch");
    batch.max_len = std::max(batch.max_len, u->tokens.size());
  }
  const std::size_t rows = batch.rows();
  batch.tokens.assign(rows, kPadId);
  batch.slots.assign(rows, 0);
  batch.mask.assign(rows, 0);
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto& u = *items[b];
    for (std::size_t t = 0; t < u.tokens.size(); ++t) {
      const std::size_t row = b * batch.max_len + t;
      batch.tokens[row] = u.tokens[t];
      batch.slots[row] = t < u.slots.size() ? u.slots[t] : 0;
      batch.mask[row] = 1;
    }
    batch.lengths.push_back(u.tokens.size());
    batch.intents.push_back(u.intent);
    batch.languages.push_back(u.language);
  }
  return batch;
}

EncodedBatch make_batch(std::span<const EncodedUtterance> items) {
  std::vector<const EncodedUtterance*> ptrs;
  ptrs.reserve(items.size());
  for (const auto& u : items) ptrs.push_back(&u);
  return make_batch(std::span<const EncodedUtterance* const>(ptrs));
}

}  // namespace sluadv
