#include "sluadv/metrics.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

namespace sluadv {

std::vector<Chunk> extract_chunks(std::span<const std::string> tags) {
  std::vector<Chunk> chunks;
  std::optional<Chunk> open;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const std::string& tag = tags[t];
    if (!is_valid_bio_tag(tag)) throw CorpusError("malformed BIO tag '" + tag + "' at position " + std::to_string(t));
    if (tag == "O") {
      if (open) chunks.push_back(*std::exchange(open, std::nullopt));
      continue;
    }
    const std::string label = tag.substr(2);
    if (tag[0] == 'I' && open && open->label == label) {
      open->end = t;
      continue;
    }
    if (open) chunks.push_back(*open);
    open = Chunk{label, t, t};
  }
  if (open) chunks.push_back(*open);
  return chunks;
}

SlotScores slot_f1(const std::vector<std::vector<Chunk>>& refs, const std::vector<std::vector<Chunk>>& hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("slot_f1: reference and hypothesis counts differ");
  SlotScores s;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    std::vector<Chunk> r = refs[i], h = hyps[i];
    std::sort(r.begin(), r.end());
    std::sort(h.begin(), h.end());
    std::vector<Chunk> common;
    std::set_intersection(r.begin(), r.end(), h.begin(), h.end(), std::back_inserter(common));
    s.true_positives += common.size();
    s.reference_chunks += r.size();
    s.hypothesis_chunks += h.size();
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; };
  s.precision = ratio(s.true_positives, s.hypothesis_chunks);
  s.recall = ratio(s.true_positives, s.reference_chunks);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double intent_accuracy(std::span<const std::string> refs, std::span<const std::string> hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("intent_accuracy: list lengths differ");
  if (refs.empty()) throw std::invalid_argument("intent_accuracy: empty lists");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) correct += refs[i] == hyps[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(refs.size());
}

double SemerCounts::rate() const {
  const std::size_t denom = ref_slots + utterances;
  return denom == 0 ? 0.0 : static_cast<double>(errors()) / static_cast<double>(denom);
}

SemerCounts& SemerCounts::operator+=(const SemerCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  intent_errors += o.intent_errors;
  ref_slots += o.ref_slots;
  utterances += o.utterances;
  return *this;
}

namespace {

struct TextChunk {
  std::string label;
  std::string text;
  bool used = false;
};

std::vector<TextChunk> text_chunks(const std::vector<std::string>& tokens, std::span<const std::string> tags) {
  std::vector<TextChunk> out;
  for (const Chunk& c : extract_chunks(tags)) {
    std::string text;
    for (std::size_t t = c.start; t <= c.end; ++t) {
      if (t > c.start) text += ' ';
      text += tokens[t];
    }
    out.push_back({c.label, std::move(text)});
  }
  return out;
}

}  // namespace

SemerCounts semer_utterance(const Utterance& ref, const std::string& hyp_intent,
                            std::span<const std::string> hyp_tags) {
  if (hyp_tags.size() != ref.tokens.size()) {
    throw std::invalid_argument("semer_utterance: hypothesis has " + std::to_string(hyp_tags.size()) +
                                " tags for " + std::to_string(ref.tokens.size()) + " tokens");
  }
  auto r = text_chunks(ref.tokens, ref.slots);
  auto h = text_chunks(ref.tokens, hyp_tags);

  const auto pair_up = [&](auto&& matches) {
    std::size_t n = 0;
    for (auto& rc : r) {
      if (rc.used) continue;
      for (auto& hc : h) {
        if (!hc.used && matches(rc, hc)) {
          rc.used = hc.used = true;
          ++n;
          break;
        }
      }
    }
    return n;
  };

  SemerCounts c;
  c.utterances = 1;
  c.ref_slots = r.size();
  c.intent_errors = hyp_intent == ref.intent ? 0 : 1;
  const std::size_t exact = pair_up([](const TextChunk& a, const TextChunk& b) {
    return a.label == b.label && a.text == b.text;
  });
  c.substitutions = pair_up([](const TextChunk& a, const TextChunk& b) { return a.text == b.text; });
  c.deletions = r.size() - exact - c.substitutions;
  c.insertions = h.size() - exact - c.substitutions;
  return c;
}

}  // namespace sluadv
