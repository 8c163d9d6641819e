#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sluadv/corpus.hpp"

namespace sluadv {

/// A labeled span of tokens [start, end], inclusive.
struct Chunk {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const Chunk&) const = default;
};

/// Maximal BIO chunks in left-to-right order. An I-x that does not continue a
/// chunk of type x opens a new one. Throws CorpusError on a malformed tag.
std::vector<Chunk> extract_chunks(std::span<const std::string> tags);

struct SlotScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t reference_chunks = 0;
  std::size_t hypothesis_chunks = 0;
};

/// Micro-averaged chunk precision/recall/F1 with exact label and span match;
/// 0/0 counts as 0.
SlotScores slot_f1(const std::vector<std::vector<Chunk>>& refs, const std::vector<std::vector<Chunk>>& hyps);

double intent_accuracy(std::span<const std::string> refs, std::span<const std::string> hyps);

struct SemerCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t intent_errors = 0;
  std::size_t ref_slots = 0;
  std::size_t utterances = 0;

  std::size_t errors() const { return substitutions + deletions + insertions + intent_errors; }
  /// errors / (ref_slots + utterances), i.e. each utterance adds one to the denominator.
  double rate() const;
  SemerCounts& operator+=(const SemerCounts& other);
};

/// Slots are compared as (label, span text). Exact matches are removed first,
/// then equal text with a different label pairs up as a substitution; what is
/// left counts as deletions (reference) and insertions (hypothesis).
SemerCounts semer_utterance(const Utterance& ref, const std::string& hyp_intent,
                            std::span<const std::string> hyp_tags);

}  // namespace sluadv
