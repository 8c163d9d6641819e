#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sluadv/corpus.hpp"

namespace sluadv {

/// Knobs of the template grammar behind generate_synthetic_parallel.
struct SyntheticOptions {
  int n_intents = 3;
  int n_slot_types = 4;
  int templates_per_intent = 4;
  /// Distinct value concepts per slot type.
  int values_per_slot = 60;
  /// Fraction of value concepts whose surface form is identical in every
  /// language (think city names kept untranslated).
  double shared_value_fraction = 0.5;
  /// Probability that a group carries an extra politeness phrase.
  double filler_probability = 0.3;
};

/// Emits `n_groups` parallel utterances ("g0001", ...) in every language of
/// `languages` from a template grammar drawn with `grammar_seed`. Each
/// pseudo-language has its own function words and a fixed word-order
/// permutation of the template segments; slot values are partially shared.
/// The same arguments always produce the same corpus.
ParallelCorpus generate_synthetic_parallel(int n_groups, const std::vector<std::string>& languages,
                                           std::uint64_t grammar_seed, const SyntheticOptions& options = {});

/// Intent and slot-type names used by the generator for the given counts.
std::vector<std::string> synthetic_intent_names(int n_intents);
std::vector<std::string> synthetic_slot_names(int n_slot_types);

}  // namespace sluadv
