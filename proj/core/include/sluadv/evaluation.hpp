#pragma once

#include <map>
#include <string>
#include <vector>

#include "sluadv/corpus.hpp"
#include "sluadv/metrics.hpp"
#include "sluadv/model.hpp"

namespace sluadv {

/// Decoded output for one utterance, as label strings.
struct Prediction {
  std::string intent;
  std::vector<std::string> slots;
};

/// All rates are fractions; SemER may exceed 1.
struct LanguageMetrics {
  std::string language;
  std::size_t n_utterances = 0;
  double semer = 0.0;
  double slot_f1 = 0.0;
  double ic_accuracy = 0.0;
};

/// Metrics for `predictions[i]` against `reference[i]`, grouped by language.
std::map<std::string, LanguageMetrics> evaluate_predictions(const Corpus& reference,
                                                            const std::vector<Prediction>& predictions);

std::vector<Prediction> to_predictions(const Vocabulary& vocab, const std::vector<DecodedUtterance>& decoded);

/// Eval-mode inference and scoring. Labels outside the model's inventory throw.
std::map<std::string, LanguageMetrics> evaluate_model(const SluModel& model, const Corpus& test);

/// Unweighted mean over languages; `language` is set to "avg".
LanguageMetrics averaged(const std::map<std::string, LanguageMetrics>& per_language);

}  // namespace sluadv
