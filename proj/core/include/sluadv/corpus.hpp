#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sluadv {

/// Raised by the corpus reader; carries the 1-based line number of the
/// offending line (0 when the failure is not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a dataset construction cannot be carried out, e.g. a
/// missing translation or a malformed split specification.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One annotated utterance. `id` identifies the parallel group, so
/// translations of the same utterance share it across languages.
struct Utterance {
  std::string id;
  std::string language;
  std::string intent;
  std::vector<std::string> tokens;
  std::vector<std::string> slots;  // BIO tags, one per token

  bool operator==(const Utterance&) const = default;
};

/// True for "O", "B-<name>" and "I-<name>" with a nonempty name.
bool is_valid_bio_tag(std::string_view tag);

/// Throws CorpusError if the utterance breaks an Utterance invariant.
void validate(const Utterance& u);

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Utterance> utterances);

  /// Appends `u`; rejects invalid utterances and duplicate (id, language).
  void add(Utterance u);

  const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
  const std::set<std::string>& languages() const noexcept { return languages_; }
  std::size_t size() const noexcept { return utterances_.size(); }
  bool empty() const noexcept { return utterances_.empty(); }

  auto begin() const noexcept { return utterances_.begin(); }
  auto end() const noexcept { return utterances_.end(); }
  const Utterance& operator[](std::size_t i) const { return utterances_[i]; }

  bool operator==(const Corpus& other) const { return utterances_ == other.utterances_; }

 private:
  std::vector<Utterance> utterances_;
  std::set<std::string> languages_;
  std::set<std::pair<std::string, std::string>> keys_;
};

/// Translations grouped by id. Every group holds every declared language
/// and all translations in a group share the intent.
class ParallelCorpus {
 public:
  using Group = std::map<std::string, Utterance>;

  ParallelCorpus() = default;
  explicit ParallelCorpus(std::vector<std::string> languages);

  /// Builds from monolingual corpora; each must cover the same id set.
  static ParallelCorpus from_corpora(const std::vector<Corpus>& per_language);

  void add_group(const std::string& id, Group group);

  const std::vector<std::string>& languages() const noexcept { return languages_; }
  const std::map<std::string, Group>& groups() const noexcept { return groups_; }
  /// Ids in insertion order.
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }

  const Utterance& at(const std::string& id, const std::string& language) const;
  bool contains(const std::string& id, const std::string& language) const;

  /// The monolingual corpus of `language`, in id order.
  Corpus monolingual(const std::string& language) const;
  /// The sub-corpus restricted to `ids`, preserving the given order.
  ParallelCorpus subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<std::string> languages_;
  std::vector<std::string> ids_;
  std::map<std::string, Group> groups_;
};

// ---------------------------------------------------------------------------
// Corpus file format

/// Parses the block format: blank-line separated blocks, each with
/// "# id:", "# lang:", "# intent:" headers followed by "<token>\t<tag>" lines.
Corpus parse_corpus_file(std::string_view text);
std::string serialize_corpus(const Corpus& corpus);

Corpus read_corpus_file(const std::filesystem::path& path);
void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus);

/// A parallel corpus directory holds one "<lang>.txt" file per language.
ParallelCorpus read_parallel_dir(const std::filesystem::path& dir);
void write_parallel_dir(const std::filesystem::path& dir, const ParallelCorpus& corpus);

// ---------------------------------------------------------------------------
// Vocabulary

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Lowercases ASCII letters; the only normalization applied to tokens.
std::string normalize_token(std::string_view token);

class Vocabulary {
 public:
  Vocabulary();

  std::int32_t add_token(const std::string& token);
  std::int32_t add_intent(const std::string& intent);
  std::int32_t add_slot(const std::string& slot);
  std::int32_t add_language(const std::string& language);

  /// Adds every intent, slot tag and language of `corpus` (no tokens).
  void add_labels(const Corpus& corpus);

  /// Normalized lookup; out-of-vocabulary tokens map to kUnkId.
  std::int32_t token_id(std::string_view token) const;
  /// Label lookups throw CorpusError for unknown labels; inventories are closed.
  std::int32_t intent_id(const std::string& intent) const;
  std::int32_t slot_id(const std::string& slot) const;
  std::int32_t language_id(const std::string& language) const;

  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::string& intent(std::int32_t id) const { return intents_.at(static_cast<std::size_t>(id)); }
  const std::string& slot(std::int32_t id) const { return slots_.at(static_cast<std::size_t>(id)); }
  const std::string& language(std::int32_t id) const { return languages_.at(static_cast<std::size_t>(id)); }

  std::size_t token_count() const noexcept { return tokens_.size(); }
  std::size_t intent_count() const noexcept { return intents_.size(); }
  std::size_t slot_count() const noexcept { return slots_.size(); }
  std::size_t language_count() const noexcept { return languages_.size(); }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::string>& intents() const noexcept { return intents_; }
  const std::vector<std::string>& slots() const noexcept { return slots_; }
  const std::vector<std::string>& languages() const noexcept { return languages_; }

  /// True when intents, slots and languages agree (tokens may differ).
  bool same_labels(const Vocabulary& other) const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_, intents_, slots_, languages_;
  std::map<std::string, std::int32_t, std::less<>> token_index_;
  std::map<std::string, std::int32_t> intent_index_, slot_index_, language_index_;
};

/// Token vocabulary from tokens seen at least `min_token_freq` times, plus
/// every label of `corpus` (and of `label_source` when given, so that models
/// trained on different subsets share one closed label inventory). Labels are
/// sorted; the slot inventory always starts with "O".
Vocabulary build_vocab(const Corpus& corpus, int min_token_freq, const Corpus* label_source = nullptr);

// ---------------------------------------------------------------------------
// Multilingual dataset constructions

/// D^l: every utterance of `mixed` replaced by its `language` translation.
Corpus project_monolingual(const ParallelCorpus& parallel, const Corpus& mixed,
                           const std::string& language);

/// d^l: the utterances of `mixed` already in `language`, order preserved.
Corpus filter_language(const Corpus& mixed, const std::string& language);

struct SplitSpec {
  /// Declaration order decides block order and who takes the remainder.
  std::vector<std::pair<std::string, double>> fractions;
  std::uint64_t seed = 0;
};

/// Parses "EN=0.5,DE=0.5".
SplitSpec parse_fractions(std::string_view text, std::uint64_t seed);

/// Block sizes for `n` ids: round-half-up per language, remainder to the last.
std::vector<std::size_t> split_block_sizes(const SplitSpec& spec, std::size_t n);

/// Shuffles ids with spec.seed and assigns contiguous blocks to languages.
Corpus build_multilingual_split(const ParallelCorpus& parallel, const SplitSpec& spec);

struct DataSplits {
  ParallelCorpus train, dev, test;
};

/// 80/10/10 split over group ids, shuffled with `seed`.
DataSplits split_train_dev_test(const ParallelCorpus& parallel, std::uint64_t seed);

}  // namespace sluadv
