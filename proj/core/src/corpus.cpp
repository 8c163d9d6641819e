#include "sluadv/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sluadv/random.hpp"

namespace sluadv {

namespace {

bool has_surrounding_space(std::string_view s) {
  return !s.empty() && (std::isspace(static_cast<unsigned char>(s.front())) ||
                        std::isspace(static_cast<unsigned char>(s.back())));
}

bool has_any(std::string_view s, std::string_view chars) {
  return s.find_first_of(chars) != std::string_view::npos;
}

void check_field(const std::string& value, const char* field) {
  if (value.empty()) throw CorpusError(std::string("empty ") + field);
  if (has_any(value, "\t\r\n") || has_surrounding_space(value)) {
    throw CorpusError(std::string("invalid characters in ") + field + " '" + value + "'");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

bool is_valid_bio_tag(std::string_view tag) {
  if (tag == "O") return true;
  if (tag.size() < 3 || tag[1] != '-') return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return !has_any(tag, " \t\r\n");
}

void validate(const Utterance& u) {
  check_field(u.id, "id");
  check_field(u.language, "language");
  check_field(u.intent, "intent");
  if (u.tokens.empty()) throw CorpusError("utterance " + u.id + " has no tokens");
  if (u.tokens.size() != u.slots.size()) {
    throw CorpusError("utterance " + u.id + ": " + std::to_string(u.tokens.size()) +
                      " tokens but " + std::to_string(u.slots.size()) + " slot tags");
  }
  for (const auto& token : u.tokens) {
    if (token.empty() || has_any(token, " \t\r\n")) {
      throw CorpusError("utterance " + u.id + ": invalid token '" + token + "'");
    }
  }
  for (const auto& tag : u.slots) {
    if (!is_valid_bio_tag(tag)) throw CorpusError("utterance " + u.id + ": invalid BIO tag '" + tag + "'");
  }
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<Utterance> utterances) {
  utterances_.reserve(utterances.size());
  for (auto& u : utterances) add(std::move(u));
}

void Corpus::add(Utterance u) {
  validate(u);
  if (!keys_.emplace(u.id, u.language).second) {
    throw CorpusError("duplicate utterance (" + u.id + ", " + u.language + ")");
  }
  languages_.insert(u.language);
  utterances_.push_back(std::move(u));
}

// ---------------------------------------------------------------------------

ParallelCorpus::ParallelCorpus(std::vector<std::string> languages) : languages_(std::move(languages)) {
  std::set<std::string> seen;
  for (const auto& l : languages_) {
    if (!seen.insert(l).second) throw CorpusError("duplicate language " + l);
  }
}

ParallelCorpus ParallelCorpus::from_corpora(const std::vector<Corpus>& per_language) {
  std::vector<std::string> languages;
  for (const auto& c : per_language) {
    if (c.languages().size() != 1) throw CorpusError("parallel input must be one language per corpus");
    languages.push_back(*c.languages().begin());
  }
  ParallelCorpus parallel(languages);
  if (per_language.empty()) return parallel;

  std::map<std::string, Group> groups;
  for (const auto& c : per_language) {
    for (const auto& u : c) groups[u.id].emplace(u.language, u);
  }
  for (const auto& u : per_language.front()) {
    parallel.add_group(u.id, groups.at(u.id));
  }
  if (parallel.size() != groups.size()) {
    throw CorpusError("parallel corpora do not share the same id set");
  }
  return parallel;
}

void ParallelCorpus::add_group(const std::string& id, Group group) {
  if (groups_.count(id)) throw CorpusError("duplicate group id " + id);
  if (group.size() != languages_.size()) {
    throw CorpusError("group " + id + " does not cover all languages");
  }
  const std::string* intent = nullptr;
  for (const auto& language : languages_) {
    auto it = group.find(language);
    if (it == group.end()) throw CorpusError("group " + id + " is missing language " + language);
    validate(it->second);
    if (it->second.id != id || it->second.language != language) {
      throw CorpusError("group " + id + " holds a mislabeled utterance");
    }
    if (intent && *intent != it->second.intent) {
      throw CorpusError("group " + id + " has inconsistent intents");
    }
    intent = &it->second.intent;
  }
  ids_.push_back(id);
  groups_.emplace(id, std::move(group));
}

const Utterance& ParallelCorpus::at(const std::string& id, const std::string& language) const {
  auto g = groups_.find(id);
  if (g == groups_.end()) throw CorpusError("unknown utterance id " + id);
  auto u = g->second.find(language);
  if (u == g->second.end()) throw CorpusError("no " + language + " translation for id " + id);
  return u->second;
}

bool ParallelCorpus::contains(const std::string& id, const std::string& language) const {
  auto g = groups_.find(id);
  return g != groups_.end() && g->second.count(language) > 0;
}

Corpus ParallelCorpus::monolingual(const std::string& language) const {
  Corpus out;
  for (const auto& id : ids_) out.add(at(id, language));
  return out;
}

ParallelCorpus ParallelCorpus::subset(const std::vector<std::string>& ids) const {
  ParallelCorpus out(languages_);
  for (const auto& id : ids) {
    auto g = groups_.find(id);
    if (g == groups_.end()) throw CorpusError("unknown utterance id " + id);
    out.add_group(id, g->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

Corpus parse_corpus_file(std::string_view text) {
  Corpus corpus;
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }

  static constexpr std::string_view kHeaders[] = {"# id:", "# lang:", "# intent:"};
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const std::size_t block_line = i + 1;
    Utterance u;
    std::string* fields[] = {&u.id, &u.language, &u.intent};
    for (std::size_t h = 0; h < 3; ++h, ++i) {
      if (i >= lines.size() || !lines[i].starts_with(kHeaders[h])) {
        throw ParseError(i + 1, "expected header '" + std::string(kHeaders[h]) + " <value>'");
      }
      *fields[h] = std::string(trim(lines[i].substr(kHeaders[h].size())));
      if (fields[h]->empty()) throw ParseError(i + 1, "empty header value");
    }
    for (; i < lines.size() && !trim(lines[i]).empty(); ++i) {
      const std::string_view line = lines[i];
      if (line.starts_with("#")) throw ParseError(i + 1, "unexpected header inside token lines");
      const std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos) {
        throw ParseError(i + 1, "token/slot arity mismatch: missing tab-separated BIO tag");
      }
      const std::string_view token = line.substr(0, tab);
      const std::string_view tag = line.substr(tab + 1);
      if (token.empty() || has_any(token, " ")) throw ParseError(i + 1, "invalid token");
      if (has_any(tag, "\t")) throw ParseError(i + 1, "token/slot arity mismatch: extra columns");
      if (!is_valid_bio_tag(tag)) throw ParseError(i + 1, "invalid BIO tag '" + std::string(tag) + "'");
      u.tokens.emplace_back(token);
      u.slots.emplace_back(tag);
    }
    if (u.tokens.empty()) throw ParseError(block_line, "block has no tokens");
    try {
      corpus.add(std::move(u));
    } catch (const CorpusError& e) {
      throw ParseError(block_line, e.what());
    }
  }
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  bool first = true;
  for (const auto& u : corpus) {
    if (!first) out += '\n';
    first = false;
    out += "# id: " + u.id + "\n";
    out += "# lang: " + u.language + "\n";
    out += "# intent: " + u.intent + "\n";
    for (std::size_t t = 0; t < u.tokens.size(); ++t) {
      out += u.tokens[t];
      out += '\t';
      out += u.slots[t];
      out += '\n';
    }
  }
  return out;
}

Corpus read_corpus_file(const std::filesystem::path& path) {
  try {
    return parse_corpus_file(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << serialize_corpus(corpus);
  if (!out) throw CorpusError("write failed for " + path.string());
}

ParallelCorpus read_parallel_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CorpusError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CorpusError("no corpus files in " + dir.string());
  std::vector<Corpus> corpora;
  for (const auto& f : files) corpora.push_back(read_corpus_file(f));
  return ParallelCorpus::from_corpora(corpora);
}

void write_parallel_dir(const std::filesystem::path& dir, const ParallelCorpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const auto& language : corpus.languages()) {
    write_corpus_file(dir / (language + ".txt"), corpus.monolingual(language));
  }
}

// ---------------------------------------------------------------------------

std::string normalize_token(std::string_view token) {
  std::string out(token);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Vocabulary::Vocabulary() {
  add_token(std::string(kPadToken));
  add_token(std::string(kUnkToken));
  add_slot("O");
}

namespace {

std::int32_t intern(std::vector<std::string>& names, auto& index, const std::string& name) {
  auto it = index.find(name);
  if (it != index.end()) return it->second;
  const auto id = static_cast<std::int32_t>(names.size());
  names.push_back(name);
  index.emplace(name, id);
  return id;
}

std::int32_t lookup(const auto& index, const std::string& name, const char* kind) {
  auto it = index.find(name);
  if (it == index.end()) throw CorpusError(std::string("unknown ") + kind + " label '" + name + "'");
  return it->second;
}

}  // namespace

std::int32_t Vocabulary::add_token(const std::string& token) { return intern(tokens_, token_index_, token); }
std::int32_t Vocabulary::add_intent(const std::string& intent) { return intern(intents_, intent_index_, intent); }
std::int32_t Vocabulary::add_slot(const std::string& slot) { return intern(slots_, slot_index_, slot); }
std::int32_t Vocabulary::add_language(const std::string& language) {
  return intern(languages_, language_index_, language);
}

void Vocabulary::add_labels(const Corpus& corpus) {
  for (const auto& u : corpus) {
    add_intent(u.intent);
    add_language(u.language);
    for (const auto& s : u.slots) add_slot(s);
  }
}

std::int32_t Vocabulary::token_id(std::string_view token) const {
  auto it = token_index_.find(normalize_token(token));
  return it == token_index_.end() ? kUnkId : it->second;
}

std::int32_t Vocabulary::intent_id(const std::string& intent) const { return lookup(intent_index_, intent, "intent"); }
std::int32_t Vocabulary::slot_id(const std::string& slot) const { return lookup(slot_index_, slot, "slot"); }
std::int32_t Vocabulary::language_id(const std::string& language) const {
  return lookup(language_index_, language, "language");
}

bool Vocabulary::same_labels(const Vocabulary& other) const {
  return intents_ == other.intents_ && slots_ == other.slots_ && languages_ == other.languages_;
}

Vocabulary build_vocab(const Corpus& corpus, int min_token_freq, const Corpus* label_source) {
  if (min_token_freq < 1) throw CorpusError("min_token_freq must be >= 1");
  if (corpus.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");

  std::map<std::string, int> counts;
  std::set<std::string> intents, slots, languages;
  for (const auto& u : corpus) {
    for (const auto& t : u.tokens) ++counts[normalize_token(t)];
    intents.insert(u.intent);
    languages.insert(u.language);
    slots.insert(u.slots.begin(), u.slots.end());
  }
  if (label_source) {
    for (const auto& u : *label_source) {
      intents.insert(u.intent);
      languages.insert(u.language);
      slots.insert(u.slots.begin(), u.slots.end());
    }
  }
  Vocabulary vocab;
  for (const auto& [token, count] : counts) {
    if (count >= min_token_freq) vocab.add_token(token);
  }
  for (const auto& i : intents) vocab.add_intent(i);
  for (const auto& s : slots) vocab.add_slot(s);
  for (const auto& l : languages) vocab.add_language(l);
  return vocab;
}

// ---------------------------------------------------------------------------

Corpus project_monolingual(const ParallelCorpus& parallel, const Corpus& mixed, const std::string& language) {
  Corpus out;
  for (const auto& u : mixed) {
    if (!parallel.contains(u.id, language)) {
      throw CorpusError("no " + language + " translation for id " + u.id);
    }
    out.add(parallel.at(u.id, language));
  }
  return out;
}

Corpus filter_language(const Corpus& mixed, const std::string& language) {
  Corpus out;
  for (const auto& u : mixed) {
    if (u.language == language) out.add(u);
  }
  return out;
}

SplitSpec parse_fractions(std::string_view text, std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view item = trim(text.substr(pos, comma - pos));
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw CorpusError("fraction entry must look like LANG=VALUE, got '" + std::string(item) + "'");
    }
    const std::string value(trim(item.substr(eq + 1)));
    std::size_t used = 0;
    double fraction = 0.0;
    try {
      fraction = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw CorpusError("invalid fraction '" + value + "'");
    spec.fractions.emplace_back(std::string(trim(item.substr(0, eq))), fraction);
    pos = comma + 1;
  }
  return spec;
}

std::vector<std::size_t> split_block_sizes(const SplitSpec& spec, std::size_t n) {
  if (spec.fractions.empty()) throw CorpusError("split has no languages");
  double total = 0.0;
  std::set<std::string> seen;
  for (const auto& [language, fraction] : spec.fractions) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw CorpusError("fraction for " + language + " outside [0, 1]");
    if (!seen.insert(language).second) throw CorpusError("language " + language + " listed twice");
    total += fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw CorpusError("split fractions sum to " + std::to_string(total) + ", expected 1");
  }
  std::vector<std::size_t> sizes;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i + 1 < spec.fractions.size(); ++i) {
    const auto size = static_cast<std::size_t>(std::floor(spec.fractions[i].second * static_cast<double>(n) + 0.5));
    if (assigned + size > n) throw CorpusError("split block sizes exceed the id count");
    sizes.push_back(size);
    assigned += size;
  }
  sizes.push_back(n - assigned);
  return sizes;
}

Corpus build_multilingual_split(const ParallelCorpus& parallel, const SplitSpec& spec) {
  for (const auto& [language, fraction] : spec.fractions) {
    if (std::find(parallel.languages().begin(), parallel.languages().end(), language) ==
        parallel.languages().end()) {
      throw CorpusError("split language " + language + " not in the parallel corpus");
    }
  }
  const auto sizes = split_block_sizes(spec, parallel.size());
  std::vector<std::string> ids = parallel.ids();
  Rng rng(spec.seed);
  shuffle(ids, rng);

  Corpus out;
  std::size_t next = 0;
  for (std::size_t block = 0; block < sizes.size(); ++block) {
    const auto& language = spec.fractions[block].first;
    for (std::size_t k = 0; k < sizes[block]; ++k) out.add(parallel.at(ids[next++], language));
  }
  return out;
}

DataSplits split_train_dev_test(const ParallelCorpus& parallel, std::uint64_t seed) {
  std::vector<std::string> ids = parallel.ids();
  Rng rng(seed);
  shuffle(ids, rng);
  const std::size_t n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n) + 0.5));
  const auto n_dev = std::min(n - n_train, static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 0.5)));
  const auto begin = ids.begin();
  DataSplits out;
  out.train = parallel.subset({begin, begin + static_cast<std::ptrdiff_t>(n_train)});
  out.dev = parallel.subset({begin + static_cast<std::ptrdiff_t>(n_train),
                             begin + static_cast<std::ptrdiff_t>(n_train + n_dev)});
  out.test = parallel.subset({begin + static_cast<std::ptrdiff_t>(n_train + n_dev), ids.end()});
  return out;
}

}  // namespace sluadv
