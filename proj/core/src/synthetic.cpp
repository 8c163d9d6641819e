#include "sluadv/synthetic.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <stdexcept>

#include "sluadv/random.hpp"

namespace sluadv {

namespace {

constexpr std::array kIntentNames = {"flight", "airfare", "ground_service", "airline", "abbreviation", "capacity"};
constexpr std::array kSlotNames = {"fromloc", "toloc", "depart_date", "airline_name", "class_type", "meal"};

constexpr std::string_view kConsonants = "bcdfghjklmnprstvwz";
constexpr std::string_view kVowels = "aeiou";

struct Segment {
  bool is_slot = false;
  int id = 0;  // carrier concept or slot type
};

struct Template {
  int lead = 0;
  std::vector<Segment> body;
};

using Words = std::vector<std::string>;

class WordFactory {
 public:
  explicit WordFactory(Rng& rng) : rng_(rng) {}

  /// A fresh word built from the given letter inventories.
  std::string make(std::string_view consonants, std::string_view vowels) {
    for (;;) {
      std::string word;
      const std::size_t syllables = 2 + uniform_index(rng_, 2);
      for (std::size_t s = 0; s < syllables; ++s) {
        word += consonants[uniform_index(rng_, consonants.size())];
        word += vowels[uniform_index(rng_, vowels.size())];
      }
      if (used_.insert(word).second) return word;
    }
  }

  Words phrase(std::size_t length, std::string_view consonants, std::string_view vowels) {
    Words out;
    for (std::size_t i = 0; i < length; ++i) out.push_back(make(consonants, vowels));
    return out;
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string pick_letters(std::string_view pool, std::size_t count, Rng& rng) {
  std::vector<char> letters(pool.begin(), pool.end());
  shuffle(letters, rng);
  std::string out(letters.begin(), letters.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.begin(), out.end());
  return out;
}

/// Fixed reordering of the template segments for the language at `index`.
std::vector<Segment> reorder(const std::vector<Segment>& segments, std::size_t index) {
  std::vector<Segment> out = segments;
  switch (index % 4) {
    case 0:
      break;
    case 1:
      std::reverse(out.begin(), out.end());
      break;
    case 2:
      if (!out.empty()) std::rotate(out.begin(), out.begin() + 1, out.end());
      break;
    default:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

std::string group_id(int index, int n_groups) {
  std::string digits = std::to_string(index);
  const std::size_t width = std::to_string(n_groups).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "g" + digits;
}

}  // namespace

std::vector<std::string> synthetic_intent_names(int n_intents) {
  std::vector<std::string> out;
  for (int i = 0; i < n_intents; ++i) {
    out.push_back(i < static_cast<int>(kIntentNames.size()) ? kIntentNames[static_cast<std::size_t>(i)]
                                                            : "intent_" + std::to_string(i));
  }
  return out;
}

std::vector<std::string> synthetic_slot_names(int n_slot_types) {
  std::vector<std::string> out;
  for (int i = 0; i < n_slot_types; ++i) {
    out.push_back(i < static_cast<int>(kSlotNames.size()) ? kSlotNames[static_cast<std::size_t>(i)]
                                                          : "slot_" + std::to_string(i));
  }
  return out;
}

ParallelCorpus generate_synthetic_parallel(int n_groups, const std::vector<std::string>& languages,
                                           std::uint64_t grammar_seed, const SyntheticOptions& options) {
  if (n_groups < 1) throw std::invalid_argument("n_groups must be >= 1");
  if (languages.size() < 2) throw std::invalid_argument("at least two languages are required");
  if (options.n_intents < 1 || options.n_slot_types < 1 || options.templates_per_intent < 1 ||
      options.values_per_slot < 1) {
    throw std::invalid_argument("synthetic grammar sizes must be positive");
  }

  Rng grammar_rng(derive_seed(grammar_seed, 0));
  WordFactory words(grammar_rng);
  const std::size_t n_langs = languages.size();
  const auto n_intents = static_cast<std::size_t>(options.n_intents);
  const auto n_types = static_cast<std::size_t>(options.n_slot_types);

  // Carrier concepts: two leads per intent, one carrier per slot type,
  // one generic carrier shared by the later slot types, two fillers.
  const std::size_t lead_base = 0;
  const std::size_t slot_carrier_base = lead_base + 2 * n_intents;
  const std::size_t generic_carrier = slot_carrier_base + n_types;
  const std::size_t filler_base = generic_carrier + 1;
  const std::size_t n_carriers = filler_base + 2;

  std::vector<std::string> consonants(n_langs), vowels(n_langs);
  for (std::size_t l = 0; l < n_langs; ++l) {
    consonants[l] = pick_letters(kConsonants, 7, grammar_rng);
    vowels[l] = pick_letters(kVowels, 3, grammar_rng);
  }

  // carrier_words[concept][language]
  std::vector<std::vector<Words>> carrier_words(n_carriers, std::vector<Words>(n_langs));
  for (std::size_t c = 0; c < n_carriers; ++c) {
    for (std::size_t l = 0; l < n_langs; ++l) {
      carrier_words[c][l] = words.phrase(1 + uniform_index(grammar_rng, 2), consonants[l], vowels[l]);
    }
  }

  // Value lexicons; the first two slot types (origin/destination) draw from
  // one lexicon so only context tells them apart.
  auto lexicon_of = [&](std::size_t type) { return type == 1 ? std::size_t{0} : type; };
  const auto n_values = static_cast<std::size_t>(options.values_per_slot);
  std::vector<std::vector<std::vector<Words>>> value_words(n_types);  // [lexicon][value][language]
  for (std::size_t t = 0; t < n_types; ++t) {
    if (lexicon_of(t) != t) continue;
    value_words[t].resize(n_values, std::vector<Words>(n_langs));
    for (std::size_t v = 0; v < n_values; ++v) {
      const std::size_t length = uniform01(grammar_rng) < 0.3 ? 2 : 1;
      if (uniform01(grammar_rng) < options.shared_value_fraction) {
        const Words shared = words.phrase(length, kConsonants, kVowels);
        for (std::size_t l = 0; l < n_langs; ++l) value_words[t][v][l] = shared;
      } else {
        for (std::size_t l = 0; l < n_langs; ++l) {
          value_words[t][v][l] = words.phrase(length, consonants[l], vowels[l]);
        }
      }
    }
  }

  // Templates: [lead, (carrier, slot)+] with 1..3 distinct slot types.
  std::vector<std::vector<Template>> templates(n_intents);
  for (std::size_t i = 0; i < n_intents; ++i) {
    for (int k = 0; k < options.templates_per_intent; ++k) {
      Template tpl;
      tpl.lead = static_cast<int>(lead_base + 2 * i + uniform_index(grammar_rng, 2));
      std::vector<std::size_t> types(n_types);
      for (std::size_t t = 0; t < n_types; ++t) types[t] = t;
      shuffle(types, grammar_rng);
      const std::size_t n_slots = 1 + uniform_index(grammar_rng, std::min<std::size_t>(3, n_types));
      types.resize(n_slots);
      std::sort(types.begin(), types.end());
      for (const std::size_t type : types) {
        std::size_t carrier = slot_carrier_base + type;
        if (type >= 2 && uniform01(grammar_rng) < 0.5) carrier = generic_carrier;
        tpl.body.push_back({false, static_cast<int>(carrier)});
        tpl.body.push_back({true, static_cast<int>(type)});
      }
      templates[i].push_back(std::move(tpl));
    }
  }

  const auto intent_names = synthetic_intent_names(options.n_intents);
  const auto slot_names = synthetic_slot_names(options.n_slot_types);

  Rng group_rng(derive_seed(grammar_seed, 1));
  ParallelCorpus corpus(languages);
  for (int g = 0; g < n_groups; ++g) {
    const std::size_t intent = uniform_index(group_rng, n_intents);
    const Template& tpl = templates[intent][uniform_index(group_rng, templates[intent].size())];

    std::vector<Segment> segments;
    if (uniform01(group_rng) < options.filler_probability) {
      segments.push_back({false, static_cast<int>(filler_base + uniform_index(group_rng, 2))});
    }
    segments.push_back({false, tpl.lead});
    segments.insert(segments.end(), tpl.body.begin(), tpl.body.end());

    std::vector<std::size_t> value_choice(n_types);
    for (auto& v : value_choice) v = uniform_index(group_rng, n_values);

    const std::string id = group_id(g + 1, n_groups);
    ParallelCorpus::Group group;
    for (std::size_t l = 0; l < n_langs; ++l) {
      Utterance u;
      u.id = id;
      u.language = languages[l];
      u.intent = intent_names[intent];
      for (const Segment& seg : reorder(segments, l)) {
        const auto sid = static_cast<std::size_t>(seg.id);
        if (!seg.is_slot) {
          for (const auto& w : carrier_words[sid][l]) {
            u.tokens.push_back(w);
            u.slots.emplace_back("O");
          }
          continue;
        }
        const Words& value = value_words[lexicon_of(sid)][value_choice[sid]][l];
        for (std::size_t k = 0; k < value.size(); ++k) {
          u.tokens.push_back(value[k]);
          u.slots.push_back((k == 0 ? "B-" : "I-") + slot_names[sid]);
        }
      }
      group.emplace(languages[l], std::move(u));
    }
    corpus.add_group(id, std::move(group));
  }
  return corpus;
}

}  // namespace sluadv
