#include "sluadv/comparison.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <initializer_list>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace sluadv {

namespace {

const char* const kNaive = "Naive";
const char* const kIdeal = "Ideal";
const char* const kMulti = "Multi-lang";
const char* const kAdv = "Lang.-adv";

struct Cell {
  std::string system;
  std::string language;  // empty for the multilingual systems
  std::size_t seed_index = 0;
  ModelVariant variant = ModelVariant::standard;
  const Corpus* train = nullptr;
  const Corpus* dev = nullptr;
  std::map<std::string, LanguageMetrics> result;

  std::string name(std::uint64_t seed) const {
    return system + (language.empty() ? "" : "/" + language) + " seed " + std::to_string(seed);
  }
};

// Label inventory source: every utterance of every partition. Only intent and
// slot names are read from it; the token vocabulary comes from each cell's train.
Corpus concatenate(std::initializer_list<const ParallelCorpus*> parts) {
  Corpus all;
  for (const ParallelCorpus* p : parts) {
    for (const auto& language : p->languages()) {
      for (const auto& u : p->monolingual(language)) all.add(u);
    }
  }
  return all;
}

void run_cell(Cell& cell, const ComparisonConfig& cfg, std::uint64_t seed, const Corpus& labels,
              const std::map<std::string, Corpus>& tests) {
  Vocabulary vocab = build_vocab(*cell.train, cfg.min_token_freq, &labels);
  SluModel model = make_model(cell.variant, std::move(vocab), cfg.model, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.checkpoint_dir.clear();
  tc.log_path.clear();
  if (!cfg.log_dir.empty()) {
    std::string stem = cell.system + (cell.language.empty() ? "" : "_" + cell.language) + "_seed" +
                       std::to_string(seed);
    std::replace(stem.begin(), stem.end(), '.', '_');
    tc.log_path = cfg.log_dir / (stem + ".jsonl");
  }
  train_model(model, *cell.train, *cell.dev, tc);
  for (const auto& [language, test] : tests) {
    if (!cell.language.empty() && language != cell.language) continue;
    cell.result[language] = evaluate_model(model, test).at(language);
  }
}

MetricCells cells_of(const std::vector<LanguageMetrics>& per_seed) {
  std::vector<double> semer, f1, acc;
  for (const auto& m : per_seed) {
    semer.push_back(m.semer);
    f1.push_back(m.slot_f1);
    acc.push_back(m.ic_accuracy);
  }
  return {CellStats::of(semer), CellStats::of(f1), CellStats::of(acc)};
}

nlohmann::json cell_json(const CellStats& c) {
  return {{"mean", c.mean}, {"min", c.min}, {"max", c.max}, {"per_seed", c.per_seed}};
}

nlohmann::json metric_json(const MetricCells& m) {
  return {{"semer", cell_json(m.semer)}, {"slot_f1", cell_json(m.slot_f1)}, {"ic_accuracy", cell_json(m.ic_accuracy)}};
}

nlohmann::json change_json(const MetricCells& base, const MetricCells& value) {
  const auto one = [](const CellStats& b, const CellStats& v) {
    const auto c = relative_change(b.mean, v.mean);
    return c ? nlohmann::json(*c) : nlohmann::json(nullptr);
  };
  return {{"semer", one(base.semer, value.semer)},
          {"slot_f1", one(base.slot_f1, value.slot_f1)},
          {"ic_accuracy", one(base.ic_accuracy, value.ic_accuracy)}};
}

}  // namespace

CellStats CellStats::of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("CellStats: no values");
  CellStats c;
  c.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  c.min = *std::min_element(values.begin(), values.end());
  c.max = *std::max_element(values.begin(), values.end());
  c.per_seed = std::move(values);
  return c;
}

const SystemRow& ComparisonReport::row(const std::string& system) const {
  for (const auto& r : rows) {
    if (r.system == system) return r;
  }
  throw std::out_of_range("no report row for system '" + system + "'");
}

std::optional<double> relative_change(double base, double value) {
  if (base == 0.0) return std::nullopt;
  return (value - base) / base * 100.0;
}

ComparisonReport run_comparison(const ParallelCorpus& train, const ParallelCorpus& dev, const ParallelCorpus& test,
                                const ComparisonConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("comparison: no seeds");
  if (cfg.split.fractions.empty()) throw std::invalid_argument("comparison: no split fractions");
  cfg.model.validate();
  cfg.train.validate();
  std::vector<std::string> languages;
  for (const auto& [l, _] : cfg.split.fractions) languages.push_back(l);
  for (const auto& l : languages) {
    for (const ParallelCorpus* p : {&train, &dev, &test}) {
      if (std::find(p->languages().begin(), p->languages().end(), l) == p->languages().end()) {
        throw std::invalid_argument("comparison: language '" + l + "' missing from a parallel corpus");
      }
    }
  }

  const Corpus mixed_train = build_multilingual_split(train, cfg.split);
  const Corpus mixed_dev = build_multilingual_split(dev, cfg.split);
  const Corpus labels = concatenate({&train, &dev, &test});
  std::map<std::string, Corpus> naive_train, naive_dev, ideal_train, ideal_dev, tests;
  for (const auto& l : languages) {
    naive_train[l] = filter_language(mixed_train, l);
    naive_dev[l] = filter_language(mixed_dev, l);
    ideal_train[l] = project_monolingual(train, mixed_train, l);
    ideal_dev[l] = project_monolingual(dev, mixed_dev, l);
    tests[l] = test.monolingual(l);
    if (naive_train[l].empty() || naive_dev[l].empty()) {
      throw std::invalid_argument("comparison: language '" + l + "' receives no training or dev utterances");
    }
  }

  std::vector<Cell> cells;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    for (const auto& l : languages) {
      cells.push_back({kNaive, l, s, ModelVariant::standard, &naive_train[l], &naive_dev[l], {}});
      cells.push_back({kIdeal, l, s, ModelVariant::standard, &ideal_train[l], &ideal_dev[l], {}});
    }
    cells.push_back({kMulti, "", s, ModelVariant::standard, &mixed_train, &mixed_dev, {}});
    if (languages.size() > 1) {
      cells.push_back({kAdv, "", s, ModelVariant::adversarial, &mixed_train, &mixed_dev, {}});
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::string error_cell;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      Cell& cell = cells[i];
      const std::uint64_t seed = cfg.seeds[cell.seed_index];
      try {
        run_cell(cell, cfg, seed, labels, tests);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::current_exception();
          error_cell = cell.name(seed);
        }
        return;
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(cfg.workers, 1, cells.size());
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw std::runtime_error("cell " + error_cell + " failed: " + e.what());
    }
  }

  ComparisonReport report;
  report.languages = languages;
  report.seeds = cfg.seeds;
  report.split = cfg.split;
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<std::string> systems{kNaive, kIdeal, kMulti};
  if (languages.size() > 1) systems.push_back(kAdv);
  for (const auto& system : systems) {
    // per seed: language -> metrics
    std::vector<std::map<std::string, LanguageMetrics>> by_seed(n_seeds);
    for (const Cell& c : cells) {
      if (c.system != system) continue;
      for (const auto& [l, m] : c.result) by_seed[c.seed_index][l] = m;
    }
    SystemRow row;
    row.system = system;
    std::vector<LanguageMetrics> avg_per_seed;
    for (const auto& per_language : by_seed) avg_per_seed.push_back(averaged(per_language));
    row.avg = cells_of(avg_per_seed);
    for (const auto& l : languages) {
      std::vector<LanguageMetrics> seq;
      for (const auto& per_language : by_seed) seq.push_back(per_language.at(l));
      row.per_language[l] = cells_of(seq);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

nlohmann::json to_json(const ComparisonReport& report) {
  nlohmann::json fractions = nlohmann::json::array();
  for (const auto& [l, f] : report.split.fractions) fractions.push_back({{"language", l}, {"fraction", f}});
  nlohmann::json j{
      {"languages", report.languages},
      {"seeds", report.seeds},
      {"split", {{"fractions", fractions}, {"seed", report.split.seed}}},
      {"metadata",
       {{"units", "fractions in [0, 1]; SemER may exceed 1"},
        {"averaging", "unweighted mean over languages, then mean/min/max over seeds"},
        {"semer_matching",
         "slots compared as (label, span text): exact matches first, then equal text with a different label as "
         "substitutions, then leftovers as deletions and insertions"},
        {"slot_f1", "micro-averaged exact chunk match; I-x without a preceding B-x/I-x opens a chunk"},
        {"relative_change", "(system - Naive) / Naive * 100 on seed means"}}},
  };
  const SystemRow* naive = nullptr;
  for (const auto& r : report.rows) {
    if (r.system == kNaive) naive = &r;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"system", r.system}, {"avg", metric_json(r.avg)}};
    for (const auto& [l, m] : r.per_language) row["per_language"][l] = metric_json(m);
    if (naive != nullptr && &r != naive) {
      row["relative_change"]["avg"] = change_json(naive->avg, r.avg);
      for (const auto& [l, m] : r.per_language) {
        row["relative_change"]["per_language"][l] = change_json(naive->per_language.at(l), m);
      }
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace sluadv
