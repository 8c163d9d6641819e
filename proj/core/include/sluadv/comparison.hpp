#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sluadv/corpus.hpp"
#include "sluadv/evaluation.hpp"
#include "sluadv/model.hpp"
#include "sluadv/training.hpp"

namespace sluadv {

struct ComparisonConfig {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;  // applied to the train and dev parallel corpora alike
  std::vector<std::uint64_t> seeds{1};
  int min_token_freq = 2;
  std::size_t workers = 1;
  std::filesystem::path log_dir;  // per-cell training logs when set
};

/// Mean, min and max of one cell over seeds, plus the per-seed values.
struct CellStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> per_seed;

  static CellStats of(std::vector<double> values);
};

struct MetricCells {
  CellStats semer, slot_f1, ic_accuracy;
};

struct SystemRow {
  std::string system;  // "Naive", "Ideal", "Multi-lang", "Lang.-adv"
  std::map<std::string, MetricCells> per_language;
  MetricCells avg;
};

struct ComparisonReport {
  std::vector<std::string> languages;
  std::vector<std::uint64_t> seeds;
  SplitSpec split;
  std::vector<SystemRow> rows;

  const SystemRow& row(const std::string& system) const;
};

/// (new - base) / base * 100; nullopt when base is 0.
std::optional<double> relative_change(double base, double value);

/// Per seed: Naive on d^l and Ideal on D^l for every language, Multi-lang and
/// Lang.-adv on D, all evaluated on the per-language test sets. Lang.-adv is
/// skipped for a single language. A failing cell rethrows with its name.
ComparisonReport run_comparison(const ParallelCorpus& train, const ParallelCorpus& dev, const ParallelCorpus& test,
                                const ComparisonConfig& config);

/// Deterministic JSON; metric values are fractions.
nlohmann::json to_json(const ComparisonReport& report);

/// Table with one row per system and SemER / SF F1 / IC acc columns per
/// language and for the average, in percent.
std::string render_markdown(const nlohmann::json& report);

}  // namespace sluadv
