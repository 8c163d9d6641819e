#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "run_config.hpp"
#include "sluadv/comparison.hpp"
#include "sluadv/corpus.hpp"
#include "sluadv/evaluation.hpp"
#include "sluadv/synthetic.hpp"
#include "sluadv/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sluadv;
using namespace sluadv::cli;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json metrics_json(const LanguageMetrics& m) {
  return {{"language", m.language},
          {"n_utterances", m.n_utterances},
          {"semer", m.semer},
          {"slot_f1", m.slot_f1},
          {"ic_accuracy", m.ic_accuracy}};
}

Corpus concatenate(const std::vector<const Corpus*>& parts) {
  Corpus all;
  std::set<std::pair<std::string, std::string>> seen;
  for (const Corpus* c : parts) {
    for (const auto& u : *c) {
      if (seen.emplace(u.id, u.language).second) all.add(u);
    }
  }
  return all;
}

fs::path require_existing(const std::string& flag, const fs::path& path) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::exists(path)) throw ConfigError(flag + ": " + path.string() + " does not exist");
  return path;
}

/// Overrides shared by train and compare.
struct TrainFlags {
  std::optional<int> epochs, patience;
  std::optional<std::size_t> batch_size;
  std::optional<int> min_token_freq;
  bool update_all_weights = false;
  bool verify_gating = false;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "Epoch cap K (per task for adversarial training)");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--patience", patience, "Early-stopping patience in dev evaluations");
    app->add_option("--min-token-freq", min_token_freq, "Minimum training frequency for a vocabulary token");
    app->add_flag("--update-all-weights", update_all_weights, "Let both adversarial tasks update every tensor");
    app->add_flag("--verify-gating", verify_gating, "Snapshot-diff parameters after every epoch");
  }

  void apply(RunConfig& c) const {
    if (epochs) c.train.epochs = *epochs;
    if (patience) c.train.patience = *patience;
    if (batch_size) c.train.batch_size = *batch_size;
    if (min_token_freq) c.min_token_freq = *min_token_freq;
    if (update_all_weights) c.train.update_all_weights = true;
    if (verify_gating) c.train.verify_gating = true;
  }
};

RunConfig base_config(const std::optional<std::string>& path) {
  return path ? load_run_config(*path) : RunConfig{};
}

// ---------------------------------------------------------------- commands

struct GenerateArgs {
  int groups = 0;
  std::string langs;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
  SyntheticOptions options;
};

void cmd_generate(const GenerateArgs& a) {
  if (a.groups <= 0) throw ConfigError("--groups must be positive");
  std::vector<std::string> languages;
  for (std::size_t start = 0; start <= a.langs.size();) {
    const auto comma = std::min(a.langs.find(',', start), a.langs.size());
    const std::string l = a.langs.substr(start, comma - start);
    if (l.empty()) throw ConfigError("--langs must be a comma-separated list of language codes");
    languages.push_back(l);
    start = comma + 1;
  }
  if (languages.size() < 2) throw ConfigError("--langs needs at least two languages");
  const fs::path out = resolve_output_dir(a.out, RunConfig{});

  ParallelCorpus p;
  try {
    p = generate_synthetic_parallel(a.groups, languages, a.seed, a.options);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generate: ") + e.what());
  }
  write_parallel_dir(out, p);
  json stats = json::object();
  for (const auto& l : p.languages()) {
    const Corpus c = p.monolingual(l);
    std::set<std::string> types;
    std::size_t tokens = 0;
    for (const auto& u : c) {
      tokens += u.tokens.size();
      types.insert(u.tokens.begin(), u.tokens.end());
    }
    stats[l] = {{"utterances", c.size()},
                {"tokens", tokens},
                {"distinct_tokens", types.size()},
                {"mean_length", static_cast<double>(tokens) / static_cast<double>(c.size())}};
  }
  const auto& o = a.options;
  write_json(out / "manifest.json",
             {{"command", "generate"},
              {"seed", a.seed},
              {"groups", a.groups},
              {"languages", languages},
              {"grammar",
               {{"n_intents", o.n_intents},
                {"n_slot_types", o.n_slot_types},
                {"templates_per_intent", o.templates_per_intent},
                {"values_per_slot", o.values_per_slot},
                {"shared_value_fraction", o.shared_value_fraction},
                {"filler_probability", o.filler_probability},
                {"intents", synthetic_intent_names(o.n_intents)},
                {"slots", synthetic_slot_names(o.n_slot_types)}}},
              {"stats", stats}});
  std::cout << "wrote " << p.size() << " groups in " << languages.size() << " languages to " << out.string() << "\n";
}

struct SplitArgs {
  std::optional<std::string> config, corpus, fractions, out;
  std::optional<std::uint64_t> seed;
};

void cmd_split(const SplitArgs& a) {
  RunConfig c = base_config(a.config);
  if (a.corpus) c.corpus_dir = *a.corpus;
  if (a.fractions) c.fractions = *a.fractions;
  if (a.seed) c.split_seed = *a.seed;
  if (c.fractions.empty()) throw ConfigError("--fractions is required");
  c.validate();
  const fs::path out = resolve_output_dir(a.out, c);
  const ParallelCorpus p = read_parallel_dir(require_existing("--corpus", c.corpus_dir));
  const SplitSpec spec = parse_fractions(c.fractions, c.split_seed);
  const Corpus mixed = build_multilingual_split(p, spec);

  write_corpus_file(out / "mixed.txt", mixed);
  json counts{{"groups", p.size()}, {"mixed", mixed.size()}};
  json fractions = json::array();
  const auto sizes = split_block_sizes(spec, p.size());
  for (std::size_t i = 0; i < spec.fractions.size(); ++i) {
    const std::string& l = spec.fractions[i].first;
    const Corpus ideal = project_monolingual(p, mixed, l);
    const Corpus naive = filter_language(mixed, l);
    write_corpus_file(out / ("ideal_" + l + ".txt"), ideal);
    write_corpus_file(out / ("naive_" + l + ".txt"), naive);
    counts["per_language"][l] = {{"block", sizes[i]}, {"ideal", ideal.size()}, {"naive", naive.size()}};
    fractions.push_back({{"language", l}, {"fraction", spec.fractions[i].second}});
  }
  write_json(out / "manifest.json", {{"command", "split"},
                                     {"corpus_dir", c.corpus_dir.string()},
                                     {"seed", c.split_seed},
                                     {"fractions", fractions},
                                     {"counts", counts}});
  std::cout << "mixed corpus of " << mixed.size() << " utterances written to " << out.string() << "\n";
}

struct TrainArgs {
  std::optional<std::string> config, train, dev, variant, out;
  std::optional<std::uint64_t> seed;
  TrainFlags flags;
};

void cmd_train(const TrainArgs& a) {
  RunConfig c = base_config(a.config);
  if (a.variant) c.variant = *a.variant;
  if (a.seed) c.seeds = {*a.seed};
  a.flags.apply(c);
  c.validate();
  if (!a.train) throw ConfigError("--train is required");
  if (!a.dev) throw ConfigError("--dev is required");
  const fs::path out = resolve_output_dir(a.out, c);
  const Corpus train = read_corpus_file(require_existing("--train", *a.train));
  const Corpus dev = read_corpus_file(require_existing("--dev", *a.dev));
  if (train.empty()) throw ConfigError("--train: corpus is empty");
  if (dev.empty()) throw ConfigError("--dev: corpus is empty");
  const ModelVariant variant = parse_variant(c.variant);
  if (c.variant == "standard-mono" && train.languages().size() != 1) {
    throw ConfigError("variant 'standard-mono' needs a single-language training corpus, got " +
                      std::to_string(train.languages().size()) + " languages");
  }
  if (variant == ModelVariant::adversarial && train.languages().size() < 2) {
    throw ConfigError("variant 'adversarial' needs at least 2 languages in the training corpus, got " +
                      std::to_string(train.languages().size()));
  }

  const std::uint64_t seed = c.seeds.front();
  const Corpus labels = concatenate({&train, &dev});
  SluModel model = make_model(variant, build_vocab(train, c.min_token_freq, &labels), c.model, seed);
  TrainConfig tc = c.train;
  tc.seed = seed;
  tc.log_path = out / "train_log.jsonl";
  const TrainLog log = train_model(model, train, dev, tc);
  save_model(out / "model.ckpt", model, log.counters.global_step);
  write_json(out / "manifest.json", {{"command", "train"},
                                     {"config", to_json(c)},
                                     {"seed", seed},
                                     {"train", *a.train},
                                     {"dev", *a.dev},
                                     {"epochs_run", log.records.size()},
                                     {"epochs_task1", log.counters.epochs_task1},
                                     {"epochs_task2", log.counters.epochs_task2},
                                     {"global_step", log.counters.global_step},
                                     {"best_epoch", log.best_epoch},
                                     {"early_stopped", log.early_stopped}});
  std::cout << "trained " << c.variant << " for " << log.records.size() << " epochs (best " << log.best_epoch
            << "); checkpoint at " << (out / "model.ckpt").string() << "\n";
}

struct EvalArgs {
  std::optional<std::string> model, test, out;
};

void cmd_eval(const EvalArgs& a) {
  if (!a.model) throw ConfigError("--model is required");
  if (!a.test) throw ConfigError("--test is required");
  const fs::path out = resolve_output_dir(a.out, RunConfig{});
  const SluModel model = load_model(require_existing("--model", *a.model));
  const Corpus test = read_corpus_file(require_existing("--test", *a.test));
  std::map<std::string, LanguageMetrics> metrics;
  try {
    metrics = evaluate_model(model, test);
  } catch (const CorpusError& e) {
    throw std::runtime_error(std::string("label inventory mismatch between model and test corpus: ") + e.what());
  }
  json j{{"command", "eval"}, {"model", *a.model}, {"test", *a.test}};
  for (const auto& [l, m] : metrics) j["per_language"][l] = metrics_json(m);
  j["avg"] = metrics_json(averaged(metrics));
  write_json(out / "metrics.json", j);
  for (const auto& [l, m] : metrics) {
    std::cout << l << ": SemER " << m.semer * 100 << "  SF F1 " << m.slot_f1 * 100 << "  IC acc "
              << m.ic_accuracy * 100 << "\n";
  }
}

struct CompareArgs {
  std::optional<std::string> config, corpus, fractions, seeds, out;
  std::optional<std::size_t> workers;
  TrainFlags flags;
};

void cmd_compare(const CompareArgs& a) {
  RunConfig c = base_config(a.config);
  if (a.corpus) c.corpus_dir = *a.corpus;
  if (a.fractions) c.fractions = *a.fractions;
  if (a.seeds) c.seeds = parse_seed_list(*a.seeds);
  if (a.workers) c.workers = *a.workers;
  a.flags.apply(c);
  if (c.fractions.empty()) throw ConfigError("--fractions (or 'split.fractions' in the config) is required");
  c.validate();
  const fs::path out = resolve_output_dir(a.out, c);
  const ParallelCorpus p = read_parallel_dir(require_existing("--corpus", c.corpus_dir));
  const DataSplits parts = split_train_dev_test(p, c.partition_seed);

  ComparisonConfig cc;
  cc.model = c.model;
  cc.train = c.train;
  cc.split = parse_fractions(c.fractions, c.split_seed);
  cc.seeds = c.seeds;
  cc.min_token_freq = c.min_token_freq;
  cc.workers = c.workers;
  cc.log_dir = out / "logs";
  const ComparisonReport report = run_comparison(parts.train, parts.dev, parts.test, cc);
  const json j = sluadv::to_json(report);
  write_json(out / "report.json", j);
  const std::string md = render_markdown(j);
  write_text(out / "report.md", md);
  write_json(out / "manifest.json", {{"command", "compare"},
                                     {"config", to_json(c)},
                                     {"partition",
                                      {{"seed", c.partition_seed},
                                       {"train", parts.train.size()},
                                       {"dev", parts.dev.size()},
                                       {"test", parts.test.size()}}}});
  std::cout << md;
}

struct ReportArgs {
  std::optional<std::string> input, out;
};

void cmd_report(const ReportArgs& a) {
  if (!a.input) throw ConfigError("--input is required");
  std::ifstream in(require_existing("--input", *a.input));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--input is not valid JSON: " + std::string(e.what()));
  }
  const std::string md = render_markdown(j);
  const fs::path out = resolve_output_dir(a.out, RunConfig{});
  write_text(out / "report.md", md);
  std::cout << md;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual SLU with language-adversarial training"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic parallel corpus");
  g->add_option("--groups", gen.groups, "Number of parallel groups")->required();
  g->add_option("--langs", gen.langs, "Comma-separated language codes")->required();
  g->add_option("--seed", gen.seed, "Grammar seed");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--intents", gen.options.n_intents, "Number of intents");
  g->add_option("--slot-types", gen.options.n_slot_types, "Number of slot types");
  g->add_option("--values-per-slot", gen.options.values_per_slot, "Value concepts per slot type");
  g->add_option("--shared-value-fraction", gen.options.shared_value_fraction,
                "Fraction of slot values spelled the same in every language");

  SplitArgs split;
  auto* s = app.add_subcommand("split", "Build the mixed corpus D and its projections D^l and filters d^l");
  s->add_option("--config", split.config, "JSON run config");
  s->add_option("--corpus", split.corpus, "Parallel corpus directory");
  s->add_option("--fractions", split.fractions, "Language fractions, e.g. EN=0.5,DE=0.5");
  s->add_option("--seed", split.seed, "Shuffle seed");
  s->add_option("--out", split.out, "Output directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one model");
  t->add_option("--config", train.config, "JSON run config");
  t->add_option("--train", train.train, "Training corpus file");
  t->add_option("--dev", train.dev, "Dev corpus file");
  t->add_option("--variant", train.variant, "standard-mono, standard-multi or adversarial");
  t->add_option("--seed", train.seed, "Model and training seed");
  t->add_option("--out", train.out, "Output directory");
  train.flags.add_to(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint per language");
  e->add_option("--model", ev.model, "Checkpoint file");
  e->add_option("--test", ev.test, "Test corpus file");
  e->add_option("--out", ev.out, "Output directory");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Train and evaluate Naive, Ideal, Multi-lang and Lang.-adv");
  c->add_option("--config", cmp.config, "JSON run config");
  c->add_option("--corpus", cmp.corpus, "Parallel corpus directory (partitioned 80/10/10)");
  c->add_option("--fractions", cmp.fractions, "Language fractions of the mixed training corpus");
  c->add_option("--seeds", cmp.seeds, "Comma-separated seeds");
  c->add_option("--workers", cmp.workers, "Cells trained in parallel");
  c->add_option("--out", cmp.out, "Output directory");
  cmp.flags.add_to(c);

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Render a comparison report as markdown");
  r->add_option("--input", rep.input, "report.json written by compare");
  r->add_option("--out", rep.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) cmd_generate(gen);
    if (*s) cmd_split(split);
    if (*t) cmd_train(train);
    if (*e) cmd_eval(ev);
    if (*c) cmd_compare(cmp);
    if (*r) cmd_report(rep);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
