#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

namespace sluadv::cli {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown config field '" + (where.empty() ? "" : where + ".") + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("config field '" + field + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("config field '" + field + "' must be an integer");
      if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) {
        throw ConfigError("config field '" + field + "' must be nonnegative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("config field '" + field + "' must be a number");
    } else {
      if (!v.is_string()) throw ConfigError("config field '" + field + "' must be a string");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out) {
  std::string s;
  if (!j.contains(key)) return;
  read(j, key, "", s);
  out = s;
}

ModelConfig parse_model(const json& j, ModelConfig m) {
  const std::string w = "model";
  require_object(j, w,
                 {"d_model", "n_layers", "n_heads", "ffn_dim", "max_len", "encoder_dropout", "decoder_hidden",
                  "cnn_dim", "ic_dropout", "sf_dropout", "lang_dropout"});
  read(j, "d_model", w, m.d_model);
  read(j, "n_layers", w, m.n_layers);
  read(j, "n_heads", w, m.n_heads);
  read(j, "ffn_dim", w, m.ffn_dim);
  read(j, "max_len", w, m.max_len);
  read(j, "encoder_dropout", w, m.encoder_dropout);
  read(j, "decoder_hidden", w, m.decoder_hidden);
  read(j, "cnn_dim", w, m.cnn_dim);
  read(j, "ic_dropout", w, m.ic_dropout);
  read(j, "sf_dropout", w, m.sf_dropout);
  read(j, "lang_dropout", w, m.lang_dropout);
  return m;
}

LossWeights parse_weights(const json& j) {
  const std::string w = "train.weights";
  require_object(j, w, {"alpha_d", "alpha_i", "alpha_s", "alpha_p", "beta_d"});
  LossWeights lw;
  read(j, "alpha_d", w, lw.alpha_d);
  read(j, "alpha_i", w, lw.alpha_i);
  read(j, "alpha_s", w, lw.alpha_s);
  read(j, "alpha_p", w, lw.alpha_p);
  read(j, "beta_d", w, lw.beta_d);
  return lw;
}

TrainConfig parse_train(const json& j, TrainConfig t) {
  const std::string w = "train";
  require_object(j, w,
                 {"epochs", "batch_size", "noam_scale", "warmup", "weights", "patience", "eval_every", "parity_mode",
                  "update_all_weights", "verify_gating"});
  read(j, "epochs", w, t.epochs);
  read(j, "batch_size", w, t.batch_size);
  read(j, "noam_scale", w, t.noam_scale);
  read(j, "warmup", w, t.warmup);
  read(j, "patience", w, t.patience);
  read(j, "eval_every", w, t.eval_every);
  read(j, "parity_mode", w, t.parity_mode);
  read(j, "update_all_weights", w, t.update_all_weights);
  read(j, "verify_gating", w, t.verify_gating);
  if (j.contains("weights")) t.weights = parse_weights(j.at("weights"));
  return t;
}

std::string fractions_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (!v.is_object()) throw ConfigError("config field 'split.fractions' must be a string or an object");
  std::string out;
  for (const auto& [lang, f] : v.items()) {
    if (!f.is_number()) throw ConfigError("config field 'split.fractions." + lang + "' must be a number");
    if (!out.empty()) out += ',';
    out += lang + "=" + f.dump();
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  try {
    parse_variant(variant);
  } catch (const std::invalid_argument&) {
    throw ConfigError("config field 'variant' must be standard-mono, standard-multi or adversarial, got '" + variant +
                      "'");
  }
  if (seeds.empty()) throw ConfigError("config field 'seeds' must not be empty");
  if (min_token_freq < 1) throw ConfigError("config field 'min_token_freq' must be >= 1");
  if (workers < 1) throw ConfigError("config field 'workers' must be >= 1");
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config section 'model': ") + e.what());
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config section 'train': ") + e.what());
  }
  if (!fractions.empty()) {
    try {
      split_block_sizes(parse_fractions(fractions, split_seed), 100);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config field 'split.fractions': ") + e.what());
    }
  }
}

RunConfig parse_run_config(const json& j, RunConfig c) {
  require_object(j, "",
                 {"name", "corpus_dir", "output_dir", "variant", "model", "train", "split", "partition_seed", "seeds",
                  "min_token_freq", "workers"});
  read(j, "name", "", c.name);
  read_path(j, "corpus_dir", c.corpus_dir);
  read_path(j, "output_dir", c.output_dir);
  read(j, "variant", "", c.variant);
  const bool parity = j.contains("train") && j["train"].is_object() && j["train"].value("parity_mode", false);
  if (parity) {
    c.model = ModelConfig::parity();
    const TrainConfig p = TrainConfig::parity();
    c.train.epochs = p.epochs;
    c.train.batch_size = p.batch_size;
    c.train.parity_mode = true;
  }
  if (j.contains("model")) c.model = parse_model(j["model"], c.model);
  if (j.contains("train")) c.train = parse_train(j["train"], c.train);
  if (j.contains("split")) {
    const json& s = j["split"];
    require_object(s, "split", {"fractions", "seed"});
    if (s.contains("fractions")) c.fractions = fractions_text(s["fractions"]);
    read(s, "seed", "split", c.split_seed);
  }
  read(j, "partition_seed", "", c.partition_seed);
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (!s.is_array()) throw ConfigError("config field 'seeds' must be an array of integers");
    c.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError("config field 'seeds' must hold nonnegative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  read(j, "min_token_freq", "", c.min_token_freq);
  read(j, "workers", "", c.workers);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  json train{{"epochs", t.epochs},
             {"batch_size", t.batch_size},
             {"noam_scale", t.noam_scale},
             {"warmup", t.warmup},
             {"patience", t.patience},
             {"eval_every", t.eval_every},
             {"parity_mode", t.parity_mode},
             {"update_all_weights", t.update_all_weights},
             {"verify_gating", t.verify_gating}};
  if (t.weights) {
    train["weights"] = {{"alpha_d", t.weights->alpha_d},
                        {"alpha_i", t.weights->alpha_i},
                        {"alpha_s", t.weights->alpha_s},
                        {"alpha_p", t.weights->alpha_p},
                        {"beta_d", t.weights->beta_d}};
  }
  return {{"name", c.name},
          {"corpus_dir", c.corpus_dir.string()},
          {"output_dir", c.output_dir.string()},
          {"variant", c.variant},
          {"model",
           {{"d_model", m.d_model},
            {"n_layers", m.n_layers},
            {"n_heads", m.n_heads},
            {"ffn_dim", m.ffn_dim},
            {"max_len", m.max_len},
            {"encoder_dropout", m.encoder_dropout},
            {"decoder_hidden", m.decoder_hidden},
            {"cnn_dim", m.cnn_dim},
            {"ic_dropout", m.ic_dropout},
            {"sf_dropout", m.sf_dropout},
            {"lang_dropout", m.lang_dropout}}},
          {"train", train},
          {"split", {{"fractions", c.fractions}, {"seed", c.split_seed}}},
          {"partition_seed", c.partition_seed},
          {"seeds", c.seeds},
          {"min_token_freq", c.min_token_freq},
          {"workers", c.workers}};
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("--seeds: '" + std::string(item) + "' is not a nonnegative integer");
    }
    seeds.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
    if (text.empty()) throw ConfigError("--seeds: trailing comma");
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty list");
  return seeds;
}

std::filesystem::path resolve_output_dir(const std::optional<std::string>& flag, const RunConfig& config) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("SLUADV_OUT"); env != nullptr && *env != '\0') return env;
  if (!config.output_dir.empty()) return config.output_dir;
  throw ConfigError("no output directory: pass --out, set SLUADV_OUT, or set 'output_dir' in the config");
}

}  // namespace sluadv::cli
