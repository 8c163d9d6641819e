#include "sluadv/training.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "sluadv/batch.hpp"

namespace sluadv {

using nn::Matrix;
using nn::Var;

namespace {

constexpr std::uint64_t kPickStream = 0x7069636b;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kDropoutStream = 0x64726f70;
constexpr std::size_t kDevBatch = 64;

using Components = std::map<std::string, double>;
/// Builds the loss of one batch and adds each component's value to `parts`.
using BatchLoss = std::function<Var(nn::Tape&, const EncodedBatch&, Rng*, Components& parts)>;
/// Dev loss plus the outputs it was computed from.
using DevLoss = std::function<std::pair<Var, ModelOutputs>(nn::Tape&, const EncodedBatch&)>;

struct EpochResult {
  double loss = 0.0;
  Components components;
  double learning_rate = 0.0;
};

struct DevResult {
  double loss = 0.0;
  std::optional<LanguageMetrics> metrics;
};

using Snapshot = std::vector<std::vector<Matrix>>;

Snapshot snapshot(const std::vector<nn::ParamGroup>& groups) {
  Snapshot s;
  for (const auto& g : groups) {
    auto& values = s.emplace_back();
    for (const auto& t : g.tensors) values.push_back(t.param->value);
  }
  return s;
}

struct Diff {
  std::vector<std::string> changed_groups;
  std::vector<std::string> changed_tensors;
  std::vector<std::string> unchanged_tensors;
};

Diff diff(const std::vector<nn::ParamGroup>& groups, const Snapshot& before) {
  Diff d;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    bool any = false;
    for (std::size_t t = 0; t < groups[g].tensors.size(); ++t) {
      const std::string name = groups[g].name + "/" + groups[g].tensors[t].name;
      if (groups[g].tensors[t].param->value != before[g][t]) {
        any = true;
        d.changed_tensors.push_back(name);
      } else {
        d.unchanged_tensors.push_back(name);
      }
    }
    if (any) d.changed_groups.push_back(groups[g].name);
  }
  return d;
}

bool is_discriminator(const std::string& tensor) { return tensor.rfind("discriminator/", 0) == 0; }

void check_gating(int task, const Diff& d) {
  for (const auto& name : d.changed_tensors) {
    if ((task == 1) != is_discriminator(name)) {
      throw std::logic_error("gating violation: task " + std::to_string(task) + " changed " + name);
    }
  }
  for (const auto& name : d.unchanged_tensors) {
    if ((task == 1) == is_discriminator(name)) {
      throw std::logic_error("gating violation: task " + std::to_string(task) + " left " + name + " unchanged");
    }
  }
}

std::vector<std::vector<const EncodedUtterance*>> shuffled_batches(const std::vector<EncodedUtterance>& data,
                                                                   std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::vector<const EncodedUtterance*>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    auto& b = batches.emplace_back();
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) b.push_back(&data[order[i]]);
  }
  return batches;
}

EpochResult run_epoch(std::vector<nn::ParamGroup> groups, const std::vector<EncodedUtterance>& data, Rng& shuffle_rng,
                      const TrainConfig& cfg, int d_model, nn::OptimizerState& state, TaskCounters& counters,
                      const BatchLoss& loss) {
  EpochResult r;
  double total = 0.0;
  for (const auto& items : shuffled_batches(data, cfg.batch_size, shuffle_rng)) {
    const EncodedBatch batch = make_batch(std::span<const EncodedUtterance* const>(items));
    Rng dropout(derive_seed(cfg.seed ^ kDropoutStream, static_cast<std::uint64_t>(counters.global_step)));
    nn::Tape tape;
    Components parts;
    Var l;
    try {
      l = loss(tape, batch, &dropout, parts);
    } catch (const nn::NumericError& e) {
      throw nn::NumericError("non-finite value at step " + std::to_string(counters.global_step + 1) + ": " +
                             e.what());
    }
    const double value = tape.scalar(l);
    if (!std::isfinite(value)) {
      throw nn::NumericError("non-finite loss at step " + std::to_string(counters.global_step + 1));
    }
    nn::zero_grads(groups);
    tape.backward(l);
    ++counters.global_step;
    r.learning_rate = nn::noam_lr(counters.global_step, d_model, cfg.warmup, cfg.noam_scale);
    nn::adam_step(groups, state, r.learning_rate);

    const auto n = static_cast<double>(batch.batch_size);
    r.loss += value * n;
    for (const auto& [k, v] : parts) r.components[k] += v * n;
    total += n;
  }
  r.loss /= total;
  for (auto& [_, v] : r.components) v /= total;
  return r;
}

DevResult evaluate_dev(const Vocabulary& vocab, const Corpus& dev, const std::vector<EncodedUtterance>& encoded,
                       const DevLoss& loss, bool with_metrics) {
  DevResult r;
  std::vector<DecodedUtterance> decoded;
  for (std::size_t start = 0; start < encoded.size(); start += kDevBatch) {
    const auto chunk = std::span(encoded).subspan(start, std::min(kDevBatch, encoded.size() - start));
    const EncodedBatch batch = make_batch(chunk);
    nn::Tape tape;
    const auto [l, out] = loss(tape, batch);
    r.loss += tape.scalar(l) * static_cast<double>(batch.batch_size);
    if (with_metrics) {
      for (auto& d : decode_outputs(tape, out, batch)) decoded.push_back(std::move(d));
    }
  }
  r.loss /= static_cast<double>(encoded.size());
  if (!std::isfinite(r.loss)) throw nn::NumericError("non-finite dev loss");
  if (with_metrics) r.metrics = averaged(evaluate_predictions(dev, to_predictions(vocab, decoded)));
  return r;
}

class LogWriter {
 public:
  explicit LogWriter(const std::filesystem::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open training log " + path.string());
  }
  void write(const EpochRecord& r) {
    if (out_.is_open()) out_ << to_json_line(r) << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

void check_inputs(const Corpus& train, const Corpus& dev, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("training corpus is empty");
  if (dev.empty()) throw std::invalid_argument("dev corpus is empty");
}

/// Tracks the best dev loss and the parameters that achieved it.
template <typename Model>
class BestKeeper {
 public:
  BestKeeper(Model& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  }

  bool offer(double dev_loss, int epoch, std::int64_t step) {
    if (best_ && dev_loss >= best_loss_) return false;
    best_loss_ = dev_loss;
    best_epoch_ = epoch;
    const auto groups = model_.parameter_groups();
    best_ = nn::capture(groups, model_.seed(), step);
    if (!cfg_.checkpoint_dir.empty()) {
      nn::write_checkpoint(cfg_.checkpoint_dir / "best.ckpt", capture_model(model_, step));
    }
    return true;
  }

  int restore() {
    if (best_) {
      const auto groups = model_.parameter_groups();
      nn::restore(groups, *best_);
    }
    return best_epoch_;
  }

 private:
  Model& model_;
  const TrainConfig& cfg_;
  std::optional<nn::Checkpoint> best_;
  double best_loss_ = 0.0;
  int best_epoch_ = 0;
};

nlohmann::json metrics_json(const LanguageMetrics& m) {
  return {{"semer", m.semer}, {"slot_f1", m.slot_f1}, {"ic_accuracy", m.ic_accuracy}};
}

}  // namespace

TrainConfig TrainConfig::parity() {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = 180;
  c.parity_mode = true;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("train config: eval_every must be >= 1");
  if (warmup < 1) throw std::invalid_argument("train config: warmup must be >= 1");
  if (!(noam_scale > 0.0)) throw std::invalid_argument("train config: noam_scale must be positive");
  if (weights) weights->validate();
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"task", r.task},
                   {"task_epoch", r.task_epoch},
                   {"train_loss", r.train_loss},
                   {"components", r.components},
                   {"learning_rate", r.learning_rate},
                   {"global_step", r.global_step},
                   {"improved", r.improved}};
  j["dev_loss"] = r.dev_loss ? nlohmann::json(*r.dev_loss) : nlohmann::json(nullptr);
  j["dev_metrics"] = r.dev_metrics ? metrics_json(*r.dev_metrics) : nlohmann::json(nullptr);
  if (!r.changed_groups.empty()) j["changed_groups"] = r.changed_groups;
  return j.dump();
}

int pick_task(Rng& rng, const TaskCounters& counters, int k) {
  if (counters.epochs_task1 >= k && counters.epochs_task2 >= k) {
    throw std::logic_error("pick_task: both tasks exhausted");
  }
  const int drawn = uniform_index(rng, 2) == 0 ? 1 : 2;
  if (drawn == 1 && counters.epochs_task1 >= k) return 2;
  if (drawn == 2 && counters.epochs_task2 >= k) return 1;
  return drawn;
}

int select_checkpoint(const TrainLog& log) {
  const EpochRecord* best = nullptr;
  for (const auto& r : log.records) {
    if (!r.dev_loss) continue;
    if (best == nullptr || *r.dev_loss < *best->dev_loss) best = &r;
  }
  if (best == nullptr) throw std::invalid_argument("select_checkpoint: no epoch with a dev loss");
  return best->task_epoch;
}

TrainLog train_standard(StandardModel& model, const Corpus& train, const Corpus& dev, const TrainConfig& cfg) {
  check_inputs(train, dev, cfg);
  const Vocabulary& vocab = model.vocab();
  const auto train_data = encode(vocab, train);
  const auto dev_data = encode(vocab, dev);

  model.encoder().trainable = model.ic_decoder().trainable = model.sf_decoder().trainable = true;
  const BatchLoss loss = [&](nn::Tape& tape, const EncodedBatch& batch, Rng* drop, Components& parts) {
    const ModelOutputs out = model.forward(tape, batch, drop);
    const Var li = model.intent_loss(tape, out, batch);
    const Var ls = model.slot_loss(tape, out, batch);
    parts["L_i"] = tape.scalar(li);
    parts["L_s"] = tape.scalar(ls);
    return nn::add(tape, li, ls);
  };
  const DevLoss dev_loss = [&](nn::Tape& tape, const EncodedBatch& batch) {
    const ModelOutputs out = model.forward(tape, batch, nullptr);
    return std::pair{model.joint_loss(tape, out, batch), out};
  };

  TrainLog log;
  LogWriter writer(cfg.log_path);
  BestKeeper keeper(model, cfg);
  nn::OptimizerState state;
  Rng shuffle_rng(derive_seed(cfg.seed ^ kShuffleStream, 0));
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto groups = model.parameter_groups();
    Snapshot before;
    if (cfg.verify_gating) before = snapshot(groups);
    const EpochResult er =
        run_epoch(groups, train_data, shuffle_rng, cfg, model.config().d_model, state, log.counters, loss);
    ++log.counters.epochs_task2;

    EpochRecord rec;
    rec.epoch = rec.task_epoch = epoch;
    rec.train_loss = er.loss;
    rec.components = er.components;
    rec.learning_rate = er.learning_rate;
    rec.global_step = log.counters.global_step;
    if (cfg.verify_gating) rec.changed_groups = diff(groups, before).changed_groups;
    const DevResult dr = evaluate_dev(vocab, dev, dev_data, dev_loss, epoch % cfg.eval_every == 0);
    rec.dev_loss = dr.loss;
    rec.dev_metrics = dr.metrics;
    rec.improved = keeper.offer(dr.loss, epoch, log.counters.global_step);
    writer.write(rec);
    log.records.push_back(std::move(rec));
    stale = log.records.back().improved ? 0 : stale + 1;
    if (stale >= cfg.patience) {
      log.early_stopped = true;
      break;
    }
  }
  log.best_epoch = keeper.restore();
  return log;
}

TrainLog train_adversarial(AdversarialModel& model, const Corpus& train, const Corpus& dev,
                           const TrainConfig& cfg) {
  check_inputs(train, dev, cfg);
  if (train.languages().size() < 2) {
    throw std::invalid_argument("adversarial training needs at least 2 languages, got " +
                                std::to_string(train.languages().size()));
  }
  const Vocabulary& vocab = model.vocab();
  const auto train_data = encode(vocab, train);
  const auto dev_data = encode(vocab, dev);
  const LossWeights w = cfg.weights.value_or(LossWeights::defaults_for(model.language_count()));
  w.validate();

  const auto gate = [&](int task) {
    const bool rest = cfg.update_all_weights || task == 2;
    const bool disc = cfg.update_all_weights || task == 1;
    model.encoder().trainable = rest;
    for (std::size_t l = 0; l < model.language_count(); ++l) model.specific_encoder(l).trainable = rest;
    model.language_encoder().trainable = rest;
    model.shared_encoder().trainable = rest;
    model.predictor().trainable = rest;
    model.ic_decoder().trainable = rest;
    model.sf_decoder().trainable = rest;
    model.discriminator().trainable = disc;
  };

  const BatchLoss task1 = [&](nn::Tape& tape, const EncodedBatch& batch, Rng* drop, Components& parts) {
    const ModelOutputs out = model.forward_discriminator(tape, batch, drop);
    const Var ld = model.discriminator_loss(tape, out, batch);
    parts["L_d"] = tape.scalar(ld);
    return nn::scale(tape, ld, w.alpha_d);
  };
  const auto task2_terms = [&](nn::Tape& tape, const ModelOutputs& out, const EncodedBatch& batch,
                               Components* parts) {
    const Var li = model.intent_loss(tape, out, batch);
    const Var ls = model.slot_loss(tape, out, batch);
    const Var lp = model.predictor_loss(tape, out, batch);
    const Var ld = model.discriminator_loss(tape, out, batch);
    if (parts) {
      (*parts)["L_i"] = tape.scalar(li);
      (*parts)["L_s"] = tape.scalar(ls);
      (*parts)["L_p"] = tape.scalar(lp);
      (*parts)["L_d"] = tape.scalar(ld);
    }
    return nn::weighted_sum(tape, {{w.alpha_i, li}, {w.alpha_s, ls}, {w.alpha_p, lp}, {-w.beta_d, ld}});
  };
  const BatchLoss task2 = [&](nn::Tape& tape, const EncodedBatch& batch, Rng* drop, Components& parts) {
    const ModelOutputs out = model.forward(tape, batch, drop);
    return task2_terms(tape, out, batch, &parts);
  };
  const DevLoss dev_loss = [&](nn::Tape& tape, const EncodedBatch& batch) {
    const ModelOutputs out = model.forward(tape, batch, nullptr);
    return std::pair{task2_terms(tape, out, batch, nullptr), out};
  };

  TrainLog log;
  LogWriter writer(cfg.log_path);
  BestKeeper keeper(model, cfg);
  nn::OptimizerState state;
  Rng pick_rng(derive_seed(cfg.seed ^ kPickStream, 0));
  Rng shuffle1(derive_seed(cfg.seed ^ kShuffleStream, 1));
  Rng shuffle2(derive_seed(cfg.seed ^ kShuffleStream, 2));
  TaskCounters& c = log.counters;
  int stale = 0;
  int dev_evals = 0;
  while (c.epochs_task1 < cfg.epochs || c.epochs_task2 < cfg.epochs) {
    const int task = pick_task(pick_rng, c, cfg.epochs);
    gate(task);
    const auto groups = model.parameter_groups();
    Snapshot before;
    if (cfg.verify_gating) before = snapshot(groups);
    const EpochResult er = run_epoch(groups, train_data, task == 1 ? shuffle1 : shuffle2, cfg,
                                     model.config().d_model, state, c, task == 1 ? task1 : task2);

    EpochRecord rec;
    rec.epoch = static_cast<int>(log.records.size()) + 1;
    rec.task = task;
    rec.task_epoch = task == 1 ? ++c.epochs_task1 : ++c.epochs_task2;
    rec.train_loss = er.loss;
    rec.components = er.components;
    rec.learning_rate = er.learning_rate;
    rec.global_step = c.global_step;
    if (cfg.verify_gating) {
      const Diff d = diff(groups, before);
      rec.changed_groups = d.changed_groups;
      if (!cfg.update_all_weights) check_gating(task, d);
    }
    if (task == 2) {
      const DevResult dr = evaluate_dev(vocab, dev, dev_data, dev_loss, ++dev_evals % cfg.eval_every == 0);
      rec.dev_loss = dr.loss;
      rec.dev_metrics = dr.metrics;
      rec.improved = keeper.offer(dr.loss, rec.epoch, c.global_step);
      stale = rec.improved ? 0 : stale + 1;
    }
    writer.write(rec);
    log.records.push_back(std::move(rec));
    if (stale >= cfg.patience) {
      log.early_stopped = true;
      break;
    }
  }
  gate(2);
  model.discriminator().trainable = true;
  log.best_epoch = keeper.restore();
  return log;
}

TrainLog train_model(SluModel& model, const Corpus& train, const Corpus& dev, const TrainConfig& config) {
  return std::visit(
      [&](auto& m) -> TrainLog {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, StandardModel>) {
          return train_standard(m, train, dev, config);
        } else {
          return train_adversarial(m, train, dev, config);
        }
      },
      model);
}

}  // namespace sluadv
