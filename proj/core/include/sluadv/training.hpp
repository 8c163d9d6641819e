#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sluadv/corpus.hpp"
#include "sluadv/evaluation.hpp"
#include "sluadv/model.hpp"

namespace sluadv {

struct TrainConfig {
  int epochs = 60;  // K, per task for adversarial training
  std::size_t batch_size = 16;
  double noam_scale = 0.1;
  int warmup = 400;
  std::optional<LossWeights> weights;  // unset: defaults for the language count
  int patience = 10;
  std::uint64_t seed = 1;
  int eval_every = 1;  // dev metrics every n-th dev evaluation; dev loss is always computed
  bool parity_mode = false;
  bool update_all_weights = false;  // literal reading: both tasks update every tensor
  bool verify_gating = false;       // snapshot-diff every epoch and throw on a gating violation
  std::filesystem::path log_path;        // JSON lines, one per epoch
  std::filesystem::path checkpoint_dir;  // best.ckpt rewritten at every dev improvement

  /// Batch 32, K = 180.
  static TrainConfig parity();
  void validate() const;
};

struct TaskCounters {
  int epochs_task1 = 0;
  int epochs_task2 = 0;
  std::int64_t global_step = 0;
};

struct EpochRecord {
  int epoch = 0;       // 1-based across the run
  int task = 0;        // 0 for standard training, 1 or 2 for adversarial
  int task_epoch = 0;  // 1-based within the task
  double train_loss = 0.0;
  std::map<std::string, double> components;  // L_i, L_s, L_p, L_d means
  std::optional<double> dev_loss;
  std::optional<LanguageMetrics> dev_metrics;  // averaged over languages
  double learning_rate = 0.0;
  std::int64_t global_step = 0;
  std::vector<std::string> changed_groups;  // filled when verify_gating is set
  bool improved = false;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  TaskCounters counters;
  int best_epoch = 0;  // EpochRecord::epoch of the restored parameters
  bool early_stopped = false;
};

std::string to_json_line(const EpochRecord& record);

/// Uniform over {1, 2}; an exhausted task redirects to the other one.
int pick_task(Rng& rng, const TaskCounters& counters, int k);

/// The task epoch (1-based) with minimal dev loss among records that carry one;
/// ties go to the earliest.
int select_checkpoint(const TrainLog& log);

/// Joint L = L_i + L_s with Adam and the Noam schedule; keeps the parameters
/// with minimal dev loss.
TrainLog train_standard(StandardModel& model, const Corpus& train, const Corpus& dev, const TrainConfig& config);

/// Alternates whole epochs of Task 1 (discriminator head on alpha_d L_d) and
/// Task 2 (everything else on L_2) until both reach K or Task 2 stops improving.
TrainLog train_adversarial(AdversarialModel& model, const Corpus& train, const Corpus& dev,
                           const TrainConfig& config);

TrainLog train_model(SluModel& model, const Corpus& train, const Corpus& dev, const TrainConfig& config);

}  // namespace sluadv
