#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sluadv/training.hpp"
#include "test_util.hpp"

namespace sluadv {
namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 32;
  c.cnn_dim = 16;
  return c;
}

TrainConfig quick_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.warmup = 20;
  t.noam_scale = 1.0;
  t.patience = 100;
  return t;
}

struct Data {
  Corpus train, dev;
  Vocabulary vocab;
};

Data bilingual(int groups = 60) {
  const DataSplits s = test::tiny_splits(groups);
  Data d;
  d.train = build_multilingual_split(s.train, parse_fractions("L1=0.5,L2=0.5", 1));
  d.dev = build_multilingual_split(s.dev, parse_fractions("L1=0.5,L2=0.5", 1));
  Corpus all;
  for (const ParallelCorpus* part : {&s.train, &s.dev}) {
    for (const auto& l : {"L1", "L2"}) {
      for (const auto& u : part->monolingual(l)) all.add(u);
    }
  }
  d.vocab = build_vocab(d.train, 1, &all);
  return d;
}

TEST(PickTask, ExhaustedTaskRedirects) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    ASSERT_EQ(pick_task(rng, {5, 3, 0}, 5), 2);
    ASSERT_EQ(pick_task(rng, {3, 5, 0}, 5), 1);
  }
  EXPECT_THROW(pick_task(rng, {5, 5, 0}, 5), std::logic_error);
}

TEST(PickTask, UniformWhenBothOpen) {
  Rng rng(2);
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += pick_task(rng, {0, 0, 0}, 5) == 1;
  EXPECT_GE(ones, 4700);
  EXPECT_LE(ones, 5300);
}

TrainLog log_with(const std::vector<double>& losses) {
  TrainLog log;
  int k = 0;
  for (double l : losses) {
    EpochRecord r;
    r.epoch = r.task_epoch = ++k;
    r.task = 2;
    r.dev_loss = l;
    log.records.push_back(r);
  }
  return log;
}

TEST(SelectCheckpoint, MinimalDevLossEarliestOnTies) {
  EXPECT_EQ(select_checkpoint(log_with({3.0, 2.1, 2.5})), 2);
  EXPECT_EQ(select_checkpoint(log_with({2.0, 2.0})), 1);
  EXPECT_EQ(select_checkpoint(log_with({4.0})), 1);
  EXPECT_THROW(select_checkpoint(TrainLog{}), std::invalid_argument);
}

TEST(SelectCheckpoint, IgnoresTask1Records) {
  TrainLog log = log_with({3.0, 1.0});
  EpochRecord t1;
  t1.task = 1;
  t1.task_epoch = 1;
  log.records.insert(log.records.begin(), t1);
  EXPECT_EQ(select_checkpoint(log), 2);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.epochs = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.patience = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  EXPECT_EQ(TrainConfig::parity().batch_size, 32u);
  EXPECT_EQ(TrainConfig::parity().epochs, 180);
  EXPECT_EQ(TrainConfig{}.epochs, 60);
  EXPECT_EQ(TrainConfig{}.patience, 10);
}

TEST(TrainStandard, SingleEpochContract) {
  const Data d = bilingual(20);
  StandardModel m(d.vocab, small_model(), 1);
  TrainConfig t = quick_train(1);
  t.patience = 1;
  const TrainLog log = train_standard(m, d.train, d.dev, t);
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_EQ(log.best_epoch, 1);
  EXPECT_TRUE(log.records[0].dev_loss.has_value());
  EXPECT_TRUE(std::isfinite(log.records[0].train_loss));
  EXPECT_EQ(log.counters.global_step, static_cast<std::int64_t>((d.train.size() + 7) / 8));
}

TEST(TrainStandard, RejectsEmptyCorpora) {
  const Data d = bilingual(20);
  StandardModel m(d.vocab, small_model(), 1);
  EXPECT_THROW(train_standard(m, Corpus{}, d.dev, quick_train(1)), std::invalid_argument);
  EXPECT_THROW(train_standard(m, d.train, Corpus{}, quick_train(1)), std::invalid_argument);
}

TEST(TrainStandard, DeterministicLogsAndParameters) {
  const Data d = bilingual(30);
  std::vector<std::string> lines[2];
  nn::Checkpoint ckpt[2];
  for (int run = 0; run < 2; ++run) {
    StandardModel m(d.vocab, small_model(), 7);
    TrainConfig t = quick_train(3);
    t.seed = 7;
    const TrainLog log = train_standard(m, d.train, d.dev, t);
    for (const auto& r : log.records) lines[run].push_back(to_json_line(r));
    ckpt[run] = capture_model(m, 0);
  }
  EXPECT_EQ(lines[0], lines[1]);
  EXPECT_EQ(nn::serialize_checkpoint(ckpt[0]), nn::serialize_checkpoint(ckpt[1]));
}

TEST(TrainStandard, OverfitsSeparableCorpus) {
  const ParallelCorpus p = generate_synthetic_parallel(50, {"L1", "L2"}, 5);
  const Corpus train = p.monolingual("L1");
  ModelConfig c = small_model();
  c.ic_dropout = 0.0;  // half of a 16-wide hidden layer is too much noise to memorise through
  StandardModel m(build_vocab(train, 1), c, 3);
  TrainConfig t = quick_train(30);
  t.patience = 30;
  train_standard(m, train, train, t);
  const auto metrics = evaluate_model(SluModel(std::move(m)), train);
  EXPECT_EQ(metrics.at("L1").ic_accuracy, 1.0);
}

TEST(TrainStandard, EarlyStoppingRestoresBestParameters) {
  const Data d = bilingual(30);
  StandardModel m(d.vocab, small_model(), 2);
  TrainConfig t = quick_train(40);
  t.patience = 2;
  t.noam_scale = 5.0;  // aggressive steps make dev loss stall quickly
  const TrainLog log = train_standard(m, d.train, d.dev, t);
  const int best = select_checkpoint(log);
  EXPECT_EQ(log.best_epoch, best);
  if (log.early_stopped) {
    EXPECT_EQ(static_cast<int>(log.records.size()), best + 2);
  }
  // The restored parameters reproduce the best dev loss.
  nn::Tape tape;
  const auto enc = encode(m.vocab(), d.dev);
  std::vector<const EncodedUtterance*> all;
  for (const auto& e : enc) all.push_back(&e);
  double total = 0.0;
  for (std::size_t start = 0; start < all.size(); start += 64) {
    const auto end = std::min(all.size(), start + 64);
    const EncodedBatch b = make_batch(std::span(all).subspan(start, end - start));
    nn::Tape tb;
    total += tb.scalar(m.joint_loss(tb, m.forward(tb, b, nullptr), b)) * static_cast<double>(b.batch_size);
  }
  EXPECT_NEAR(total / static_cast<double>(all.size()), *log.records[static_cast<std::size_t>(best - 1)].dev_loss,
              1e-9);
}

TEST(TrainStandard, NonFiniteParametersAbort) {
  const Data d = bilingual(20);
  StandardModel m(d.vocab, small_model(), 1);
  m.encoder().token_embeddings().value(2, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(train_standard(m, d.train, d.dev, quick_train(1)), nn::NumericError);
}

TEST(TrainStandard, WritesOneLogLinePerEpochAndCheckpoint) {
  const Data d = bilingual(20);
  StandardModel m(d.vocab, small_model(), 1);
  const auto dir = std::filesystem::temp_directory_path() / "sluadv_train_test";
  std::filesystem::remove_all(dir);
  TrainConfig t = quick_train(3);
  t.log_path = dir / "log.jsonl";
  t.checkpoint_dir = dir / "ckpt";
  const TrainLog log = train_standard(m, d.train, d.dev, t);
  std::ifstream in(t.log_path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), static_cast<int>(++n));
  }
  EXPECT_EQ(n, log.records.size());
  EXPECT_TRUE(std::filesystem::exists(t.checkpoint_dir / "best.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST(TrainAdversarial, RejectsSingleLanguage) {
  const Data d = bilingual(20);
  AdversarialModel m(d.vocab, small_model(), 1);
  EXPECT_THROW(train_adversarial(m, filter_language(d.train, "L1"), d.dev, quick_train(1)), std::invalid_argument);
}

TEST(TrainAdversarial, GatingAndEpochAccounting) {
  const Data d = bilingual(30);
  AdversarialModel m(d.vocab, small_model(), 4);
  TrainConfig t = quick_train(3);
  t.verify_gating = true;
  const TrainLog log = train_adversarial(m, d.train, d.dev, t);
  EXPECT_EQ(log.counters.epochs_task1, 3);
  EXPECT_EQ(log.counters.epochs_task2, 3);
  EXPECT_EQ(log.records.size(), 6u);
  for (const auto& r : log.records) {
    if (r.task == 1) {
      EXPECT_EQ(r.changed_groups, std::vector<std::string>{"discriminator"});
      EXPECT_FALSE(r.dev_loss.has_value());
    } else {
      EXPECT_EQ(r.changed_groups.size(), 8u);
      EXPECT_TRUE(std::find(r.changed_groups.begin(), r.changed_groups.end(), "discriminator") ==
                  r.changed_groups.end());
      EXPECT_TRUE(r.dev_loss.has_value());
    }
  }
}

TEST(TrainAdversarial, Task1StepLeavesEncoderBitIdentical) {
  const Data d = bilingual(20);
  AdversarialModel m(d.vocab, small_model(), 5);
  for (auto* flag : {&m.encoder().trainable, &m.language_encoder().trainable, &m.shared_encoder().trainable,
                     &m.predictor().trainable, &m.ic_decoder().trainable, &m.sf_decoder().trainable,
                     &m.specific_encoder(0).trainable, &m.specific_encoder(1).trainable}) {
    *flag = false;
  }
  const nn::Matrix encoder_before = m.encoder().token_embeddings().value;
  const nn::Matrix shared_before = m.shared_encoder().kernel().value;
  const nn::Matrix disc_before = m.discriminator().output_layer().weight.value;
  const auto enc = encode(m.vocab(), d.train);
  const EncodedBatch b = make_batch(std::span<const EncodedUtterance>(enc).first(8));
  auto groups = m.parameter_groups();
  nn::zero_grads(groups);
  nn::Tape tape;
  tape.backward(m.loss_task1(tape, m.forward_discriminator(tape, b, nullptr), b, LossWeights{}));
  nn::OptimizerState state;
  nn::adam_step(groups, state, 1e-3);
  EXPECT_EQ(m.encoder().token_embeddings().value, encoder_before);
  EXPECT_EQ(m.shared_encoder().kernel().value, shared_before);
  EXPECT_NE(m.discriminator().output_layer().weight.value, disc_before);
}

TEST(TrainAdversarial, LiteralReadingUpdatesEverything) {
  const Data d = bilingual(20);
  AdversarialModel m(d.vocab, small_model(), 6);
  TrainConfig t = quick_train(2);
  t.verify_gating = true;
  t.update_all_weights = true;
  const TrainLog log = train_adversarial(m, d.train, d.dev, t);
  for (const auto& r : log.records) {
    if (r.task == 2) {
      EXPECT_TRUE(std::find(r.changed_groups.begin(), r.changed_groups.end(), "discriminator") !=
                  r.changed_groups.end());
    }
  }
}

TEST(TrainAdversarial, PredictorLearnsLanguages) {
  const Data d = bilingual(80);
  for (std::uint64_t seed : {1, 2, 3}) {
    AdversarialModel m(d.vocab, small_model(), seed);
    TrainConfig t = quick_train(8);
    t.seed = seed;
    t.weights = LossWeights{1.0, 1.0, 1.0, 1.0, 0.2};
    train_adversarial(m, d.train, d.dev, t);
    const auto enc = encode(m.vocab(), d.dev);
    const EncodedBatch b = make_batch(std::span<const EncodedUtterance>(enc));
    nn::Tape tape;
    const auto out = m.forward(tape, b, nullptr);
    const nn::Matrix& logits = tape.value(out.predictor_logits);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index k = 0;
      logits.row(r).maxCoeff(&k);
      correct += static_cast<std::int32_t>(k) == b.languages[static_cast<std::size_t>(r)];
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(logits.rows()), 0.95) << "seed " << seed;
  }
}

TEST(TrainAdversarial, Deterministic) {
  const Data d = bilingual(20);
  std::vector<std::string> lines[2];
  for (int run = 0; run < 2; ++run) {
    AdversarialModel m(d.vocab, small_model(), 9);
    TrainConfig t = quick_train(2);
    t.seed = 9;
    for (const auto& r : train_adversarial(m, d.train, d.dev, t).records) lines[run].push_back(to_json_line(r));
  }
  EXPECT_EQ(lines[0], lines[1]);
}

}  // namespace
}  // namespace sluadv
