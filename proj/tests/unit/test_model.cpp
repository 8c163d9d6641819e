#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sluadv/grad_check.hpp"
#include "sluadv/model.hpp"
#include "test_util.hpp"

namespace sluadv {
namespace {

using nn::Matrix;
using nn::Tape;
using nn::Var;
using test::random_matrix;
using test::utt;

ModelConfig micro_config() {
  ModelConfig c;
  c.d_model = 4;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_dim = 6;
  c.max_len = 8;
  c.decoder_hidden = 5;
  c.cnn_dim = 3;
  return c;
}

Corpus micro_corpus() {
  Corpus c;
  c.add(utt("1", "L1", "city", {"where", "is", "mco"}, {"O", "O", "B-code"}));
  c.add(utt("2", "L2", "flight", {"fly", "mco"}, {"O", "B-code"}));
  c.add(utt("3", "L1", "flight", {"fly", "to", "bos"}, {"O", "O", "B-city"}));
  return c;
}

struct Fixture {
  Vocabulary vocab;
  std::vector<EncodedUtterance> encoded;
  EncodedBatch batch;

  explicit Fixture(std::size_t n = 2) {
    const Corpus c = micro_corpus();
    vocab = build_vocab(c, 1);
    encoded = encode(vocab, c);
    encoded.resize(n);
    batch = make_batch(std::span<const EncodedUtterance>(encoded));
  }
};

TEST(StandardModel, DeterministicEvalForward) {
  Fixture f;
  StandardModel m(f.vocab, micro_config(), 3);
  Tape a, b;
  const auto oa = m.forward(a, f.batch, nullptr);
  const auto ob = m.forward(b, f.batch, nullptr);
  EXPECT_EQ(a.value(oa.intent_logits), b.value(ob.intent_logits));
  EXPECT_EQ(a.value(oa.emissions), b.value(ob.emissions));
  StandardModel same(f.vocab, micro_config(), 3);
  Tape c;
  EXPECT_EQ(c.value(same.forward(c, f.batch, nullptr).intent_logits), a.value(oa.intent_logits));
}

TEST(StandardModel, JointLossIsSumOfTerms) {
  Fixture f;
  StandardModel m(f.vocab, micro_config(), 4);
  Tape t;
  const auto out = m.forward(t, f.batch, nullptr);
  const double li = t.scalar(m.intent_loss(t, out, f.batch));
  const double ls = t.scalar(m.slot_loss(t, out, f.batch));
  EXPECT_EQ(t.scalar(m.joint_loss(t, out, f.batch)), li + ls);
}

TEST(StandardModel, FullGradientCheck) {
  Fixture f;
  StandardModel m(f.vocab, micro_config(), 5);
  const auto loss = [&](Tape& t) { return m.joint_loss(t, m.forward(t, f.batch, nullptr), f.batch); };
  const auto groups = m.parameter_groups();
  const auto report = nn::grad_check(loss, groups);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_entry;
  EXPECT_GT(report.entries_checked, 100u);
}

TEST(StandardModel, GroupsAndDecode) {
  Fixture f(3);
  StandardModel m(f.vocab, micro_config(), 6);
  const auto groups = m.parameter_groups();
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].name, "encoder");
  EXPECT_EQ(groups[1].name, "ic_decoder");
  EXPECT_EQ(groups[2].name, "sf_decoder");
  m.encoder().trainable = false;
  EXPECT_FALSE(m.parameter_groups()[0].trainable);
  const auto decoded = m.decode(f.batch);
  ASSERT_EQ(decoded.size(), 3u);
  EXPECT_EQ(decoded[1].slots.size(), 2u);
  EXPECT_EQ(decoded[0].slots.size(), 3u);
}

TEST(Combine, OneHotSelectsEncoderExactly) {
  Rng rng(7);
  const std::size_t max_len = 3, batch = 2;
  for (std::size_t k = 0; k < 3; ++k) {
    Tape t;
    std::vector<EncoderOutput> per;
    for (int l = 0; l < 3; ++l) {
      per.push_back({t.constant(random_matrix(6, 4, rng)), t.constant(random_matrix(2, 4, rng))});
    }
    const EncoderOutput shared{t.constant(random_matrix(6, 4, rng)), t.constant(random_matrix(2, 4, rng))};
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(batch), 3);
    p.col(static_cast<Eigen::Index>(k)).setOnes();
    const auto c = combine_representations(t, per, t.constant(p), shared, max_len);
    ASSERT_EQ(t.value(c.tokens).cols(), 8);
    EXPECT_EQ(Matrix(t.value(c.tokens).leftCols(4)), t.value(per[k].token_reps));
    EXPECT_EQ(Matrix(t.value(c.tokens).rightCols(4)), t.value(shared.token_reps));
    EXPECT_EQ(Matrix(t.value(c.sentence).leftCols(4)), t.value(per[k].sentence_rep));
    EXPECT_EQ(Matrix(t.value(c.sentence).rightCols(4)), t.value(shared.sentence_rep));
  }
}

TEST(Combine, OppositeOutputsCancelUnderUniformWeights) {
  Rng rng(8);
  Tape t;
  const Matrix x = random_matrix(3, 2, rng);
  const Matrix s = random_matrix(1, 2, rng);
  const std::vector<EncoderOutput> per{{t.constant(x), t.constant(s)}, {t.constant(-x), t.constant(-s)}};
  const EncoderOutput shared{t.constant(Matrix::Zero(3, 2)), t.constant(Matrix::Zero(1, 2))};
  const auto c = combine_representations(t, per, t.constant(Matrix::Constant(1, 2, 0.5)), shared, 3);
  EXPECT_TRUE(t.value(c.tokens).isZero(0.0));
  EXPECT_TRUE(t.value(c.sentence).isZero(0.0));
}

TEST(Combine, ConvexBoundsHold) {
  Rng rng(9);
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = 2 + uniform_index(rng, 2);
    Tape t;
    std::vector<EncoderOutput> per;
    for (std::size_t l = 0; l < n; ++l) {
      per.push_back({t.constant(random_matrix(4, 3, rng, -5, 5)), t.constant(random_matrix(2, 3, rng, -5, 5))});
    }
    const EncoderOutput shared{t.constant(random_matrix(4, 3, rng)), t.constant(random_matrix(2, 3, rng))};
    const Matrix p = nn::softmax_rows(random_matrix(2, static_cast<Eigen::Index>(n), rng, -4, 4));
    const auto c = combine_representations(t, per, t.constant(p), shared, 2);
    const Matrix h = t.value(c.tokens).leftCols(3);
    for (Eigen::Index r = 0; r < 4; ++r) {
      for (Eigen::Index j = 0; j < 3; ++j) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& e : per) {
          lo = std::min(lo, t.value(e.token_reps)(r, j));
          hi = std::max(hi, t.value(e.token_reps)(r, j));
        }
        ASSERT_GE(h(r, j), lo - 1e-12);
        ASSERT_LE(h(r, j), hi + 1e-12);
      }
    }
  }
}

TEST(AdversarialModel, ZeroedSharedEncoderHalvesSupport) {
  Fixture f;
  AdversarialModel m(f.vocab, micro_config(), 10);
  m.shared_encoder().kernel().value.setZero();
  m.shared_encoder().bias().value.setZero();
  Tape t;
  const auto bert = m.encoder().forward(t, f.batch.tokens, {f.batch.mask, f.batch.max_len}, nullptr);
  const nn::SequenceMask mask{f.batch.mask, f.batch.max_len};
  std::vector<EncoderOutput> per;
  for (std::size_t l = 0; l < m.language_count(); ++l) per.push_back(m.specific_encoder(l).forward(t, bert.token_reps, mask));
  const auto shared = m.shared_encoder().forward(t, bert.token_reps, mask);
  const Matrix p = Matrix::Constant(2, 2, 0.5);
  const auto c = combine_representations(t, per, t.constant(p), shared, f.batch.max_len);
  EXPECT_TRUE(t.value(c.tokens).rightCols(3).isZero(0.0));
  EXPECT_TRUE(t.value(c.sentence).rightCols(3).isZero(0.0));
  EXPECT_EQ(t.value(c.tokens).cols(), 2 * 3);
}

TEST(AdversarialModel, LanguageDistributionsSumToOne) {
  Fixture f(3);
  AdversarialModel m(f.vocab, micro_config(), 11);
  Tape t;
  const auto out = m.forward(t, f.batch, nullptr);
  for (Var v : {out.predictor_logits, out.discriminator_logits, out.intent_logits}) {
    const Matrix p = nn::softmax_rows(t.value(v));
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
  }
  EXPECT_EQ(m.encoder_count(), m.language_count() + 3);
  EXPECT_EQ(m.language_count(), 2u);
}

TEST(AdversarialModel, DiscriminatorShortcutMatchesFullForward) {
  Fixture f(3);
  AdversarialModel m(f.vocab, micro_config(), 12);
  Tape a, b;
  const auto full = m.forward(a, f.batch, nullptr);
  const auto shortcut = m.forward_discriminator(b, f.batch, nullptr);
  EXPECT_EQ(a.value(full.discriminator_logits), b.value(shortcut.discriminator_logits));
}

TEST(AdversarialModel, Task1Loss) {
  Fixture f(3);
  AdversarialModel m(f.vocab, micro_config(), 13);
  Tape t;
  const auto out = m.forward(t, f.batch, nullptr);
  LossWeights w;
  w.alpha_d = 0.0;
  EXPECT_EQ(t.scalar(m.loss_task1(t, out, f.batch, w)), 0.0);
  w.alpha_d = 2.0;
  EXPECT_NEAR(t.scalar(m.loss_task1(t, out, f.batch, w)), 2.0 * t.scalar(m.discriminator_loss(t, out, f.batch)),
              1e-15);

  // Uniform discriminator: alpha_d * log N.
  m.discriminator().output_layer().weight.value.setZero();
  m.discriminator().output_layer().bias.value.setZero();
  Tape u;
  const auto uniform = m.forward(u, f.batch, nullptr);
  EXPECT_NEAR(u.scalar(m.loss_task1(u, uniform, f.batch, w)), 2.0 * std::log(2.0), 1e-12);

  // p^D = [0.9, 0.1] for the true language 0.
  Tape v;
  Matrix logits(1, 2);
  logits << std::log(0.9), std::log(0.1);
  EXPECT_NEAR(v.scalar(nn::cross_entropy(v, v.constant(logits), std::vector<std::int32_t>{0})), 0.1054, 1e-4);
}

TEST(AdversarialModel, Task2LossAssembly) {
  Fixture f(3);
  AdversarialModel m(f.vocab, micro_config(), 14);
  Tape t;
  const auto out = m.forward(t, f.batch, nullptr);
  EXPECT_EQ(t.scalar(m.loss_task2(t, out, f.batch, {0, 0, 0, 0, 0})), 0.0);
  const double li = t.scalar(m.intent_loss(t, out, f.batch));
  const double ls = t.scalar(m.slot_loss(t, out, f.batch));
  const double lp = t.scalar(m.predictor_loss(t, out, f.batch));
  const double ld = t.scalar(m.discriminator_loss(t, out, f.batch));
  const LossWeights tri = LossWeights::defaults_for(3);
  EXPECT_NEAR(t.scalar(m.loss_task2(t, out, f.batch, tri)), li + ls + lp - 0.2 * ld, 1e-12);
  const LossWeights w{0.3, 0.7, 1.3, 0.4, 0.9};
  EXPECT_NEAR(t.scalar(m.loss_task2(t, out, f.batch, w)), 0.7 * li + 1.3 * ls + 0.4 * lp - 0.9 * ld, 1e-12);
}

TEST(AdversarialModel, DefaultWeightsFollowLanguageCount) {
  const LossWeights bi = LossWeights::defaults_for(2);
  EXPECT_EQ(bi.alpha_s, 0.5);
  EXPECT_EQ(bi.alpha_p, 0.5);
  EXPECT_EQ(bi.beta_d, 0.2);
  const LossWeights tri = LossWeights::defaults_for(3);
  EXPECT_EQ(tri.alpha_d, 1.0);
  EXPECT_EQ(tri.alpha_i, 1.0);
  EXPECT_EQ(tri.alpha_s, 1.0);
  EXPECT_EQ(tri.alpha_p, 1.0);
  EXPECT_EQ(tri.beta_d, 0.2);
  EXPECT_THROW((LossWeights{-1, 1, 1, 1, 0.2}.validate()), std::invalid_argument);
}

TEST(AdversarialModel, FullTask2GradientCheck) {
  Fixture f;
  AdversarialModel m(f.vocab, micro_config(), 15);
  const LossWeights w = LossWeights::defaults_for(2);
  const auto loss = [&](Tape& t) { return m.loss_task2(t, m.forward(t, f.batch, nullptr), f.batch, w); };
  auto groups = m.parameter_groups();
  // The discriminator feeds L_2 too; check every tensor.
  for (auto& g : groups) g.trainable = true;
  const auto report = nn::grad_check(loss, groups);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_entry;
}

TEST(AdversarialModel, GroupsAndCensus) {
  Fixture f;
  AdversarialModel m(f.vocab, micro_config(), 16);
  std::vector<std::string> names;
  for (const auto& g : m.parameter_groups()) names.push_back(g.name);
  EXPECT_EQ(names, (std::vector<std::string>{"encoder", "enc.L1", "enc.L2", "enc_lang", "enc_shared", "predictor",
                                             "discriminator", "ic_decoder", "sf_decoder"}));
  EXPECT_EQ(m.ic_decoder().input_dim(), 2 * micro_config().cnn_dim);
  EXPECT_EQ(m.sf_decoder().input_dim(), 2 * micro_config().cnn_dim);
}

TEST(AdversarialModel, ZeroAdversarialWeightsLeaveJointLossOverMixedFeatures) {
  Fixture f(3);
  AdversarialModel m(f.vocab, micro_config(), 17);
  Tape t;
  const auto out = m.forward(t, f.batch, nullptr);
  const double l2 = t.scalar(m.loss_task2(t, out, f.batch, LossWeights{0, 1, 1, 0, 0}));
  const double expected = t.scalar(m.intent_loss(t, out, f.batch)) + t.scalar(m.slot_loss(t, out, f.batch));
  EXPECT_NEAR(l2, expected, 1e-12);

  // The decoders read the concatenation of the mixed specific features and the shared features.
  Tape s;
  const nn::SequenceMask mask{f.batch.mask, f.batch.max_len};
  const auto bert = m.encoder().forward(s, f.batch.tokens, mask, nullptr);
  const auto shared = m.shared_encoder().forward(s, bert.token_reps, mask);
  EXPECT_EQ(s.value(shared.token_reps).cols() * 2, m.ic_decoder().input_dim());
}

TEST(AdversarialModel, SingleLanguageHeadsAreDegenerate) {
  Corpus c;
  c.add(utt("1", "L1", "city", {"where", "is", "mco"}, {"O", "O", "B-code"}));
  c.add(utt("2", "L1", "flight", {"fly", "mco"}, {"O", "B-code"}));
  const Vocabulary vocab = build_vocab(c, 1);
  const auto enc = encode(vocab, c);
  const EncodedBatch batch = make_batch(std::span<const EncodedUtterance>(enc));
  AdversarialModel m(vocab, micro_config(), 17);
  Tape t;
  const auto out = m.forward(t, batch, nullptr);
  EXPECT_THROW(m.predictor_loss(t, out, batch), std::invalid_argument);
}

TEST(Models, CheckpointRoundTripPreservesPredictions) {
  Fixture f(3);
  const auto path = std::filesystem::temp_directory_path() / "sluadv_model_test.ckpt";
  for (ModelVariant v : {ModelVariant::standard, ModelVariant::adversarial}) {
    SluModel model = make_model(v, f.vocab, micro_config(), 18);
    save_model(path, model, 9);
    const SluModel loaded = load_model(path);
    EXPECT_EQ(model.index(), loaded.index());
    EXPECT_EQ(model_vocab(loaded), f.vocab);
    const auto a = predict(model, f.encoded);
    const auto b = predict(loaded, f.encoded);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].intent, b[i].intent);
      EXPECT_EQ(a[i].slots, b[i].slots);
    }
  }
  std::filesystem::remove(path);
}

TEST(Models, VariantNames) {
  EXPECT_EQ(parse_variant("standard-mono"), ModelVariant::standard);
  EXPECT_EQ(parse_variant("standard-multi"), ModelVariant::standard);
  EXPECT_EQ(parse_variant("adversarial"), ModelVariant::adversarial);
  EXPECT_THROW(parse_variant("gru"), std::invalid_argument);
  EXPECT_EQ(to_string(ModelVariant::adversarial), "adversarial");
}

TEST(Models, PredictBatchesAreConsistent) {
  Fixture f(3);
  const SluModel model = make_model(ModelVariant::adversarial, f.vocab, micro_config(), 19);
  const auto whole = predict(model, f.encoded, 64);
  const auto single = predict(model, f.encoded, 1);
  for (std::size_t i = 0; i < whole.size(); ++i) {
    EXPECT_EQ(whole[i].intent, single[i].intent);
    EXPECT_EQ(whole[i].slots, single[i].slots);
  }
}

}  // namespace
}  // namespace sluadv
