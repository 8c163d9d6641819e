#include <gtest/gtest.h>

#include <cmath>

#include "sluadv/crf.hpp"
#include "sluadv/decoders.hpp"
#include "sluadv/grad_check.hpp"
#include "test_util.hpp"

namespace sluadv {
namespace {

using nn::Matrix;
using nn::Tape;
using nn::Var;
using test::prefix_mask;
using test::random_matrix;
using test::readout;

std::vector<std::uint8_t> full_mask(std::size_t t) { return std::vector<std::uint8_t>(t, 1); }

TEST(Crf, HandEnumeratedInstance) {
  Matrix e(2, 2);
  e << 1, 0, 0, 1;
  const Matrix a = Matrix::Zero(4, 4);
  const auto mask = full_mask(2);
  const double log_z = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.0) + std::exp(1.0));
  EXPECT_NEAR(nn::crf_log_partition(e, a, mask), log_z, 1e-12);
  EXPECT_NEAR(log_z, 2.6265, 1e-4);
  const std::vector<std::int32_t> y{0, 1};
  EXPECT_NEAR(nn::crf_neg_log_likelihood(e, a, y, mask), log_z - 2.0, 1e-12);
  EXPECT_EQ(nn::crf_viterbi(e, a, mask), y);
  EXPECT_NEAR(nn::crf_path_score(e, a, y, mask), 2.0, 1e-15);
}

TEST(Crf, SingleLabelHasZeroLoss) {
  Rng rng(1);
  const Matrix e = random_matrix(4, 1, rng, -3, 3);
  const Matrix a = random_matrix(3, 3, rng, -3, 3);
  const std::vector<std::int32_t> y(4, 0);
  EXPECT_NEAR(nn::crf_neg_log_likelihood(e, a, y, full_mask(4)), 0.0, 1e-12);
}

TEST(Crf, SingleStepViterbi) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix e = random_matrix(1, 4, rng, -3, 3);
    const Matrix a = random_matrix(6, 6, rng, -3, 3);
    Eigen::Index best = 0;
    (e.row(0) + a.row(nn::crf_start(4)).head(4) + a.col(nn::crf_end(4)).head(4).transpose()).maxCoeff(&best);
    ASSERT_EQ(nn::crf_viterbi(e, a, full_mask(1)), std::vector<std::int32_t>{static_cast<std::int32_t>(best)});
  }
}

TEST(Crf, ZeroTransitionsDecodePerPosition) {
  Rng rng(3);
  const Matrix e = random_matrix(5, 3, rng, -3, 3);
  std::vector<std::int32_t> expected;
  for (Eigen::Index t = 0; t < 5; ++t) {
    Eigen::Index j = 0;
    e.row(t).maxCoeff(&j);
    expected.push_back(static_cast<std::int32_t>(j));
  }
  EXPECT_EQ(nn::crf_viterbi(e, Matrix::Zero(5, 5), full_mask(5)), expected);
}

TEST(Crf, TiesGoToLowerLabel) {
  EXPECT_EQ(nn::crf_viterbi(Matrix::Zero(3, 3), Matrix::Zero(5, 5), full_mask(3)), (std::vector<std::int32_t>{0, 0, 0}));
}

TEST(Crf, EmptyMaskAndOversizedEnumerationAreRejected) {
  const Matrix e = Matrix::Zero(2, 2);
  const Matrix a = Matrix::Zero(4, 4);
  const std::vector<std::uint8_t> none(2, 0);
  EXPECT_THROW(nn::crf_log_partition(e, a, none), std::invalid_argument);
  EXPECT_THROW(nn::crf_viterbi(e, a, none), std::invalid_argument);
  EXPECT_THROW(nn::crf_brute_force(e, a, none), std::invalid_argument);
  EXPECT_THROW(nn::crf_brute_force(Matrix::Zero(11, 4), Matrix::Zero(6, 6), full_mask(11)), std::invalid_argument);
}

TEST(Crf, MatchesBruteForceOnRandomInstances) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = 1 + uniform_index(rng, 5);
    const auto l = 1 + uniform_index(rng, 4);
    const auto ti = static_cast<Eigen::Index>(t), li = static_cast<Eigen::Index>(l);
    const Matrix e = random_matrix(ti, li, rng, -3, 3);
    const Matrix a = random_matrix(li + 2, li + 2, rng, -3, 3);
    // Padding beyond a random valid prefix must be ignored.
    auto mask = full_mask(t);
    const auto valid = 1 + uniform_index(rng, t);
    for (std::size_t k = valid; k < t; ++k) mask[k] = 0;
    const auto brute = nn::crf_brute_force(e, a, mask);
    ASSERT_NEAR(nn::crf_log_partition(e, a, mask), brute.log_partition, 1e-9);
    auto path = nn::crf_viterbi(e, a, mask);
    ASSERT_EQ(path, brute.best);

    // exp(-NLL) over all paths of the valid prefix sums to one.
    double total = 0.0;
    std::vector<std::int32_t> y(t, 0);
    std::size_t paths = 1;
    for (std::size_t k = 0; k < valid; ++k) paths *= l;
    for (std::size_t code = 0; code < paths; ++code) {
      std::size_t c = code;
      for (std::size_t k = 0; k < valid; ++k, c /= l) y[k] = static_cast<std::int32_t>(c % l);
      const double nll = nn::crf_neg_log_likelihood(e, a, y, mask);
      ASSERT_GE(nll, -1e-12);
      total += std::exp(-nll);
    }
    ASSERT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Crf, BatchedNllAveragesItemsAndHasCorrectGradients) {
  Rng rng(5);
  const std::size_t max_len = 3, labels = 3;
  const auto mask = prefix_mask({3, 2}, max_len);
  const nn::SequenceMask m{mask, max_len};
  nn::Parameter e(random_matrix(6, 3, rng, -2, 2)), a(random_matrix(5, 5, rng, -2, 2));
  const std::vector<std::int32_t> y{0, 2, 1, 1, 0, 0};
  Tape tape;
  const double batched = tape.scalar(nn::crf_nll(tape, tape.parameter(e, true), tape.parameter(a, true), y, m));
  const double first = nn::crf_neg_log_likelihood(e.value.topRows(3), a.value, std::span(y).first(3), full_mask(3));
  const std::vector<std::uint8_t> second_mask{1, 1, 0};
  const double second = nn::crf_neg_log_likelihood(e.value.bottomRows(3), a.value, std::span(y).last(3), second_mask);
  EXPECT_NEAR(batched, (first + second) / 2.0, 1e-12);

  const auto loss = [&](Tape& t) { return nn::crf_nll(t, t.parameter(e, true), t.parameter(a, true), y, m); };
  const std::vector<nn::NamedParameter> params{{"emissions", &e}, {"transitions", &a}};
  EXPECT_LT(nn::grad_check(loss, params).max_relative_error, 1e-6);

  const auto decoded = nn::crf_decode_batch(e.value, a.value, m);
  ASSERT_EQ(decoded.size(), 2u);
  EXPECT_EQ(decoded[1].size(), 2u);
  EXPECT_EQ(decoded[0], nn::crf_viterbi(e.value.topRows(3), a.value, full_mask(3)));
  (void)labels;
}

TEST(IcDecoder, ZeroProjectionIsUniform) {
  Rng rng(6);
  IcDecoder ic(4, 5, 2, 0.5, rng);
  ic.output_layer().weight.value.setZero();
  ic.output_layer().bias.value.setZero();
  Tape t;
  const Matrix p = nn::softmax_rows(t.value(ic.logits(t, t.constant(random_matrix(3, 4, rng)), nullptr)));
  EXPECT_TRUE(p.isApprox(Matrix::Constant(3, 2, 0.5), 1e-15));
}

TEST(IcDecoder, ShiftInvarianceOfDistribution) {
  Rng rng(7);
  IcDecoder ic(4, 5, 3, 0.5, rng);
  const Matrix s = random_matrix(2, 4, rng);
  Tape t1;
  const Matrix p1 = nn::softmax_rows(t1.value(ic.logits(t1, t1.constant(s), nullptr)));
  ic.output_layer().bias.value.array() += 7.5;
  Tape t2;
  const Matrix p2 = nn::softmax_rows(t2.value(ic.logits(t2, t2.constant(s), nullptr)));
  EXPECT_TRUE(p1.isApprox(p2, 1e-12));
}

TEST(IcDecoder, CrossEntropyGradientCheck) {
  Rng rng(8);
  IcDecoder ic(4, 5, 3, 0.5, rng);
  nn::Parameter s(random_matrix(2, 4, rng));
  const std::vector<std::int32_t> targets{2, 0};
  const auto loss = [&](Tape& t) { return nn::cross_entropy(t, ic.logits(t, t.parameter(s, true), nullptr), targets); };
  auto params = ic.parameters();
  params.push_back({"s", &s});
  EXPECT_LT(nn::grad_check(loss, params).max_relative_error, 1e-5);
}

TEST(SfDecoder, ZeroParametersGiveZeroEmissions) {
  Rng rng(9);
  SfDecoder sf(4, 5, 3, 0.2, rng);
  for (auto& p : sf.parameters()) p.param->value.setZero();
  Tape t;
  EXPECT_TRUE(t.value(sf.emissions(t, t.constant(random_matrix(6, 4, rng)), nullptr)).isZero(0.0));
  EXPECT_EQ(sf.transition_matrix().rows(), 5);
  EXPECT_EQ(sf.transition_matrix().cols(), 5);
}

TEST(SfDecoder, PositionWise) {
  Rng rng(10);
  SfDecoder sf(4, 5, 3, 0.2, rng);
  Matrix h = random_matrix(4, 4, rng);
  Tape t1;
  const Matrix e1 = t1.value(sf.emissions(t1, t1.constant(h), nullptr));
  h.row(0).swap(h.row(2));
  Tape t2;
  const Matrix e2 = t2.value(sf.emissions(t2, t2.constant(h), nullptr));
  EXPECT_EQ(e1.row(0), e2.row(2));
  EXPECT_EQ(e1.row(2), e2.row(0));
  EXPECT_EQ(e1.row(1), e2.row(1));
}

TEST(SfDecoder, GradientCheckThroughCrf) {
  Rng rng(11);
  SfDecoder sf(4, 5, 3, 0.2, rng);
  sf.transition_parameter().value = random_matrix(5, 5, rng);
  nn::Parameter h(random_matrix(6, 4, rng));
  const auto mask = prefix_mask({3, 2}, 3);
  const std::vector<std::int32_t> y{0, 1, 2, 2, 0, 0};
  const auto loss = [&](Tape& t) {
    return nn::crf_nll(t, sf.emissions(t, t.parameter(h, true), nullptr), sf.transitions(t), y, {mask, 3});
  };
  auto params = sf.parameters();
  params.push_back({"h", &h});
  EXPECT_LT(nn::grad_check(loss, params).max_relative_error, 1e-5);
}

TEST(LangHead, DistributionsAndGradients) {
  Rng rng(12);
  LangHead head(4, 6, 3, 0.5, rng);
  const Matrix s = random_matrix(5, 4, rng);
  {
    Tape t;
    const Matrix p = nn::softmax_rows(t.value(head.logits(t, t.constant(s), nullptr)));
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
  }
  nn::Parameter sp(s);
  const std::vector<std::int32_t> targets{0, 1, 2, 1, 0};
  const auto loss = [&](Tape& t) { return nn::cross_entropy(t, head.logits(t, t.parameter(sp, true), nullptr), targets); };
  auto params = head.parameters();
  params.push_back({"s", &sp});
  EXPECT_LT(nn::grad_check(loss, params).max_relative_error, 1e-5);

  head.output_layer().weight.value.setZero();
  head.output_layer().bias.value.setZero();
  Tape t;
  const Matrix p = nn::softmax_rows(t.value(head.logits(t, t.constant(s), nullptr)));
  EXPECT_TRUE(p.isApprox(Matrix::Constant(5, 3, 1.0 / 3.0), 1e-15));
}

TEST(Heads, ArgmaxUnchangedByLogitShift) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix logits = random_matrix(1, 5, rng, -3, 3);
    const Matrix shifted = logits.array() + uniform_real(rng, -100, 100);
    Eigen::Index a = 0, b = 0;
    nn::softmax_rows(logits).row(0).maxCoeff(&a);
    nn::softmax_rows(shifted).row(0).maxCoeff(&b);
    ASSERT_EQ(a, b);
  }
}

TEST(Heads, DifferentiableSoftmaxGradient) {
  Rng rng(14);
  nn::Parameter x(random_matrix(3, 4, rng, -2, 2));
  const Matrix r = random_matrix(4, 1, rng);
  const auto loss = [&](Tape& t) { return readout(t, softmax(t, t.parameter(x, true)), r); };
  const std::vector<nn::NamedParameter> params{{"x", &x}};
  EXPECT_LT(nn::grad_check(loss, params).max_relative_error, 1e-6);
}

}  // namespace
}  // namespace sluadv
