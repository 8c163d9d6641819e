#include <benchmark/benchmark.h>

#include "sluadv/batch.hpp"
#include "sluadv/crf.hpp"
#include "sluadv/model.hpp"
#include "sluadv/optim.hpp"
#include "sluadv/synthetic.hpp"

namespace {

using namespace sluadv;
using nn::Matrix;

struct CrfInstance {
  Matrix emissions, transitions;
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> mask;
};

CrfInstance crf_instance(int length, int n_labels) {
  Rng rng(1);
  CrfInstance c;
  c.emissions = Matrix::NullaryExpr(length, n_labels, [&] { return uniform_real(rng, -2.0, 2.0); });
  c.transitions = Matrix::NullaryExpr(n_labels + 2, n_labels + 2, [&] { return uniform_real(rng, -1.0, 1.0); });
  for (int t = 0; t < length; ++t) c.labels.push_back(static_cast<std::int32_t>(uniform_index(rng, n_labels)));
  c.mask.assign(static_cast<std::size_t>(length), 1);
  return c;
}

void BM_CrfNll(benchmark::State& state) {
  const auto c = crf_instance(static_cast<int>(state.range(0)), 25);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::crf_neg_log_likelihood(c.emissions, c.transitions, c.labels, c.mask));
  }
}
BENCHMARK(BM_CrfNll)->Arg(8)->Arg(32);

void BM_CrfViterbi(benchmark::State& state) {
  const auto c = crf_instance(static_cast<int>(state.range(0)), 25);
  for (auto _ : state) benchmark::DoNotOptimize(nn::crf_viterbi(c.emissions, c.transitions, c.mask));
}
BENCHMARK(BM_CrfViterbi)->Arg(8)->Arg(32);

struct Fixture {
  SluModel model;
  EncodedBatch batch;
};

// One 32-utterance mixed batch and a default-sized model of the given variant.
Fixture fixture(ModelVariant variant) {
  const ParallelCorpus p = generate_synthetic_parallel(32, {"L1", "L2"}, 7);
  Corpus corpus;
  std::size_t i = 0;
  for (const auto& id : p.ids()) corpus.add(p.at(id, i++ % 2 ? "L1" : "L2"));
  Fixture f{make_model(variant, build_vocab(corpus, 1), ModelConfig{}, 1), {}};
  const auto items = encode(model_vocab(f.model), corpus);
  f.batch = make_batch(std::span<const EncodedUtterance>(items));
  return f;
}

void BM_EncoderForward(benchmark::State& state) {
  const Fixture f = fixture(ModelVariant::standard);
  const auto& m = std::get<StandardModel>(f.model);
  for (auto _ : state) {
    nn::Tape tape;
    benchmark::DoNotOptimize(m.forward(tape, f.batch, nullptr));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.batch_size));
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

template <class M>
void train_step(benchmark::State& state, ModelVariant variant) {
  Fixture f = fixture(variant);
  auto& m = std::get<M>(f.model);
  auto groups = m.parameter_groups();
  nn::OptimizerState opt;
  Rng dropout(3);
  for (auto _ : state) {
    nn::zero_grads(groups);
    nn::Tape tape;
    const auto out = m.forward(tape, f.batch, &dropout);
    if constexpr (std::is_same_v<M, StandardModel>) {
      tape.backward(m.joint_loss(tape, out, f.batch));
    } else {
      tape.backward(m.loss_task2(tape, out, f.batch, LossWeights{}));
    }
    nn::adam_step(groups, opt, 1e-4);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.batch_size));
}

void BM_TrainStepStandard(benchmark::State& state) { train_step<StandardModel>(state, ModelVariant::standard); }
void BM_TrainStepAdversarial(benchmark::State& state) {
  train_step<AdversarialModel>(state, ModelVariant::adversarial);
}
BENCHMARK(BM_TrainStepStandard)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepAdversarial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
