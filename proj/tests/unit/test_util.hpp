#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sluadv/batch.hpp"
#include "sluadv/corpus.hpp"
#include "sluadv/ops.hpp"
#include "sluadv/random.hpp"
#include "sluadv/synthetic.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::test {

inline Utterance utt(std::string id, std::string lang, std::string intent, std::vector<std::string> tokens,
                     std::vector<std::string> slots) {
  return Utterance{std::move(id), std::move(lang), std::move(intent), std::move(tokens), std::move(slots)};
}

inline nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_real(rng, lo, hi);
  return m;
}

/// Prefix mask for a padded batch with the given item lengths.
inline std::vector<std::uint8_t> prefix_mask(const std::vector<std::size_t>& lengths, std::size_t max_len) {
  std::vector<std::uint8_t> mask(lengths.size() * max_len, 0);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    for (std::size_t t = 0; t < lengths[b]; ++t) mask[b * max_len + t] = 1;
  }
  return mask;
}

/// sum_r x[r] . w for a cols x 1 weight column: a scalar readout with nonuniform gradients.
inline nn::Var readout(nn::Tape& tape, nn::Var x, const nn::Matrix& w) {
  const auto rows = static_cast<double>(tape.value(x).rows());
  return nn::scale(tape, nn::mean(tape, nn::matmul(tape, x, tape.constant(w))), rows);
}

/// A small 2-language synthetic corpus split 80/10/10.
inline DataSplits tiny_splits(int groups = 60, std::uint64_t seed = 3) {
  return split_train_dev_test(generate_synthetic_parallel(groups, {"L1", "L2"}, seed), seed);
}

}  // namespace sluadv::test
