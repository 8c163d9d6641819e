#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sluadv/ops.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::nn {

// Linear-chain CRF over L labels. The transition matrix is (L + 2) x (L + 2):
// entry (i, j) scores moving from label i to label j, row L is the virtual
// START state and column L + 1 the virtual END state.
//
//   score(y) = A[START, y_0] + sum_t emis[t, y_t] + sum_t A[y_t, y_t+1] + A[y_T-1, END]
//
// Single-sequence functions take a T x L emission matrix plus a mask whose
// valid positions form a prefix; only that prefix is used.

inline std::size_t crf_start(std::size_t labels) { return labels; }
inline std::size_t crf_end(std::size_t labels) { return labels + 1; }

double crf_path_score(const Matrix& emissions, const Matrix& transitions, std::span<const std::int32_t> labels,
                      std::span<const std::uint8_t> mask);

/// log Z by the forward algorithm in log space.
double crf_log_partition(const Matrix& emissions, const Matrix& transitions, std::span<const std::uint8_t> mask);

/// -(score(labels) - log Z); always >= 0.
double crf_neg_log_likelihood(const Matrix& emissions, const Matrix& transitions,
                              std::span<const std::int32_t> labels, std::span<const std::uint8_t> mask);

/// Highest-scoring label sequence over the valid prefix. Ties go to the lower
/// label index at every backpointer and at the final state.
std::vector<std::int32_t> crf_viterbi(const Matrix& emissions, const Matrix& transitions,
                                      std::span<const std::uint8_t> mask);

struct CrfEnumeration {
  double log_partition = 0.0;
  double best_score = 0.0;
  std::vector<std::int32_t> best;
};

/// Exact enumeration of all L^T paths; rejects instances with L^T > 1e6.
CrfEnumeration crf_brute_force(const Matrix& emissions, const Matrix& transitions,
                               std::span<const std::uint8_t> mask);

/// Batched CRF negative log-likelihood, averaged over the items of the batch.
/// `emissions` is (batch * max_len) x L; `labels` is indexed like its rows.
Var crf_nll(Tape& tape, Var emissions, Var transitions, std::span<const std::int32_t> labels,
            const SequenceMask& mask);

/// Viterbi decoding of every item in a padded batch.
std::vector<std::vector<std::int32_t>> crf_decode_batch(const Matrix& emissions, const Matrix& transitions,
                                                        const SequenceMask& mask);

}  // namespace sluadv::nn
