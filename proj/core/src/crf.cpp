#include "sluadv/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sluadv::nn {

namespace {

std::size_t prefix_length(std::span<const std::uint8_t> mask) {
  std::size_t n = 0;
  while (n < mask.size() && mask[n] != 0) ++n;
  if (n == 0) throw std::invalid_argument("crf: mask has no valid position");
  return n;
}

void check_shapes(const Matrix& emissions, const Matrix& transitions, std::size_t mask_size) {
  const Eigen::Index labels = emissions.cols();
  if (labels < 1) throw ShapeError("crf: emissions need at least one label");
  if (transitions.rows() != labels + 2 || transitions.cols() != labels + 2) {
    throw ShapeError("crf: transition matrix must be (L+2)x(L+2) for L=" + std::to_string(labels));
  }
  if (static_cast<std::size_t>(emissions.rows()) < mask_size) throw ShapeError("crf: mask longer than emissions");
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

/// alpha(t, j): log-sum of scores of all prefixes ending in label j at t.
Matrix forward_scores(const Eigen::Ref<const Matrix>& emis, const Matrix& A, std::size_t n) {
  const Eigen::Index L = emis.cols();
  const auto start = static_cast<Eigen::Index>(crf_start(static_cast<std::size_t>(L)));
  Matrix alpha(static_cast<Eigen::Index>(n), L);
  alpha.row(0) = A.row(start).head(L) + emis.row(0);
  Eigen::VectorXd tmp(L);
  for (Eigen::Index t = 1; t < static_cast<Eigen::Index>(n); ++t) {
    for (Eigen::Index j = 0; j < L; ++j) {
      tmp = alpha.row(t - 1).transpose() + A.col(j).head(L);
      alpha(t, j) = log_sum_exp(tmp) + emis(t, j);
    }
  }
  return alpha;
}

/// beta(t, i): log-sum of scores of all suffixes after label i at t, END included.
Matrix backward_scores(const Eigen::Ref<const Matrix>& emis, const Matrix& A, std::size_t n) {
  const Eigen::Index L = emis.cols();
  const auto end = static_cast<Eigen::Index>(crf_end(static_cast<std::size_t>(L)));
  const auto T = static_cast<Eigen::Index>(n);
  Matrix beta(T, L);
  beta.row(T - 1) = A.col(end).head(L).transpose();
  Eigen::VectorXd tmp(L);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < L; ++i) {
      tmp = A.row(i).head(L).transpose() + emis.row(t + 1).transpose() + beta.row(t + 1).transpose();
      beta(t, i) = log_sum_exp(tmp);
    }
  }
  return beta;
}

double path_score(const Eigen::Ref<const Matrix>& emis, const Matrix& A, std::span<const std::int32_t> y,
                  std::size_t n) {
  const auto L = static_cast<std::size_t>(emis.cols());
  double s = A(static_cast<Eigen::Index>(crf_start(L)), y[0]);
  for (std::size_t t = 0; t < n; ++t) {
    if (y[t] < 0 || static_cast<std::size_t>(y[t]) >= L) throw std::out_of_range("crf: label out of range");
    s += emis(static_cast<Eigen::Index>(t), y[t]);
    if (t + 1 < n) s += A(y[t], y[t + 1]);
  }
  return s + A(y[n - 1], static_cast<Eigen::Index>(crf_end(L)));
}

std::vector<std::int32_t> viterbi(const Eigen::Ref<const Matrix>& emis, const Matrix& A, std::size_t n) {
  const Eigen::Index L = emis.cols();
  const auto start = static_cast<Eigen::Index>(crf_start(static_cast<std::size_t>(L)));
  const auto end = static_cast<Eigen::Index>(crf_end(static_cast<std::size_t>(L)));
  const auto T = static_cast<Eigen::Index>(n);
  Matrix delta(T, L);
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(T, L);
  delta.row(0) = A.row(start).head(L) + emis.row(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < L; ++j) {
      Eigen::Index best = 0;
      double best_score = delta(t - 1, 0) + A(0, j);
      for (Eigen::Index i = 1; i < L; ++i) {
        const double s = delta(t - 1, i) + A(i, j);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      delta(t, j) = best_score + emis(t, j);
      back(t, j) = static_cast<std::int32_t>(best);
    }
  }
  Eigen::Index last = 0;
  double last_score = delta(T - 1, 0) + A(0, end);
  for (Eigen::Index j = 1; j < L; ++j) {
    const double s = delta(T - 1, j) + A(j, end);
    if (s > last_score) {
      last_score = s;
      last = j;
    }
  }
  std::vector<std::int32_t> path(n);
  path[n - 1] = static_cast<std::int32_t>(last);
  for (Eigen::Index t = T - 1; t > 0; --t) path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  return path;
}

}  // namespace

double crf_path_score(const Matrix& emissions, const Matrix& transitions, std::span<const std::int32_t> labels,
                      std::span<const std::uint8_t> mask) {
  check_shapes(emissions, transitions, mask.size());
  const std::size_t n = prefix_length(mask);
  if (labels.size() < n) throw ShapeError("crf: fewer labels than valid positions");
  return path_score(emissions, transitions, labels, n);
}

double crf_log_partition(const Matrix& emissions, const Matrix& transitions, std::span<const std::uint8_t> mask) {
  check_shapes(emissions, transitions, mask.size());
  const std::size_t n = prefix_length(mask);
  const Matrix alpha = forward_scores(emissions, transitions, n);
  const auto L = emissions.cols();
  const Eigen::VectorXd last =
      alpha.row(static_cast<Eigen::Index>(n) - 1).transpose() +
      transitions.col(static_cast<Eigen::Index>(crf_end(static_cast<std::size_t>(L)))).head(L);
  return log_sum_exp(last);
}

double crf_neg_log_likelihood(const Matrix& emissions, const Matrix& transitions,
                              std::span<const std::int32_t> labels, std::span<const std::uint8_t> mask) {
  return crf_log_partition(emissions, transitions, mask) - crf_path_score(emissions, transitions, labels, mask);
}

std::vector<std::int32_t> crf_viterbi(const Matrix& emissions, const Matrix& transitions,
                                      std::span<const std::uint8_t> mask) {
  check_shapes(emissions, transitions, mask.size());
  return viterbi(emissions, transitions, prefix_length(mask));
}

CrfEnumeration crf_brute_force(const Matrix& emissions, const Matrix& transitions,
                               std::span<const std::uint8_t> mask) {
  check_shapes(emissions, transitions, mask.size());
  const std::size_t n = prefix_length(mask);
  const auto L = static_cast<std::size_t>(emissions.cols());
  double paths = 1.0;
  for (std::size_t t = 0; t < n; ++t) paths *= static_cast<double>(L);
  if (paths > 1e6) throw std::invalid_argument("crf_brute_force: instance too large to enumerate");

  std::vector<std::int32_t> y(n, 0);
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(paths));
  CrfEnumeration out;
  out.best_score = -std::numeric_limits<double>::infinity();
  for (;;) {
    const double s = path_score(emissions, transitions, y, n);
    scores.push_back(s);
    if (s > out.best_score) {
      out.best_score = s;
      out.best = y;
    }
    bool exhausted = true;
    for (std::size_t pos = n; pos-- > 0;) {
      if (static_cast<std::size_t>(++y[pos]) < L) {
        exhausted = false;
        break;
      }
      y[pos] = 0;
    }
    if (exhausted) break;
  }
  const Eigen::Map<const Eigen::VectorXd> all(scores.data(), static_cast<Eigen::Index>(scores.size()));
  out.log_partition = log_sum_exp(all);
  return out;
}

Var crf_nll(Tape& tape, Var emissions, Var transitions, std::span<const std::int32_t> labels,
            const SequenceMask& mask) {
  const Matrix& E = tape.value(emissions);
  const Matrix& A = tape.value(transitions);
  check_shapes(E, A, mask.mask.size());
  if (static_cast<std::size_t>(E.rows()) != mask.mask.size() || labels.size() != mask.mask.size()) {
    throw ShapeError("crf_nll: emissions, labels and mask must cover the same rows");
  }
  const std::size_t batch = mask.batch_size();
  const Eigen::Index L = E.cols();
  const auto start = static_cast<Eigen::Index>(crf_start(static_cast<std::size_t>(L)));
  const auto end = static_cast<Eigen::Index>(crf_end(static_cast<std::size_t>(L)));

  // Gradients are accumulated eagerly: d/dE = marginals - gold indicators,
  // d/dA = expected transition counts - gold transition counts.
  Matrix grad_e = Matrix::Zero(E.rows(), L);
  Matrix grad_a = Matrix::Zero(A.rows(), A.cols());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = mask.length(b);
    if (n == 0) throw std::invalid_argument("crf_nll: item without valid positions");
    const auto row0 = static_cast<Eigen::Index>(b * mask.max_len);
    const auto T = static_cast<Eigen::Index>(n);
    const auto emis = E.middleRows(row0, T);
    const auto y = labels.subspan(b * mask.max_len, n);

    const Matrix alpha = forward_scores(emis, A, n);
    const Matrix beta = backward_scores(emis, A, n);
    const Eigen::VectorXd last = alpha.row(T - 1).transpose() + A.col(end).head(L);
    const double log_z = log_sum_exp(last);
    total += log_z - path_score(emis, A, y, n);

    const Matrix unary = (alpha + beta).array() - log_z;
    grad_e.middleRows(row0, T) += unary.array().exp().matrix();
    grad_a.row(start).head(L) += unary.row(0).array().exp().matrix();
    grad_a.col(end).head(L) += unary.row(T - 1).transpose().array().exp().matrix();
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      for (Eigen::Index i = 0; i < L; ++i) {
        for (Eigen::Index j = 0; j < L; ++j) {
          grad_a(i, j) += std::exp(alpha(t, i) + A(i, j) + emis(t + 1, j) + beta(t + 1, j) - log_z);
        }
      }
    }
    grad_a(start, y[0]) -= 1.0;
    grad_a(y[n - 1], end) -= 1.0;
    for (std::size_t t = 0; t < n; ++t) {
      grad_e(row0 + static_cast<Eigen::Index>(t), y[t]) -= 1.0;
      if (t + 1 < n) grad_a(y[t], y[t + 1]) -= 1.0;
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Matrix out(1, 1);
  out(0, 0) = total * inv_batch;
  grad_e *= inv_batch;
  grad_a *= inv_batch;
  return tape.record("crf_nll", std::move(out), {emissions, transitions},
                     [emissions, transitions, grad_e = std::move(grad_e), grad_a = std::move(grad_a)](
                         Tape& t, const Matrix& g) {
                       t.accumulate(emissions, grad_e * g(0, 0));
                       t.accumulate(transitions, grad_a * g(0, 0));
                     });
}

std::vector<std::vector<std::int32_t>> crf_decode_batch(const Matrix& emissions, const Matrix& transitions,
                                                        const SequenceMask& mask) {
  check_shapes(emissions, transitions, mask.mask.size());
  std::vector<std::vector<std::int32_t>> out;
  for (std::size_t b = 0; b < mask.batch_size(); ++b) {
    const std::size_t n = mask.length(b);
    if (n == 0) throw std::invalid_argument("crf: item without valid positions");
    out.push_back(viterbi(emissions.middleRows(static_cast<Eigen::Index>(b * mask.max_len),
                                               static_cast<Eigen::Index>(n)),
                          transitions, n));
  }
  return out;
}

}  // namespace sluadv::nn
