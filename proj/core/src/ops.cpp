#include "sluadv/ops.hpp"

#include <cmath>
#include <string>

namespace sluadv::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

double gelu_grad(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); }

void check_mask(const Matrix& h, const SequenceMask& mask, const char* op) {
  require(mask.max_len > 0 && mask.mask.size() % mask.max_len == 0, std::string(op) + ": malformed mask");
  require(static_cast<std::size_t>(h.rows()) == mask.mask.size(),
          std::string(op) + ": " + shape(h) + " rows do not match mask of " + std::to_string(mask.mask.size()));
}

}  // namespace

std::size_t SequenceMask::length(std::size_t b) const {
  std::size_t n = 0;
  while (n < max_len && valid(b, n)) ++n;
  return n;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Var matmul(Tape& tape, Var a, Var b) {
  const Matrix& A = tape.value(a);
  const Matrix& B = tape.value(b);
  require(A.cols() == B.rows(), "matmul: " + shape(A) + " * " + shape(B));
  Matrix out = A * B;
  return tape.record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a)) ga->noalias() += g * t.value(b).transpose();
    if (Matrix* gb = t.grad_buffer(b)) gb->noalias() += t.value(a).transpose() * g;
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Matrix& A = tape.value(a);
  const Matrix& B = tape.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: " + shape(A) + " + " + shape(B));
  return tape.record("add", A + B, {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var scale(Tape& tape, Var a, double factor) {
  return tape.record("scale", tape.value(a) * factor, {a},
                     [a, factor](Tape& t, const Matrix& g) { t.accumulate(a, g * factor); });
}

Var weighted_sum(Tape& tape, const std::vector<std::pair<double, Var>>& terms) {
  Matrix out = Matrix::Zero(1, 1);
  std::vector<Var> inputs;
  for (const auto& [w, v] : terms) {
    require(tape.value(v).size() == 1, "weighted_sum: terms must be scalars");
    out(0, 0) += w * tape.value(v)(0, 0);
    inputs.push_back(v);
  }
  return tape.record("weighted_sum", std::move(out), inputs, [terms](Tape& t, const Matrix& g) {
    for (const auto& [w, v] : terms) t.accumulate(v, g * w);
  });
}

Var activate(Tape& tape, Var x, Activation activation) {
  const Matrix& X = tape.value(x);
  switch (activation) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return tape.record("relu", X.cwiseMax(0.0), {x}, [x](Tape& t, const Matrix& g) {
        t.accumulate(x, (t.value(x).array() > 0.0).select(g, 0.0));
      });
    case Activation::gelu:
      return tape.record("gelu", X.unaryExpr([](double v) { return gelu(v); }), {x},
                         [x](Tape& t, const Matrix& g) {
                           t.accumulate(x, g.cwiseProduct(t.value(x).unaryExpr([](double v) { return gelu_grad(v); })));
                         });
  }
  throw std::logic_error("unknown activation");
}

Var dense(Tape& tape, Var x, Var weight, Var bias, Activation activation) {
  const Matrix& X = tape.value(x);
  const Matrix& W = tape.value(weight);
  const Matrix& b = tape.value(bias);
  require(X.cols() == W.cols(), "dense: input " + shape(X) + " vs weight " + shape(W));
  require(b.rows() == 1 && b.cols() == W.rows(), "dense: bias " + shape(b) + " vs weight " + shape(W));
  Matrix out(X.rows(), W.rows());
  out.noalias() = X * W.transpose();
  out.rowwise() += b.row(0);
  Var linear = tape.record("dense", std::move(out), {x, weight, bias}, [x, weight, bias](Tape& t, const Matrix& g) {
    if (Matrix* gx = t.grad_buffer(x)) gx->noalias() += g * t.value(weight);
    if (Matrix* gw = t.grad_buffer(weight)) gw->noalias() += g.transpose() * t.value(x);
    if (Matrix* gb = t.grad_buffer(bias)) *gb += g.colwise().sum();
  });
  return activate(tape, linear, activation);
}

Var dropout(Tape& tape, Var x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  require(rate < 1.0, "dropout: rate must be < 1");
  const Matrix& X = tape.value(x);
  Matrix keep(X.rows(), X.cols());
  const double kept_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = uniform01(*rng) < rate ? 0.0 : kept_scale;
  Matrix out = X.cwiseProduct(keep);
  return tape.record("dropout", std::move(out), {x},
                     [x, keep = std::move(keep)](Tape& t, const Matrix& g) { t.accumulate(x, g.cwiseProduct(keep)); });
}

Var layer_norm(Tape& tape, Var x, Var gain, Var bias, double eps) {
  const Matrix& X = tape.value(x);
  const Matrix& G = tape.value(gain);
  const Matrix& B = tape.value(bias);
  require(G.rows() == 1 && G.cols() == X.cols() && B.rows() == 1 && B.cols() == X.cols(),
          "layer_norm: parameters do not match " + shape(X));
  const Eigen::Index n = X.rows();
  const auto d = static_cast<double>(X.cols());
  Matrix xhat(X.rows(), X.cols());
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  return tape.record("layer_norm", std::move(out), {x, gain, bias},
                     [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), d](Tape& t, const Matrix& g) {
                       if (Matrix* gg = t.grad_buffer(gain)) *gg += g.cwiseProduct(xhat).colwise().sum();
                       if (Matrix* gb = t.grad_buffer(bias)) *gb += g.colwise().sum();
                       if (Matrix* gx = t.grad_buffer(x)) {
                         const Matrix gh = g.array().rowwise() * t.value(gain).row(0).array();
                         for (Eigen::Index r = 0; r < gh.rows(); ++r) {
                           const double m1 = gh.row(r).mean();
                           const double m2 = gh.row(r).dot(xhat.row(r)) / d;
                           gx->row(r).array() += inv_std(r) * (gh.row(r).array() - m1 - xhat.row(r).array() * m2);
                         }
                       }
                     });
}

Var embedding(Tape& tape, Var table, std::span<const std::int32_t> ids) {
  const Matrix& T = tape.value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < T.rows(), "embedding: id " + std::to_string(ids[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return tape.record("embedding", std::move(out), {table}, [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
    if (Matrix* gt = t.grad_buffer(table)) {
      for (std::size_t i = 0; i < idx.size(); ++i) gt->row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var add_positions(Tape& tape, Var x, Var positions, std::size_t max_len) {
  const Matrix& X = tape.value(x);
  const Matrix& P = tape.value(positions);
  const auto len = static_cast<Eigen::Index>(max_len);
  require(P.rows() >= len && P.cols() == X.cols(), "add_positions: table " + shape(P) + " too small");
  require(len > 0 && X.rows() % len == 0, "add_positions: rows not a multiple of max_len");
  Matrix out = X;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) += P.row(r % len);
  return tape.record("add_positions", std::move(out), {x, positions}, [x, positions, len](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (Matrix* gp = t.grad_buffer(positions)) {
      for (Eigen::Index r = 0; r < g.rows(); ++r) gp->row(r % len) += g.row(r);
    }
  });
}

Var self_attention(Tape& tape, Var q, Var k, Var v, const SequenceMask& mask, std::size_t n_heads) {
  const Matrix& Q = tape.value(q);
  const Matrix& K = tape.value(k);
  const Matrix& V = tape.value(v);
  check_mask(Q, mask, "self_attention");
  require(K.rows() == Q.rows() && V.rows() == Q.rows() && K.cols() == Q.cols() && V.cols() == Q.cols(),
          "self_attention: q/k/v shapes differ");
  require(n_heads > 0 && static_cast<std::size_t>(Q.cols()) % n_heads == 0,
          "self_attention: width not divisible by heads");

  const std::size_t batch = mask.batch_size();
  const auto dk = static_cast<Eigen::Index>(static_cast<std::size_t>(Q.cols()) / n_heads);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Eigen::Index> lengths(batch);
  std::vector<Matrix> weights(batch * n_heads);
  Matrix out = Matrix::Zero(Q.rows(), Q.cols());

  for (std::size_t b = 0; b < batch; ++b) {
    const auto n = static_cast<Eigen::Index>(mask.length(b));
    lengths[b] = n;
    const auto row0 = static_cast<Eigen::Index>(b * mask.max_len);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const Eigen::Index col0 = static_cast<Eigen::Index>(h) * dk;
      Matrix scores = Q.block(row0, col0, n, dk) * K.block(row0, col0, n, dk).transpose() * inv_scale;
      Matrix a = softmax_rows(scores);
      out.block(row0, col0, n, dk).noalias() = a * V.block(row0, col0, n, dk);
      weights[b * n_heads + h] = std::move(a);
    }
  }

  const std::size_t max_len = mask.max_len;
  return tape.record(
      "self_attention", std::move(out), {q, k, v},
      [q, k, v, lengths = std::move(lengths), weights = std::move(weights), n_heads, dk, inv_scale, max_len](
          Tape& t, const Matrix& g) {
        Matrix* gq = t.grad_buffer(q);
        Matrix* gk = t.grad_buffer(k);
        Matrix* gv = t.grad_buffer(v);
        const Matrix& Q = t.value(q);
        const Matrix& K = t.value(k);
        const Matrix& V = t.value(v);
        for (std::size_t b = 0; b < lengths.size(); ++b) {
          const Eigen::Index n = lengths[b];
          const auto row0 = static_cast<Eigen::Index>(b * max_len);
          for (std::size_t h = 0; h < n_heads; ++h) {
            const Eigen::Index col0 = static_cast<Eigen::Index>(h) * dk;
            const Matrix& a = weights[b * n_heads + h];
            const auto go = g.block(row0, col0, n, dk);
            if (gv) gv->block(row0, col0, n, dk).noalias() += a.transpose() * go;
            if (!gq && !gk) continue;
            const Matrix ga = go * V.block(row0, col0, n, dk).transpose();
            Matrix gs = a.cwiseProduct(ga);
            const Eigen::VectorXd row_dot = gs.rowwise().sum();
            gs -= a.cwiseProduct(row_dot.replicate(1, n));
            gs *= inv_scale;
            if (gq) gq->block(row0, col0, n, dk).noalias() += gs * K.block(row0, col0, n, dk);
            if (gk) gk->block(row0, col0, n, dk).noalias() += gs.transpose() * Q.block(row0, col0, n, dk);
          }
        }
      });
}

Var conv_tokens(Tape& tape, Var h, Var kernel, Var bias, const SequenceMask& mask) {
  const Matrix& H = tape.value(h);
  const Matrix& K = tape.value(kernel);
  const Matrix& b = tape.value(bias);
  check_mask(H, mask, "conv_tokens");
  const Eigen::Index d_in = H.cols();
  require(K.cols() == 3 * d_in, "conv_tokens: kernel " + shape(K) + " vs input width " + std::to_string(d_in));
  require(b.rows() == 1 && b.cols() == K.rows(), "conv_tokens: bias " + shape(b));

  const std::size_t batch = mask.batch_size();
  const std::size_t max_len = mask.max_len;
  Matrix windows = Matrix::Zero(H.rows(), 3 * d_in);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const std::size_t n = mask.length(bi);
    for (std::size_t t = 0; t < n; ++t) {
      const auto r = static_cast<Eigen::Index>(bi * max_len + t);
      if (t > 0) windows.block(r, 0, 1, d_in) = H.row(r - 1);
      windows.block(r, d_in, 1, d_in) = H.row(r);
      if (t + 1 < n) windows.block(r, 2 * d_in, 1, d_in) = H.row(r + 1);
    }
  }
  Matrix pre(H.rows(), K.rows());
  pre.noalias() = windows * K.transpose();
  pre.rowwise() += b.row(0);
  Matrix out = pre.cwiseMax(0.0);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (mask.mask[static_cast<std::size_t>(r)] == 0) {
      out.row(r).setZero();
      pre.row(r).setConstant(-1.0);  // keeps masked rows out of the backward pass
    }
  }

  std::vector<std::uint8_t> mask_copy(mask.mask.begin(), mask.mask.end());
  return tape.record(
      "conv_tokens", std::move(out), {h, kernel, bias},
      [h, kernel, bias, windows = std::move(windows), pre = std::move(pre), mask_copy = std::move(mask_copy), max_len,
       d_in](Tape& t, const Matrix& g) {
        const Matrix gz = (pre.array() > 0.0).select(g, 0.0);
        if (Matrix* gk = t.grad_buffer(kernel)) gk->noalias() += gz.transpose() * windows;
        if (Matrix* gb = t.grad_buffer(bias)) *gb += gz.colwise().sum();
        if (Matrix* gh = t.grad_buffer(h)) {
          const Matrix gw = gz * t.value(kernel);
          const SequenceMask m{mask_copy, max_len};
          for (std::size_t bi = 0; bi < m.batch_size(); ++bi) {
            const std::size_t n = m.length(bi);
            for (std::size_t tt = 0; tt < n; ++tt) {
              const auto r = static_cast<Eigen::Index>(bi * max_len + tt);
              if (tt > 0) gh->row(r - 1) += gw.block(r, 0, 1, d_in);
              gh->row(r) += gw.block(r, d_in, 1, d_in);
              if (tt + 1 < n) gh->row(r + 1) += gw.block(r, 2 * d_in, 1, d_in);
            }
          }
        }
      });
}

Var masked_max_pool(Tape& tape, Var h, const SequenceMask& mask) {
  const Matrix& H = tape.value(h);
  check_mask(H, mask, "masked_max_pool");
  const std::size_t batch = mask.batch_size();
  Matrix out(static_cast<Eigen::Index>(batch), H.cols());
  std::vector<Eigen::Index> argmax(batch * static_cast<std::size_t>(H.cols()));
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = mask.length(b);
    if (n == 0) throw ShapeError("masked_max_pool: item " + std::to_string(b) + " has no valid position");
    const auto row0 = static_cast<Eigen::Index>(b * mask.max_len);
    for (Eigen::Index j = 0; j < H.cols(); ++j) {
      Eigen::Index best = row0;
      for (Eigen::Index r = row0 + 1; r < row0 + static_cast<Eigen::Index>(n); ++r) {
        if (H(r, j) > H(best, j)) best = r;
      }
      out(static_cast<Eigen::Index>(b), j) = H(best, j);
      argmax[b * static_cast<std::size_t>(H.cols()) + static_cast<std::size_t>(j)] = best;
    }
  }
  return tape.record("masked_max_pool", std::move(out), {h}, [h, argmax = std::move(argmax)](Tape& t, const Matrix& g) {
    if (Matrix* gh = t.grad_buffer(h)) {
      const Eigen::Index cols = g.cols();
      for (Eigen::Index b = 0; b < g.rows(); ++b) {
        for (Eigen::Index j = 0; j < cols; ++j) {
          (*gh)(argmax[static_cast<std::size_t>(b * cols + j)], j) += g(b, j);
        }
      }
    }
  });
}

Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const Eigen::Index rows = tape.value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require(tape.value(p).rows() == rows, "concat_cols: row counts differ");
    cols += tape.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (Var p : parts) {
    offsets.push_back(c);
    out.middleCols(c, tape.value(p).cols()) = tape.value(p);
    c += tape.value(p).cols();
  }
  return tape.record("concat_cols", std::move(out), parts, [parts, offsets](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      t.accumulate(parts[i], g.middleCols(offsets[i], t.value(parts[i]).cols()));
    }
  });
}

Var mix(Tape& tape, const std::vector<Var>& parts, Var weights, std::size_t rows_per_item) {
  require(!parts.empty(), "mix: no parts");
  const Matrix& W = tape.value(weights);
  const Matrix& first = tape.value(parts.front());
  require(W.cols() == static_cast<Eigen::Index>(parts.size()), "mix: weights need one column per part");
  require(rows_per_item > 0 && first.rows() == W.rows() * static_cast<Eigen::Index>(rows_per_item),
          "mix: row count does not match weights");
  const auto per = static_cast<Eigen::Index>(rows_per_item);
  Matrix out = Matrix::Zero(first.rows(), first.cols());
  for (std::size_t l = 0; l < parts.size(); ++l) {
    const Matrix& P = tape.value(parts[l]);
    require(P.rows() == first.rows() && P.cols() == first.cols(), "mix: part shapes differ");
    for (Eigen::Index b = 0; b < W.rows(); ++b) {
      out.middleRows(b * per, per) += P.middleRows(b * per, per) * W(b, static_cast<Eigen::Index>(l));
    }
  }
  std::vector<Var> inputs = parts;
  inputs.push_back(weights);
  return tape.record("mix", std::move(out), inputs, [parts, weights, per](Tape& t, const Matrix& g) {
    const Matrix& W = t.value(weights);
    Matrix* gw = t.grad_buffer(weights);
    for (std::size_t l = 0; l < parts.size(); ++l) {
      const auto col = static_cast<Eigen::Index>(l);
      Matrix* gp = t.grad_buffer(parts[l]);
      const Matrix& P = t.value(parts[l]);
      for (Eigen::Index b = 0; b < W.rows(); ++b) {
        if (gp) gp->middleRows(b * per, per) += g.middleRows(b * per, per) * W(b, col);
        if (gw) (*gw)(b, col) += g.middleRows(b * per, per).cwiseProduct(P.middleRows(b * per, per)).sum();
      }
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Var cross_entropy(Tape& tape, Var logits, std::span<const std::int32_t> targets) {
  const Matrix& Z = tape.value(logits);
  require(Z.rows() == static_cast<Eigen::Index>(targets.size()), "cross_entropy: one target per row required");
  require(Z.cols() >= 2, "cross_entropy: need at least two classes");
  Matrix p = softmax_rows(Z);
  double total = 0.0;
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    const auto y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= Z.cols()) throw std::out_of_range("cross_entropy: target out of range");
    const double m = Z.row(r).maxCoeff();
    total += m + std::log((Z.row(r).array() - m).exp().sum()) - Z(r, y);
  }
  const double n = static_cast<double>(Z.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<std::int32_t> ys(targets.begin(), targets.end());
  return tape.record("cross_entropy", std::move(out), {logits},
                     [logits, p = std::move(p), ys = std::move(ys), n](Tape& t, const Matrix& g) {
                       if (Matrix* gz = t.grad_buffer(logits)) {
                         Matrix d = p;
                         for (std::size_t r = 0; r < ys.size(); ++r) d(static_cast<Eigen::Index>(r), ys[r]) -= 1.0;
                         *gz += d * (g(0, 0) / n);
                       }
                     });
}

Var mean(Tape& tape, Var x) {
  const Matrix& X = tape.value(x);
  require(X.size() > 0, "mean: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = X.mean();
  const double n = static_cast<double>(X.size());
  return tape.record("mean", std::move(out), {x}, [x, n](Tape& t, const Matrix& g) {
    if (Matrix* gx = t.grad_buffer(x)) gx->array() += g(0, 0) / n;
  });
}

SoftmaxXent softmax_xent(const Eigen::VectorXd& logits, std::int32_t target) {
  if (logits.size() < 2) throw std::invalid_argument("softmax_xent: need at least two classes");
  if (target < 0 || target >= logits.size()) throw std::out_of_range("softmax_xent: target out of range");
  SoftmaxXent out;
  const double m = logits.maxCoeff();
  const Eigen::VectorXd shifted = (logits.array() - m).exp();
  const double z = shifted.sum();
  out.probabilities = shifted / z;
  out.loss = m + std::log(z) - logits(target);
  return out;
}

}  // namespace sluadv::nn
