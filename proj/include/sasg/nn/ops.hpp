#pragma once

#include <cmath>
#include <vector>

#include "sasg/nn/tape.hpp"

// Differentiable ops over activations laid out as (channels, batch * length):
// column n * length + l holds the channel vector of sample n at position l.

namespace sasg::nn {

template <typename S>
using Strided = Eigen::Map<const MatrixX<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using StridedMut = Eigen::Map<MatrixX<S>, 0, Eigen::OuterStride<>>;

template <typename S>
bool any_grad(const Tape<S>& t, Var a) {
  return t.requires_grad(a);
}
template <typename S, typename... Rest>
bool any_grad(const Tape<S>& t, Var a, Rest... rest) {
  return t.requires_grad(a) || any_grad(t, rest...);
}

/// y = W x + b, with b broadcast across columns.
template <typename S>
Var linear(Tape<S>& t, Var x, Var w, Var b) {
  MatrixX<S> y = t.value(w) * t.value(x);
  y.colwise() += t.value(b).col(0);
  return t.push(std::move(y), any_grad(t, x, w, b), [x, w, b](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    if (t.requires_grad(w)) t.grad(w).noalias() += dy * t.value(x).transpose();
    if (t.requires_grad(b)) t.grad(b) += dy.rowwise().sum();
    if (t.requires_grad(x)) t.grad(x).noalias() += t.value(w).transpose() * dy;
  });
}

namespace detail {

// Stacks shifted copies of x: rows [j*C, (j+1)*C) of column (n, l) hold
// x(:, n, l + j - pad) or zero outside [0, length).
template <typename S>
MatrixX<S> im2col(const MatrixX<S>& x, Index length, Index kernel) {
  const Index channels = x.rows();
  const Index batch = x.cols() / length;
  const Index pad = kernel / 2;
  MatrixX<S> cols = MatrixX<S>::Zero(channels * kernel, x.cols());
  for (Index j = 0; j < kernel; ++j) {
    const Index shift = j - pad;
    const Index lo = std::max<Index>(0, -shift);
    const Index hi = std::min<Index>(length, length - shift);
    if (hi <= lo) continue;
    for (Index n = 0; n < batch; ++n)
      cols.block(j * channels, n * length + lo, channels, hi - lo) =
          x.block(0, n * length + lo + shift, channels, hi - lo);
  }
  return cols;
}

template <typename S>
void col2im_add(const MatrixX<S>& cols, Index length, Index kernel, MatrixX<S>& dx) {
  const Index channels = dx.rows();
  const Index batch = dx.cols() / length;
  const Index pad = kernel / 2;
  for (Index j = 0; j < kernel; ++j) {
    const Index shift = j - pad;
    const Index lo = std::max<Index>(0, -shift);
    const Index hi = std::min<Index>(length, length - shift);
    if (hi <= lo) continue;
    for (Index n = 0; n < batch; ++n)
      dx.block(0, n * length + lo + shift, channels, hi - lo) +=
          cols.block(j * channels, n * length + lo, channels, hi - lo);
  }
}

}  // namespace detail

/// "Same"-padded stride-1 convolution. Weight is (out, kernel * in) with
/// column index j * in + c.
template <typename S>
Var conv1d(Tape<S>& t, Var x, Var w, Var b, Index length, Index kernel) {
  if (t.value(x).cols() % length != 0) throw StageError("conv1d", "column count not a multiple of length");
  if (t.value(w).cols() != kernel * t.value(x).rows()) throw StageError("conv1d", "weight shape mismatch");
  MatrixX<S> cols = detail::im2col(t.value(x), length, kernel);
  MatrixX<S> y = t.value(w) * cols;
  y.colwise() += t.value(b).col(0);
  const bool rg = any_grad(t, x, w, b);
  return t.push(std::move(y), rg,
                [x, w, b, length, kernel, cols = rg ? std::move(cols) : MatrixX<S>()](Tape<S>& t, Var self) {
                  const MatrixX<S>& dy = t.grad(self);
                  if (t.requires_grad(w)) t.grad(w).noalias() += dy * cols.transpose();
                  if (t.requires_grad(b)) t.grad(b) += dy.rowwise().sum();
                  if (t.requires_grad(x)) {
                    MatrixX<S> dcols = t.value(w).transpose() * dy;
                    detail::col2im_add(dcols, length, kernel, t.grad(x));
                  }
                });
}

template <typename S>
Var relu(Tape<S>& t, Var x) {
  MatrixX<S> y = t.value(x).cwiseMax(S(0));
  return t.push(std::move(y), t.requires_grad(x), [x](Tape<S>& t, Var self) {
    t.grad(x) += (t.value(x).array() > S(0)).select(t.grad(self), S(0)).matrix();
  });
}

template <typename S>
Var silu(Tape<S>& t, Var x) {
  const auto& xv = t.value(x);
  MatrixX<S> sig = (S(1) + (-xv.array()).exp()).inverse().matrix();
  MatrixX<S> y = xv.cwiseProduct(sig);
  return t.push(std::move(y), t.requires_grad(x), [x, sig = std::move(sig)](Tape<S>& t, Var self) {
    const auto& xv = t.value(x);
    t.grad(x).array() +=
        t.grad(self).array() * sig.array() * (S(1) + xv.array() * (S(1) - sig.array()));
  });
}

template <typename S>
Var add(Tape<S>& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw StageError("add", "shape mismatch");
  MatrixX<S> y = t.value(a) + t.value(b);
  return t.push(std::move(y), any_grad(t, a, b), [a, b](Tape<S>& t, Var self) {
    if (t.requires_grad(a)) t.grad(a) += t.grad(self);
    if (t.requires_grad(b)) t.grad(b) += t.grad(self);
  });
}

template <typename S>
Var scale(Tape<S>& t, Var x, S factor) {
  MatrixX<S> y = t.value(x) * factor;
  return t.push(std::move(y), t.requires_grad(x),
                [x, factor](Tape<S>& t, Var self) { t.grad(x) += t.grad(self) * factor; });
}

/// Adds per-sample vector e(:, n) to every position of sample n.
template <typename S>
Var add_per_sample(Tape<S>& t, Var x, Var e, Index length) {
  const Index batch = t.value(x).cols() / length;
  if (t.value(e).cols() != batch || t.value(e).rows() != t.value(x).rows())
    throw StageError("add_per_sample", "shape mismatch");
  MatrixX<S> y = t.value(x);
  for (Index n = 0; n < batch; ++n) y.middleCols(n * length, length).colwise() += t.value(e).col(n);
  return t.push(std::move(y), any_grad(t, x, e), [x, e, length, batch](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    if (t.requires_grad(x)) t.grad(x) += dy;
    if (t.requires_grad(e)) {
      MatrixX<S>& de = t.grad(e);
      for (Index n = 0; n < batch; ++n) de.col(n) += dy.middleCols(n * length, length).rowwise().sum();
    }
  });
}

/// Group normalization over (channels-in-group x length) per sample, with
/// per-channel affine gamma/beta (column vectors).
template <typename S>
Var group_norm(Tape<S>& t, Var x, Var gamma, Var beta, Index groups, Index length, S eps = S(1e-5)) {
  const MatrixX<S>& xv = t.value(x);
  const Index channels = xv.rows();
  if (channels % groups != 0) throw StageError("group_norm", "channels not divisible by groups");
  const Index cg = channels / groups;
  const Index batch = xv.cols() / length;
  MatrixX<S> xhat(channels, xv.cols());
  MatrixX<S> inv_std(groups, batch);
  for (Index n = 0; n < batch; ++n)
    for (Index g = 0; g < groups; ++g) {
      auto blk = xv.block(g * cg, n * length, cg, length);
      const S mean = blk.mean();
      const S var = (blk.array() - mean).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_std(g, n) = is;
      xhat.block(g * cg, n * length, cg, length) = (blk.array() - mean) * is;
    }
  MatrixX<S> y = xhat;
  y.array().colwise() *= t.value(gamma).col(0).array();
  y.colwise() += t.value(beta).col(0);
  return t.push(std::move(y), any_grad(t, x, gamma, beta),
                [x, gamma, beta, groups, cg, length, batch, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape<S>& t, Var self) {
                  const MatrixX<S>& dy = t.grad(self);
                  if (t.requires_grad(gamma)) t.grad(gamma) += dy.cwiseProduct(xhat).rowwise().sum();
                  if (t.requires_grad(beta)) t.grad(beta) += dy.rowwise().sum();
                  if (!t.requires_grad(x)) return;
                  MatrixX<S> dxhat = dy;
                  dxhat.array().colwise() *= t.value(gamma).col(0).array();
                  MatrixX<S>& dx = t.grad(x);
                  const S m = static_cast<S>(cg * length);
                  for (Index n = 0; n < batch; ++n)
                    for (Index g = 0; g < groups; ++g) {
                      auto dh = dxhat.block(g * cg, n * length, cg, length);
                      auto xh = xhat.block(g * cg, n * length, cg, length);
                      const S sum_dh = dh.sum();
                      const S sum_dh_xh = dh.cwiseProduct(xh).sum();
                      dx.block(g * cg, n * length, cg, length).array() +=
                          (inv_std(g, n) / m) * (m * dh.array() - sum_dh - xh.array() * sum_dh_xh);
                    }
                });
}

/// Averages adjacent positions pairwise; length must be even.
template <typename S>
Var avg_pool2(Tape<S>& t, Var x, Index length) {
  const MatrixX<S>& xv = t.value(x);
  if (length % 2 != 0) throw StageError("avg_pool2", "odd length");
  const Index rows = xv.rows();
  const Index half = xv.cols() / 2;
  Strided<S> even(xv.data(), rows, half, Eigen::OuterStride<>(2 * rows));
  Strided<S> odd(xv.data() + rows, rows, half, Eigen::OuterStride<>(2 * rows));
  MatrixX<S> y = S(0.5) * (even + odd);
  return t.push(std::move(y), t.requires_grad(x), [x, rows, half](Tape<S>& t, Var self) {
    MatrixX<S>& dx = t.grad(x);
    const MatrixX<S> dy = S(0.5) * t.grad(self);
    StridedMut<S>(dx.data(), rows, half, Eigen::OuterStride<>(2 * rows)) += dy;
    StridedMut<S>(dx.data() + rows, rows, half, Eigen::OuterStride<>(2 * rows)) += dy;
  });
}

/// Nearest-neighbour upsampling by two.
template <typename S>
Var upsample2(Tape<S>& t, Var x) {
  const MatrixX<S>& xv = t.value(x);
  const Index rows = xv.rows();
  const Index cols = xv.cols();
  MatrixX<S> y(rows, 2 * cols);
  StridedMut<S>(y.data(), rows, cols, Eigen::OuterStride<>(2 * rows)) = xv;
  StridedMut<S>(y.data() + rows, rows, cols, Eigen::OuterStride<>(2 * rows)) = xv;
  return t.push(std::move(y), t.requires_grad(x), [x, rows, cols](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    t.grad(x) += Strided<S>(dy.data(), rows, cols, Eigen::OuterStride<>(2 * rows)) +
                 Strided<S>(dy.data() + rows, rows, cols, Eigen::OuterStride<>(2 * rows));
  });
}

template <typename S>
Var concat_rows(Tape<S>& t, Var a, Var b) {
  const MatrixX<S>& av = t.value(a);
  const MatrixX<S>& bv = t.value(b);
  if (av.cols() != bv.cols()) throw StageError("concat_rows", "column mismatch");
  MatrixX<S> y(av.rows() + bv.rows(), av.cols());
  y.topRows(av.rows()) = av;
  y.bottomRows(bv.rows()) = bv;
  const Index ra = av.rows();
  const Index rb = bv.rows();
  return t.push(std::move(y), any_grad(t, a, b), [a, b, ra, rb](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += dy.topRows(ra);
    if (t.requires_grad(b)) t.grad(b) += dy.bottomRows(rb);
  });
}

/// Mean over the time axis: (C, N*L) -> (C, N).
template <typename S>
Var mean_over_time(Tape<S>& t, Var x, Index length) {
  const MatrixX<S>& xv = t.value(x);
  const Index batch = xv.cols() / length;
  MatrixX<S> y(xv.rows(), batch);
  for (Index n = 0; n < batch; ++n) y.col(n) = xv.middleCols(n * length, length).rowwise().mean();
  return t.push(std::move(y), t.requires_grad(x), [x, length, batch](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    MatrixX<S>& dx = t.grad(x);
    for (Index n = 0; n < batch; ++n)
      dx.middleCols(n * length, length).colwise() += dy.col(n) / static_cast<S>(length);
  });
}

/// Column lookup into an embedding table; index < 0 yields a zero column.
template <typename S>
Var gather_columns(Tape<S>& t, Var table, std::vector<int> index) {
  const MatrixX<S>& tv = t.value(table);
  MatrixX<S> y = MatrixX<S>::Zero(tv.rows(), static_cast<Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= tv.cols()) throw StageError("gather_columns", "index out of range");
    if (index[i] >= 0) y.col(static_cast<Index>(i)) = tv.col(index[i]);
  }
  return t.push(std::move(y), t.requires_grad(table), [table, index = std::move(index)](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    MatrixX<S>& dt = t.grad(table);
    for (std::size_t i = 0; i < index.size(); ++i)
      if (index[i] >= 0) dt.col(index[i]) += dy.col(static_cast<Index>(i));
  });
}

/// Reinterprets the column-major buffer with a new shape.
template <typename S>
Var reshape(Tape<S>& t, Var x, Index rows, Index cols) {
  const MatrixX<S>& xv = t.value(x);
  if (rows * cols != xv.size()) throw StageError("reshape", "size mismatch");
  MatrixX<S> y = Eigen::Map<const MatrixX<S>>(xv.data(), rows, cols);
  const Index r0 = xv.rows();
  const Index c0 = xv.cols();
  return t.push(std::move(y), t.requires_grad(x), [x, r0, c0](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    t.grad(x) += Eigen::Map<const MatrixX<S>>(dy.data(), r0, c0);
  });
}

/// Repeats a (d, m) block `copies` times along columns.
template <typename S>
Var tile_columns(Tape<S>& t, Var x, Index copies) {
  const MatrixX<S>& xv = t.value(x);
  MatrixX<S> y = xv.replicate(1, copies);
  const Index m = xv.cols();
  return t.push(std::move(y), t.requires_grad(x), [x, m, copies](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    MatrixX<S>& dx = t.grad(x);
    for (Index c = 0; c < copies; ++c) dx += dy.middleCols(c * m, m);
  });
}

/// Column group g (of width `group`) comes from b where use_b[g], else a.
template <typename S>
Var select_groups(Tape<S>& t, Var a, Var b, std::vector<bool> use_b, Index group) {
  const MatrixX<S>& av = t.value(a);
  const MatrixX<S>& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols() ||
      static_cast<Index>(use_b.size()) * group != av.cols())
    throw StageError("select_groups", "shape mismatch");
  MatrixX<S> y = av;
  for (std::size_t g = 0; g < use_b.size(); ++g)
    if (use_b[g]) y.middleCols(static_cast<Index>(g) * group, group) = bv.middleCols(static_cast<Index>(g) * group, group);
  return t.push(std::move(y), any_grad(t, a, b), [a, b, use_b = std::move(use_b), group](Tape<S>& t, Var self) {
    const MatrixX<S>& dy = t.grad(self);
    for (std::size_t g = 0; g < use_b.size(); ++g) {
      const Var target = use_b[g] ? b : a;
      if (t.requires_grad(target))
        t.grad(target).middleCols(static_cast<Index>(g) * group, group) +=
            dy.middleCols(static_cast<Index>(g) * group, group);
    }
  });
}

/// Multi-head scaled dot-product attention. q is (d, N*lq); k, v are
/// (d, N*m). Each sample's queries attend over its own m keys.
template <typename S>
Var attention(Tape<S>& t, Var q, Var k, Var v, Index heads, Index lq, Index m) {
  const MatrixX<S>& Q = t.value(q);
  const MatrixX<S>& K = t.value(k);
  const MatrixX<S>& V = t.value(v);
  const Index d = Q.rows();
  if (d % heads != 0 || K.rows() != d || V.rows() != d) throw StageError("attention", "dimension mismatch");
  const Index batch = Q.cols() / lq;
  if (K.cols() != batch * m || V.cols() != batch * m) throw StageError("attention", "token count mismatch");
  const Index dh = d / heads;
  const S sc = S(1) / std::sqrt(static_cast<S>(dh));
  MatrixX<S> out(d, Q.cols());
  std::vector<MatrixX<S>> probs(static_cast<std::size_t>(batch * heads));
  for (Index n = 0; n < batch; ++n)
    for (Index h = 0; h < heads; ++h) {
      MatrixX<S> s = sc * K.block(h * dh, n * m, dh, m).transpose() * Q.block(h * dh, n * lq, dh, lq);
      s.rowwise() -= s.colwise().maxCoeff();
      s = s.array().exp().matrix();
      s.array().rowwise() /= s.colwise().sum().array();
      out.block(h * dh, n * lq, dh, lq).noalias() = V.block(h * dh, n * m, dh, m) * s;
      probs[static_cast<std::size_t>(n * heads + h)] = std::move(s);
    }
  return t.push(std::move(out), any_grad(t, q, k, v),
                [q, k, v, heads, lq, m, dh, sc, batch, probs = std::move(probs)](Tape<S>& t, Var self) {
                  const MatrixX<S>& dout = t.grad(self);
                  const MatrixX<S>& Q = t.value(q);
                  const MatrixX<S>& K = t.value(k);
                  const MatrixX<S>& V = t.value(v);
                  const bool gq = t.requires_grad(q), gk = t.requires_grad(k), gv = t.requires_grad(v);
                  for (Index n = 0; n < batch; ++n)
                    for (Index h = 0; h < heads; ++h) {
                      const MatrixX<S>& a = probs[static_cast<std::size_t>(n * heads + h)];
                      auto dO = dout.block(h * dh, n * lq, dh, lq);
                      if (gv) t.grad(v).block(h * dh, n * m, dh, m).noalias() += dO * a.transpose();
                      MatrixX<S> da = V.block(h * dh, n * m, dh, m).transpose() * dO;
                      MatrixX<S> ds = a.cwiseProduct(da);
                      const VectorX<S> col_sum = ds.colwise().sum().transpose();
                      ds -= a * col_sum.asDiagonal();
                      if (gq) t.grad(q).block(h * dh, n * lq, dh, lq).noalias() += sc * K.block(h * dh, n * m, dh, m) * ds;
                      if (gk) t.grad(k).block(h * dh, n * m, dh, m).noalias() += sc * Q.block(h * dh, n * lq, dh, lq) * ds.transpose();
                    }
                });
}

/// Mean softmax cross-entropy of logits (K, N) against integer labels.
template <typename S>
Var softmax_cross_entropy(Tape<S>& t, Var logits, const std::vector<int>& labels) {
  const MatrixX<S>& z = t.value(logits);
  const Index batch = z.cols();
  if (static_cast<Index>(labels.size()) != batch) throw StageError("softmax_cross_entropy", "label count mismatch");
  MatrixX<S> p = z;
  p.rowwise() -= p.colwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  S loss = 0;
  for (Index n = 0; n < batch; ++n) loss -= std::log(std::max(p(labels[n], n), std::numeric_limits<S>::min()));
  MatrixX<S> y(1, 1);
  y(0, 0) = loss / static_cast<S>(batch);
  return t.push(std::move(y), t.requires_grad(logits), [logits, labels, p = std::move(p)](Tape<S>& t, Var self) {
    const S g = t.grad(self)(0, 0) / static_cast<S>(p.cols());
    MatrixX<S> d = p;
    for (Index n = 0; n < p.cols(); ++n) d(labels[n], n) -= S(1);
    t.grad(logits) += g * d;
  });
}

}  // namespace sasg::nn
