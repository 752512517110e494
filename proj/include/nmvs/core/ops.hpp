// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nmvs/core/tape.hpp"

// Dense (non-spatial) tape operations. All free functions; each returns a new
// node whose backprop accumulates into the parents that require gradients.

namespace nmvs::ad {

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a) + tp.val(b);
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(b), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, b, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a) += g;
      if (t.needs(b)) t.grad(b) += g;
    });
  return out;
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a) - tp.val(b);
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(b), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, b, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a) += g;
      if (t.needs(b)) t.grad(b) -= g;
    });
  return out;
}

template <class T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }

/// Elementwise product.
template <class T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array() * tp.val(b).array();
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(b), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, b, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a).array() += g.array() * t.val(b).array();
      if (t.needs(b)) t.grad(b).array() += g.array() * t.val(a).array();
    });
  return out;
}

/// y = s*a + c
template <class T>
Var<T> affine(Var<T> a, T s, T c) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = (tp.val(a).array() * s + c).matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, s, out](Tape<T>& t) {
      t.grad(a) += s * t.grad_ref(out);
    });
  return out;
}

template <class T>
Var<T> scale(Var<T> a, T s) { return affine(a, s, T(0)); }

/// s1*a + s2*b + s3*c, elementwise over same-shaped inputs.
template <class T>
Var<T> lincomb3(Var<T> a, Var<T> b, Var<T> c, T s1, T s2, T s3) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = s1 * tp.val(a) + s2 * tp.val(b) + s3 * tp.val(c);
  bool ng = tp.needs(a) || tp.needs(b) || tp.needs(c);
  Var<T> out = tp.make(std::move(y), ng, tp.height(a), tp.width(a));
  if (ng)
    tp.set_backprop(out, [a, b, c, s1, s2, s3, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a) += s1 * g;
      if (t.needs(b)) t.grad(b) += s2 * g;
      if (t.needs(c)) t.grad(c) += s3 * g;
    });
  return out;
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tp = *a.tape;
  if (tp.val(a).cols() != tp.val(b).rows())
    throw std::invalid_argument("matmul: inner dimensions do not match");
  Mat<T> y = tp.val(a) * tp.val(b);
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(b), tp.height(b), tp.width(b));
  if (tp.needs(out))
    tp.set_backprop(out, [a, b, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a).noalias() += g * t.val(b).transpose();
      if (t.needs(b)) t.grad(b).noalias() += t.val(a).transpose() * g;
    });
  return out;
}

/// Adds a per-row bias (column vector) to every column.
template <class T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).colwise() + tp.val(bias).col(0);
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(bias), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, bias, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a) += g;
      if (t.needs(bias)) t.grad(bias) += g.rowwise().sum();
    });
  return out;
}

/// Multiplies every row of `a` by the (1 x N) row vector `w`.
template <class T>
Var<T> row_broadcast_mul(Var<T> a, Var<T> w) {
  Tape<T>& tp = *a.tape;
  if (tp.val(w).rows() != 1 || tp.val(w).cols() != tp.val(a).cols())
    throw std::invalid_argument("row_broadcast_mul: w must be 1 x cols(a)");
  Mat<T> y = tp.val(a).array().rowwise() * tp.val(w).row(0).array();
  Var<T> out = tp.make(std::move(y), tp.needs(a) || tp.needs(w), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, w, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(a)) t.grad(a).array() += g.array().rowwise() * t.val(w).row(0).array();
      if (t.needs(w))
        t.grad(w).row(0).array() += (g.array() * t.val(a).array()).colwise().sum();
    });
  return out;
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = (T(1) / (T(1) + (-tp.val(a).array()).exp())).matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      auto y_ = t.val(out).array();
      t.grad(a).array() += t.grad_ref(out).array() * y_ * (T(1) - y_);
    });
  return out;
}

template <class T>
Var<T> tanh_op(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array().tanh().matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      auto y_ = t.val(out).array();
      t.grad(a).array() += t.grad_ref(out).array() * (T(1) - y_.square());
    });
  return out;
}

/// GELU in its tanh form, 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
/// Smooth (finite-difference friendly) and fully SIMD via Eigen's tanh.
template <class T>
Var<T> gelu(Var<T> a) {
  Tape<T>& tp = *a.tape;
  const T k = T(0.79788456080286535588);  // sqrt(2/pi)
  const T c = T(0.044715);
  auto x = tp.val(a).array();
  Mat<T> y = (T(0.5) * x * (T(1) + (k * (x + c * x.cube())).tanh())).matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out, k, c](Tape<T>& t) {
      auto x = t.val(a).array();
      auto u = (k * (x + c * x.cube())).tanh();
      // d/dx [0.5 x (1+u)] = 0.5 (1+u) + 0.5 x (1-u^2) k (1 + 3 c x^2)
      t.grad(a).array() +=
          t.grad_ref(out).array() *
          (T(0.5) * (T(1) + u) +
           T(0.5) * x * (T(1) - u.square()) * k * (T(1) + T(3) * c * x.square()));
    });
  return out;
}

template <class T>
Var<T> abs_op(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array().abs().matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      t.grad(a).array() += t.grad_ref(out).array() * t.val(a).array().sign();
    });
  return out;
}

template <class T>
Var<T> square(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array().square().matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      t.grad(a).array() += T(2) * t.grad_ref(out).array() * t.val(a).array();
    });
  return out;
}

/// sqrt(a + eps); eps > 0 keeps the derivative bounded at a = 0.
template <class T>
Var<T> sqrt_shifted(Var<T> a, T eps) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = (tp.val(a).array() + eps).sqrt().matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      t.grad(a).array() += t.grad_ref(out).array() * T(0.5) / t.val(out).array();
    });
  return out;
}

template <class T>
Var<T> reciprocal(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array().inverse().matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      t.grad(a).array() -= t.grad_ref(out).array() * t.val(out).array().square();
    });
  return out;
}

/// Clamp with pass-through gradient strictly inside (lo, hi), zero outside.
template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).array().max(lo).min(hi).matrix();
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out, lo, hi](Tape<T>& t) {
      auto x = t.val(a).array();
      Mat<T> pass = ((x > lo) && (x < hi)).template cast<T>();
      t.grad(a).array() += t.grad_ref(out).array() * pass.array();
    });
  return out;
}

template <class T>
Var<T> mean_all(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y(1, 1);
  y(0, 0) = tp.val(a).mean();
  Var<T> out = tp.make(std::move(y), tp.needs(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      T g = t.grad_ref(out)(0, 0) / T(t.val(a).size());
      t.grad(a).array() += g;
    });
  return out;
}

template <class T>
Var<T> sum_all(Var<T> a) {
  Tape<T>& tp = *a.tape;
  Mat<T> y(1, 1);
  y(0, 0) = tp.val(a).sum();
  Var<T> out = tp.make(std::move(y), tp.needs(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, out](Tape<T>& t) {
      t.grad(a).array() += t.grad_ref(out)(0, 0);
    });
  return out;
}

/// Vertical concatenation (stacks rows; all inputs share the column count).
template <class T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> ps(parts);
  Tape<T>& tp = *ps.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = tp.val(ps.front()).cols();
  bool ng = false;
  for (auto& p : ps) {
    if (tp.val(p).cols() != cols)
      throw std::invalid_argument("concat_rows: column counts differ");
    rows += tp.val(p).rows();
    ng = ng || tp.needs(p);
  }
  Mat<T> y(rows, cols);
  Eigen::Index r = 0;
  for (auto& p : ps) {
    y.middleRows(r, tp.val(p).rows()) = tp.val(p);
    r += tp.val(p).rows();
  }
  Var<T> out = tp.make(std::move(y), ng, tp.height(ps.front()), tp.width(ps.front()));
  if (ng)
    tp.set_backprop(out, [ps, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      Eigen::Index r = 0;
      for (auto& p : ps) {
        Eigen::Index n = t.val(p).rows();
        if (t.needs(p)) t.grad(p) += g.middleRows(r, n);
        r += n;
      }
    });
  return out;
}

/// Weighted mean and variance of three same-shaped feature maps, stacked as
/// [mu; v] (2C rows). Weights are per-column rows (1 x N) or fixed scalars
/// (1 x 1 constants). One fused node keeps the marching graph small.
template <class T>
Var<T> weighted_mean_variance(std::array<Var<T>, 3> f, std::array<Var<T>, 3> w) {
  Tape<T>& tp = *f[0].tape;
  const Eigen::Index C = tp.val(f[0]).rows(), N = tp.val(f[0]).cols();
  auto weight_row = [&](int i) -> Eigen::Array<T, 1, Eigen::Dynamic> {
    const Mat<T>& wv = tp.val(w[i]);
    if (wv.size() == 1) return Eigen::Array<T, 1, Eigen::Dynamic>::Constant(1, N, wv(0, 0));
    return wv.row(0).array();
  };

  Mat<T> out(2 * C, N);
  auto mu = out.topRows(C);
  auto var = out.bottomRows(C);
  mu.setZero();
  for (int i = 0; i < 3; ++i) mu.array() += tp.val(f[i]).array().rowwise() * weight_row(i);
  var.setZero();
  for (int i = 0; i < 3; ++i)
    var.array() +=
        (tp.val(f[i]) - mu).array().square().rowwise() * weight_row(i);

  bool ng = false;
  for (int i = 0; i < 3; ++i) ng = ng || tp.needs(f[i]) || tp.needs(w[i]);
  Var<T> node = tp.make(std::move(out), ng, tp.height(f[0]), tp.width(f[0]));
  if (ng)
    tp.set_backprop(node, [f, w, C, node](Tape<T>& t) {
      const Eigen::Index N = t.val(node).cols();
      const Mat<T>& g = t.grad_ref(node);
      auto gmu = g.topRows(C).array();
      auto gvar = g.bottomRows(C).array();
      auto mu = t.val(node).topRows(C).array();
      auto row_of = [&](int i) -> Eigen::Array<T, 1, Eigen::Dynamic> {
        const Mat<T>& wv = t.val(w[i]);
        if (wv.size() == 1) return Eigen::Array<T, 1, Eigen::Dynamic>::Constant(1, N, wv(0, 0));
        return wv.row(0).array();
      };
      // m1 = sum_i w_i (f_i - mu); zero when the weights sum to one, kept for
      // generality.
      Mat<T> m1 = Mat<T>::Zero(C, N);
      for (int i = 0; i < 3; ++i)
        m1.array() += (t.val(f[i]).array() - mu).rowwise() * row_of(i);
      for (int i = 0; i < 3; ++i) {
        auto fi = t.val(f[i]).array();
        if (t.needs(f[i]))
          t.grad(f[i]).array() +=
              (gmu + T(2) * gvar * ((fi - mu) - m1.array())).rowwise() * row_of(i);
        if (t.needs(w[i])) {
          Mat<T> contrib =
              (gmu * fi + gvar * ((fi - mu).square() - T(2) * fi * m1.array())).colwise().sum();
          if (t.val(w[i]).size() == 1)
            t.grad(w[i])(0, 0) += contrib.sum();
          else
            t.grad(w[i]) += contrib;
        }
      }
    });
  return node;
}

/// One LSTM step over columns, fused into a single node stacked as [h'; c'].
template <class T>
Var<T> lstm_cell(Var<T> x, Var<T> h, Var<T> c, Var<T> w_ih, Var<T> w_hh, Var<T> bias) {
  Tape<T>& tp = *x.tape;
  const Eigen::Index H = tp.val(h).rows(), N = tp.val(x).cols();
  Mat<T> z = tp.val(w_ih) * tp.val(x) + tp.val(w_hh) * tp.val(h);
  z.colwise() += tp.val(bias).col(0);

  auto gates = std::make_shared<Mat<T>>(4 * H, N);  // i, f, g, o activated
  gates->topRows(3 * H).array() =
      T(1) / (T(1) + (-Mat<T>(z.topRows(3 * H))).array().exp());
  gates->middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh();  // g
  gates->bottomRows(H).array() = T(1) / (T(1) + (-z.bottomRows(H)).array().exp());

  Mat<T> out(2 * H, N);
  out.bottomRows(H).array() = gates->topRows(H).array() * gates->middleRows(2 * H, H).array() +
                              gates->middleRows(H, H).array() * tp.val(c).array();
  auto tanh_c = std::make_shared<Mat<T>>(out.bottomRows(H).array().tanh().matrix());
  out.topRows(H).array() = gates->bottomRows(H).array() * tanh_c->array();

  bool ng = tp.needs(x) || tp.needs(h) || tp.needs(c) || tp.needs(w_ih) || tp.needs(w_hh) ||
            tp.needs(bias);
  Var<T> node = tp.make(std::move(out), ng, tp.height(x), tp.width(x));
  if (ng)
    tp.set_backprop(node, [x, h, c, w_ih, w_hh, bias, gates, tanh_c, H, node](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(node);
      auto i_ = gates->topRows(H).array();
      auto f_ = gates->middleRows(H, H).array();
      auto g_ = gates->middleRows(2 * H, H).array();
      auto o_ = gates->bottomRows(H).array();
      auto dh = g.topRows(H).array();
      auto dc_out = g.bottomRows(H).array();
      auto tc = tanh_c->array();

      Mat<T> dc_total = (dc_out + dh * o_ * (T(1) - tc.square())).matrix();
      Mat<T> dz(4 * H, g.cols());
      dz.topRows(H).array() = dc_total.array() * g_ * i_ * (T(1) - i_);          // d z_i
      dz.middleRows(H, H).array() =
          dc_total.array() * t.val(c).array() * f_ * (T(1) - f_);               // d z_f
      dz.middleRows(2 * H, H).array() = dc_total.array() * i_ * (T(1) - g_.square());  // d z_g
      dz.bottomRows(H).array() = dh * tc * o_ * (T(1) - o_);                     // d z_o

      if (t.needs(w_ih)) t.grad(w_ih).noalias() += dz * t.val(x).transpose();
      if (t.needs(w_hh)) t.grad(w_hh).noalias() += dz * t.val(h).transpose();
      if (t.needs(bias)) t.grad(bias) += dz.rowwise().sum();
      if (t.needs(x)) t.grad(x).noalias() += t.val(w_ih).transpose() * dz;
      if (t.needs(h)) t.grad(h).noalias() += t.val(w_hh).transpose() * dz;
      if (t.needs(c)) t.grad(c).array() += dc_total.array() * f_;
    });
  return node;
}

template <class T>
Var<T> slice_rows(Var<T> a, int first, int count) {
  Tape<T>& tp = *a.tape;
  Mat<T> y = tp.val(a).middleRows(first, count);
  Var<T> out = tp.make(std::move(y), tp.needs(a), tp.height(a), tp.width(a));
  if (tp.needs(out))
    tp.set_backprop(out, [a, first, count, out](Tape<T>& t) {
      t.grad(a).middleRows(first, count) += t.grad_ref(out);
    });
  return out;
}

}  // namespace nmvs::ad
