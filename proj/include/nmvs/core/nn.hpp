// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include "nmvs/core/ops.hpp"
#include "nmvs/core/spatial.hpp"

namespace nmvs {

template <class T>
struct Dense {
  Mat<T> weight;  // out x in
  Mat<T> bias;    // out x 1
};

template <class T>
struct Conv {
  Mat<T> weight;  // out x in*k*k, offset-major for k = 3
  Mat<T> bias;    // out x 1
  int ksize = 3;
};

/// Single LSTM cell applied per pixel with shared weights.
template <class T>
struct LstmCell {
  Mat<T> w_ih;  // 4*hidden x in   (gate order: i, f, g, o)
  Mat<T> w_hh;  // 4*hidden x hidden
  Mat<T> bias;  // 4*hidden x 1
  int hidden = 0;
};

namespace init {

template <class T>
Mat<T> uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = T(dist(rng));
  return m;
}

template <class T>
Mat<T> kaiming(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937& rng) {
  return uniform<T>(rows, cols, std::sqrt(6.0 / double(fan_in)), rng);
}

template <class T>
Dense<T> dense(int out, int in, std::mt19937& rng) {
  return {kaiming<T>(out, in, in, rng), Mat<T>::Zero(out, 1)};
}

template <class T>
Conv<T> conv(int out, int in, int ksize, std::mt19937& rng) {
  const Eigen::Index fan_in = Eigen::Index(in) * ksize * ksize;
  return {kaiming<T>(out, fan_in, fan_in, rng), Mat<T>::Zero(out, 1), ksize};
}

/// Forget-gate bias starts at +1 so early recurrent state is retained.
template <class T>
LstmCell<T> lstm(int hidden, int in, std::mt19937& rng) {
  const double bound = 1.0 / std::sqrt(double(hidden));
  LstmCell<T> cell;
  cell.w_ih = uniform<T>(4 * hidden, in, bound, rng);
  cell.w_hh = uniform<T>(4 * hidden, hidden, bound, rng);
  cell.bias = Mat<T>::Zero(4 * hidden, 1);
  cell.bias.block(hidden, 0, hidden, 1).setConstant(T(1));
  cell.hidden = hidden;
  return cell;
}

}  // namespace init

namespace ad {

template <class T>
struct DenseVars {
  Var<T> weight, bias;
};
template <class T>
struct ConvVars {
  Var<T> weight, bias;
  int ksize = 3;
};
template <class T>
struct LstmVars {
  Var<T> w_ih, w_hh, bias;
  int hidden = 0;
};

template <class T>
Var<T> linear(Var<T> x, const DenseVars<T>& d) {
  return add_bias(matmul(d.weight, x), d.bias);
}

template <class T>
Var<T> conv(Var<T> x, const ConvVars<T>& c) {
  return conv2d(x, c.weight, c.bias, c.ksize);
}

template <class T>
struct LstmState {
  Var<T> h, c;
};

template <class T>
LstmState<T> lstm_step(Var<T> x, const LstmState<T>& s, const LstmVars<T>& p) {
  Var<T> hc = lstm_cell(x, s.h, s.c, p.w_ih, p.w_hh, p.bias);
  return {slice_rows(hc, 0, p.hidden), slice_rows(hc, p.hidden, p.hidden)};
}

}  // namespace ad
}  // namespace nmvs
