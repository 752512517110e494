// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nmvs {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

namespace ad {

template <class T>
class Tape;

/// Lightweight handle to a node on a Tape. Copyable, trivially cheap.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Mat<T>& value() const { return tape->val(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int height() const { return tape->height(*this); }
  int width() const { return tape->width(*this); }
};

/// Reverse-mode autodiff tape over dense Eigen matrices.
///
/// Values are (rows, cols) matrices; spatially interpreted nodes carry an
/// (height, width) annotation and store pixels as columns, row-major pixel
/// index p = y*width + x, so each pixel's channel vector is one contiguous
/// column (column-major storage).
template <class T>
class Tape {
 public:
  Var<T> constant(Mat<T> value, int h = 0, int w = 0) {
    return push(std::move(value), /*needs_grad=*/false, h, w);
  }

  Var<T> param(const Mat<T>& value, int h = 0, int w = 0) {
    return push(value, /*needs_grad=*/true, h, w);
  }

  Var<T> make(Mat<T> value, bool needs_grad, int h = 0, int w = 0) {
    return push(std::move(value), needs_grad, h, w);
  }

  template <class F>
  void set_backprop(Var<T> v, F&& fn) {
    nodes_[v.id].backprop = std::forward<F>(fn);
  }

  const Mat<T>& val(Var<T> v) const { return nodes_[v.id].value; }
  bool needs(Var<T> v) const { return nodes_[v.id].needs_grad; }
  int height(Var<T> v) const { return nodes_[v.id].h; }
  int width(Var<T> v) const { return nodes_[v.id].w; }

  /// Gradient buffer of a node, allocated and zeroed on first access.
  Mat<T>& grad(Var<T> v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      track(n.grad.size());
    }
    return n.grad;
  }

  /// Gradient of a node that is known to have one (during backprop).
  const Mat<T>& grad_ref(Var<T> v) const { return nodes_[v.id].grad; }

  bool has_grad(Var<T> v) const { return nodes_[v.id].grad.size() != 0; }

  /// Runs reverse accumulation from `root`, which must be a 1x1 scalar.
  void backward(Var<T> root) {
    if (val(root).size() != 1)
      throw std::invalid_argument("backward: root must be a scalar node");
    grad(root).setConstant(T(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() != 0 && n.backprop) n.backprop(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t peak_bytes() const { return peak_bytes_; }

  void clear() {
    nodes_.clear();
    live_bytes_ = 0;
  }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    std::function<void(Tape&)> backprop;
    int h = 0, w = 0;
    bool needs_grad = false;
  };

  Var<T> push(Mat<T> value, bool needs_grad, int h, int w) {
    Node n;
    n.value = std::move(value);
    n.h = h;
    n.w = w;
    n.needs_grad = needs_grad;
    track(n.value.size());
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void track(Eigen::Index elems) {
    live_bytes_ += static_cast<std::size_t>(elems) * sizeof(T);
    if (live_bytes_ > peak_bytes_) peak_bytes_ = live_bytes_;
  }

  std::vector<Node> nodes_;
  std::size_t live_bytes_ = 0;
  std::size_t peak_bytes_ = 0;
};

}  // namespace ad
}  // namespace nmvs
