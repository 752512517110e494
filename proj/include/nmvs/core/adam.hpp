// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nmvs/core/tape.hpp"

namespace nmvs {

/// Adam with bias correction; per-tensor slots keyed by position.
template <class T>
struct Adam {
  double learning_rate = 5e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Mat<T>> m, v;

  void reset(const std::vector<Mat<T>*>& params) {
    m.clear();
    v.clear();
    step_count = 0;
    for (auto* p : params) {
      m.push_back(Mat<T>::Zero(p->rows(), p->cols()));
      v.push_back(Mat<T>::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<Mat<T>*>& params, const std::vector<const Mat<T>*>& grads) {
    if (params.size() != m.size() || grads.size() != m.size())
      throw std::invalid_argument("adam: parameter/slot count mismatch");
    ++step_count;
    const T c1 = T(1.0 / (1.0 - std::pow(beta1, double(step_count))));
    const T c2 = T(1.0 / (1.0 - std::pow(beta2, double(step_count))));
    const T b1 = T(beta1), b2 = T(beta2);
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * (*grads[i]);
      v[i].array() = b2 * v[i].array() + (T(1) - b2) * grads[i]->array().square();
      params[i]->array() -=
          T(learning_rate) * (m[i].array() * c1) / ((v[i].array() * c2).sqrt() + T(eps));
    }
  }
};

}  // namespace nmvs
