// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "nmvs/core/tape.hpp"

namespace nmvs::test {

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-12});
}

/// Central finite difference of scalar-valued f at x, one entry at a time.
template <class T, class F>
Mat<T> finite_diff(const Mat<T>& x, F&& f, T eps) {
  Mat<T> g(x.rows(), x.cols());
  Mat<T> p = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const T h = eps * std::max(T(1), std::abs(x(i, j)));
      p(i, j) = x(i, j) + h;
      const double up = f(p);
      p(i, j) = x(i, j) - h;
      const double down = f(p);
      p(i, j) = x(i, j);
      g(i, j) = T((up - down) / (2.0 * double(h)));
    }
  return g;
}

/// Worst relative error between an analytic gradient and its finite
/// difference, ignoring entries that are tiny in both.
template <class T>
double max_grad_rel_err(const Mat<T>& analytic, const Mat<T>& numeric, double floor = 1e-9) {
  double worst = 0;
  for (Eigen::Index j = 0; j < analytic.cols(); ++j)
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
      const double a = double(analytic(i, j)), n = double(numeric(i, j));
      if (std::abs(a) < floor && std::abs(n) < floor) continue;
      worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
    }
  return worst;
}

template <class T>
Mat<T> random_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng, double lo = -1.0,
                  double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = T(dist(rng));
  return m;
}

/// Unique scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("nmvs_test_" + tag + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace nmvs::test
