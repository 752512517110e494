// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>
#include <stdexcept>

#include "nmvs/core/ops.hpp"

// Confidence-blended reconstruction loss and image quality metrics.

namespace nmvs {

struct LossConfig {
  double lambda = 0.1;  // confidence penalty weight
};

// Keeps the RMS term differentiable at Q = 1 while perturbing the loss
// identities by far less than their 1e-6 tolerance.
inline constexpr double kRmsEps = 1e-12;

namespace ad {

/// L = mean |I - (pred*Q + I*(1-Q))| + lambda * rms(1 - Q).
/// `truth` and `pred` are (C x N); `q` is (1 x N), broadcast across channels.
/// Both norms are reduced per element so the loss is resolution independent.
template <class T>
Var<T> confidence_loss(Var<T> truth, Var<T> pred, Var<T> q, const LossConfig& cfg) {
  Tape<T>& tp = *truth.tape;
  if (tp.val(truth).rows() != tp.val(pred).rows() || tp.val(truth).cols() != tp.val(pred).cols())
    throw std::invalid_argument("confidence_loss: image shapes differ");
  if (tp.val(q).rows() != 1 || tp.val(q).cols() != tp.val(truth).cols())
    throw std::invalid_argument("confidence_loss: confidence must be 1 x pixels");
  if (cfg.lambda < 0) throw std::invalid_argument("confidence_loss: lambda must be >= 0");

  Var<T> one_minus_q = affine(q, T(-1), T(1));
  Var<T> blended = add(row_broadcast_mul(pred, q), row_broadcast_mul(truth, one_minus_q));
  Var<T> term1 = mean_all(abs_op(sub(truth, blended)));
  Var<T> term2 = sqrt_shifted(mean_all(square(one_minus_q)), T(kRmsEps));
  return add(term1, scale(term2, T(cfg.lambda)));
}

/// Mean absolute error; equals confidence_loss with Q = 1 and lambda = 0.
template <class T>
Var<T> plain_l1(Var<T> truth, Var<T> pred) {
  Tape<T>& tp = *truth.tape;
  if (tp.val(truth).rows() != tp.val(pred).rows() || tp.val(truth).cols() != tp.val(pred).cols())
    throw std::invalid_argument("plain_l1: image shapes differ");
  return mean_all(abs_op(sub(truth, pred)));
}

}  // namespace ad

/// Convenience forward-only evaluations on plain matrices.
double confidence_loss_value(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred,
                             const Eigen::MatrixXf& q, const LossConfig& cfg);
double plain_l1_value(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred);

/// 10*log10(peak^2 / MSE); identical images return +infinity.
double psnr(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred, double peak = 1.0);

/// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5,
/// C1 = 0.01^2, C2 = 0.03^2 at peak 1). Multi-channel images are converted
/// to grayscale by channel mean. Throws if the image is smaller than the
/// window.
double ssim(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred, int width, int height);

}  // namespace nmvs
