// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include "nmvs/objective.hpp"

#include <cmath>
#include <vector>

namespace nmvs {

double confidence_loss_value(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred,
                             const Eigen::MatrixXf& q, const LossConfig& cfg) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("confidence_loss: image shapes differ");
  if (q.rows() != 1 || q.cols() != truth.cols())
    throw std::invalid_argument("confidence_loss: confidence must be 1 x pixels");
  double term1 = 0;
  for (Eigen::Index p = 0; p < truth.cols(); ++p)
    for (Eigen::Index c = 0; c < truth.rows(); ++c) {
      const double blend = double(pred(c, p)) * q(0, p) + double(truth(c, p)) * (1.0 - q(0, p));
      term1 += std::abs(double(truth(c, p)) - blend);
    }
  term1 /= double(truth.size());
  const double msq = (1.0 - q.cast<double>().array()).square().mean();
  return term1 + cfg.lambda * std::sqrt(msq + kRmsEps);
}

double plain_l1_value(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("plain_l1: image shapes differ");
  return (truth.cast<double>() - pred.cast<double>()).cwiseAbs().mean();
}

double psnr(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred, double peak) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("psnr: image shapes differ");
  const double mse = (truth.cast<double>() - pred.cast<double>()).array().square().mean();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Eigen::MatrixXf& truth, const Eigen::MatrixXf& pred, int width, int height) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("ssim: image shapes differ");
  if (truth.cols() != Eigen::Index(width) * height)
    throw std::invalid_argument("ssim: dimensions do not match the pixel count");
  constexpr int kWindow = 11, kHalf = 5;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  if (width < kWindow || height < kWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  Eigen::VectorXd x = truth.colwise().mean().cast<double>();
  Eigen::VectorXd y = pred.colwise().mean().cast<double>();

  double kernel[kWindow];
  double ksum = 0;
  for (int i = 0; i < kWindow; ++i) {
    kernel[i] = std::exp(-0.5 * (i - kHalf) * (i - kHalf) / (kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  double total = 0;
  Eigen::Index count = 0;
  for (int cy = kHalf; cy < height - kHalf; ++cy)
    for (int cx = kHalf; cx < width - kHalf; ++cx) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int dy = -kHalf; dy <= kHalf; ++dy)
        for (int dx = -kHalf; dx <= kHalf; ++dx) {
          const double w = kernel[dy + kHalf] * kernel[dx + kHalf];
          const Eigen::Index p = Eigen::Index(cy + dy) * width + (cx + dx);
          mx += w * x(p);
          my += w * y(p);
          mxx += w * x(p) * x(p);
          myy += w * y(p) * y(p);
          mxy += w * x(p) * y(p);
        }
      const double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
      total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++count;
    }
  return total / double(count);
}

}  // namespace nmvs
