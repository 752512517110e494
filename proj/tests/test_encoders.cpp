// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "nmvs/encoders.hpp"
#include "test_util.hpp"

using namespace nmvs;
using namespace nmvs::ad;
using nmvs::test::finite_diff;
using nmvs::test::max_grad_rel_err;
using nmvs::test::random_mat;

TEST_CASE("positional encoding reference values") {
  PosEncodingConfig cfg{4, false};
  CHECK(cfg.dim() == 24);
  Vec<double> at_zero = positional_encode<double>(Vec3<double>::Zero(), cfg);
  for (int d = 0; d < 3; ++d)
    for (int l = 0; l < 4; ++l) {
      CHECK(at_zero(d * 8 + 2 * l) == 0.0);      // sin
      CHECK(at_zero(d * 8 + 2 * l + 1) == 1.0);  // cos
    }

  PosEncodingConfig one{1, false};
  Vec<double> v = positional_encode<double>(Vec3<double>(0.25, 0, 0), one);
  CHECK(v(0) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(v(1) == doctest::Approx(0.70710678).epsilon(1e-8));
}

TEST_CASE("positional encoding parity and norm bound") {
  std::mt19937 rng(21);
  PosEncodingConfig cfg{10, true};
  CHECK(cfg.dim() == 63);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int per = 21;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3<double> x(u(rng), u(rng), u(rng));
    const Vec<double> pos = positional_encode<double>(x, cfg);
    const Vec<double> neg = positional_encode<double>(Vec3<double>(-x), cfg);
    for (int d = 0; d < 3; ++d) {
      CHECK(neg(d * per) == doctest::Approx(-pos(d * per)));
      for (int l = 0; l < cfg.num_frequencies; ++l) {
        CHECK(neg(d * per + 1 + 2 * l) == doctest::Approx(-pos(d * per + 1 + 2 * l)));
        CHECK(neg(d * per + 2 + 2 * l) == doctest::Approx(pos(d * per + 2 + 2 * l)));
      }
    }
    CHECK(pos.norm() <= std::sqrt(6.0 * cfg.num_frequencies + 3.0) + 1e-9);
    CHECK(pos.allFinite());
  }
}

TEST_CASE("posenc op gradient matches finite differences") {
  std::mt19937 rng(22);
  PosEncodingConfig cfg{3, true};
  const Mat<double> x = random_mat<double>(3, 4, rng);

  auto loss = [&](const Mat<double>& p) {
    Tape<double> t;
    return square(posenc(t.constant(p), cfg)).value().sum();
  };
  Tape<double> t;
  Var<double> vx = t.param(x);
  t.backward(sum_all(square(posenc(vx, cfg))));
  Mat<double> fd = finite_diff<double>(x, loss, 1e-6);
  CHECK(max_grad_rel_err(t.grad(vx), fd) < 1e-6);
}

TEST_CASE("posenc op values match the scalar reference") {
  PosEncodingConfig cfg{5, true};
  Tape<double> t;
  Mat<double> x(3, 2);
  x << 0.1, -0.7, 0.4, 0.2, -0.9, 0.55;
  Var<double> enc = posenc(t.constant(x), cfg);
  for (int q = 0; q < 2; ++q) {
    const Vec<double> want = positional_encode<double>(Vec3<double>(x.col(q)), cfg);
    CHECK((enc.value().col(q) - want).norm() < 1e-12);
  }
}

TEST_CASE("unet output shape and determinism") {
  std::mt19937 rng(23);
  UNetParams<float> params = UNetParams<float>::init(rng);
  Tape<float> tape;
  UNetVars<float> uv = push_unet(tape, params);
  const Mat<float> image = random_mat<float>(3, 64 * 64, rng, 0.0, 1.0);
  Var<float> f1 = unet_forward(uv, tape.constant(image, 64, 64));
  CHECK(f1.rows() == kFeatureDim);
  CHECK(f1.cols() == 64 * 64);
  CHECK(f1.height() == 64);

  // Shared weights: the same image yields bitwise-identical features.
  Var<float> f2 = unet_forward(uv, tape.constant(image, 64, 64));
  CHECK(f1.value() == f2.value());
  CHECK(f1.value().allFinite());

  Mat<float> odd = random_mat<float>(3, 20 * 20, rng);
  CHECK_THROWS_AS(unet_forward(uv, tape.constant(odd, 20, 20)), std::invalid_argument);
}

TEST_CASE("unet is shift-covariant away from borders") {
  std::mt19937 rng(31);
  UNetParams<double> params = UNetParams<double>::init(rng);
  Tape<double> tape;
  UNetVars<double> uv = push_unet(tape, params);
  const int H = 48, W = 96, shift = 8;  // shift by the total stride
  Mat<double> base = random_mat<double>(3, H * W, rng, 0.0, 1.0);
  // Wrap-shift along x so shifted content is identical.
  Mat<double> shifted(3, H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      shifted.col(y * W + (x + shift) % W) = base.col(y * W + x);

  Var<double> fa = unet_forward(uv, tape.constant(base, H, W));
  Var<double> fb = unet_forward(uv, tape.constant(shifted, H, W));
  // Compare interior columns far from both borders.
  double worst = 0;
  for (int y = H / 2 - 4; y < H / 2 + 4; ++y)
    for (int x = 40; x < 48; ++x)
      worst = std::max(worst,
                       (fa.value().col(y * W + x) - fb.value().col(y * W + x + shift))
                           .cwiseAbs()
                           .maxCoeff());
  CHECK(worst < 1e-9);
}

TEST_CASE("unet input gradient matches finite differences") {
  std::mt19937 rng(29);
  UNetParams<float> params = UNetParams<float>::init(rng);
  const Mat<float> image = random_mat<float>(3, 8 * 8, rng, 0.0, 1.0);
  const Mat<float> probe = random_mat<float>(kFeatureDim, 8 * 8, rng);

  auto push_all = [&](Tape<float>& t) { return push_unet(t, params); };
  auto loss = [&](const Mat<float>& img) {
    Tape<float> t;
    UNetVars<float> uv = push_all(t);
    Var<float> f = unet_forward(uv, t.constant(img, 8, 8));
    return double(hadamard(f, t.constant(probe)).value().sum()) / double(probe.size());
  };

  Tape<float> t;
  UNetVars<float> uv = push_all(t);
  Var<float> vin = t.param(image, 8, 8);
  Var<float> out = scale(sum_all(hadamard(unet_forward(uv, vin), t.constant(probe))),
                         1.f / float(probe.size()));
  t.backward(out);

  // Spot-check a subset of input pixels at single precision.
  std::uniform_int_distribution<int> pick(0, 8 * 8 - 1);
  double worst = 0;
  for (int k = 0; k < 12; ++k) {
    const int p = pick(rng), c = k % 3;
    Mat<float> perturbed = image;
    const float eps = 5e-3f;
    perturbed(c, p) = image(c, p) + eps;
    const double up = loss(perturbed);
    perturbed(c, p) = image(c, p) - eps;
    const double down = loss(perturbed);
    const double fd = (up - down) / (2.0 * eps);
    const double an = double(t.grad(vin)(c, p));
    if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
  }
  CHECK(worst < 1e-2);
}
