// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "nmvs/renderer.hpp"
#include "test_util.hpp"

using namespace nmvs;
using namespace nmvs::ad;
using nmvs::test::max_grad_rel_err;
using nmvs::test::random_mat;

namespace {

template <class T>
std::array<SourceView<T>, 3> frontal_views(Tape<T>& tape, std::mt19937& rng) {
  std::array<SourceView<T>, 3> views;
  for (int i = 0; i < 3; ++i) {
    views[i].intrinsics = CameraIntrinsics{20, 20, 8, 8, 16, 16};
    views[i].pose.translation = Vec3<double>(0.3 * i - 0.3, 0.1 * i, -3.0);
    // Smooth image and feature content for stable finite differences.
    Mat<T> img(3, 16 * 16), feat(kFeatureDim, 16 * 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c)
          img(c, y * 16 + x) = T(0.5 + 0.4 * std::sin(0.31 * x + 0.7 * c + i) *
                                           std::cos(0.22 * y - 0.3 * c));
        for (int c = 0; c < kFeatureDim; ++c)
          feat(c, y * 16 + x) = T(std::sin(0.1 * x * (1 + c % 3) + 0.2 * y + 0.05 * c + i));
      }
    views[i].image = tape.constant(img, 16, 16);
    views[i].features = tape.constant(feat, 16, 16);
  }
  return views;
}

}  // namespace

TEST_CASE("sample_color_features: exact color at a source pixel center") {
  Tape<double> tape;
  std::mt19937 rng(43);
  auto views = frontal_views<double>(tape, rng);

  // World point that projects to integer pixel (8, 8) of view 0: along its
  // optical axis at depth 2.
  Mat<double> pts(3, 2);
  pts.col(0) = views[0].pose.translation + Vec3<double>(0, 0, 2.0);
  pts.col(1) = views[0].pose.translation + Vec3<double>(0, 0, -1.0);  // behind every camera
  Var<double> x = tape.constant(pts, 1, 2);
  auto k = sample_color_features(x, views);

  CHECK(k[0].rows() == kColorSampleDim);
  const Eigen::Index center = 8 * 16 + 8;
  for (int c = 0; c < 3; ++c)
    CHECK(k[0].value()(c, 0) == doctest::Approx(views[0].image.value()(c, center)));
  // Behind the cameras: the whole color-feature sample is zero.
  for (int i = 0; i < 3; ++i) CHECK(k[i].value().col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_color_features gradient w.r.t. surface points") {
  std::mt19937 rng(45);
  Mat<double> pts(3, 3);
  pts << 0.12, -0.2, 0.31,  //
      0.05, 0.27, -0.17,    //
      -0.08, 0.1, 0.22;

  auto eval = [&](const Mat<double>& p) {
    Tape<double> t;
    auto views = frontal_views<double>(t, rng);
    auto k = sample_color_features(t.constant(p, 1, 3), views);
    return (k[0].value() + k[1].value() + k[2].value()).sum();
  };

  Tape<double> tape;
  auto views = frontal_views<double>(tape, rng);
  Var<double> x = tape.param(pts, 1, 3);
  auto k = sample_color_features(x, views);
  tape.backward(sum_all(add(add(k[0], k[1]), k[2])));

  Mat<double> fd = nmvs::test::finite_diff<double>(pts, eval, 1e-6);
  CHECK(max_grad_rel_err(tape.grad(x), fd) < 1e-4);
}

TEST_CASE("blend is invariant to view ordering") {
  std::mt19937 rng(47);
  RendererParams<double> params = RendererParams<double>::init(rng);
  const int N = 7;
  std::array<Mat<double>, 3> k;
  for (auto& m : k) m = random_mat<double>(kColorSampleDim, N, rng);
  const std::array<double, 3> b{0.6, 0.3, 0.1};

  auto run = [&](std::array<int, 3> order) {
    Tape<double> t;
    RendererVars<double> rv = push_renderer(t, params);
    std::array<Var<double>, 3> kv{t.constant(k[order[0]]), t.constant(k[order[1]]),
                                  t.constant(k[order[2]])};
    BlendOutput<double> out = blend(kv, {b[order[0]], b[order[1]], b[order[2]]}, rv);
    Mat<double> stacked(4, N);
    stacked.topRows(3) = out.rgb.value();
    stacked.row(3) = out.confidence.value();
    return stacked;
  };

  const Mat<double> base = run({0, 1, 2});
  CHECK((run({1, 2, 0}) - base).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((run({2, 0, 1}) - base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("blend: identical inputs collapse both variance terms") {
  std::mt19937 rng(49);
  RendererParams<double> params = RendererParams<double>::init(rng);
  Tape<double> tape;
  RendererVars<double> rv = push_renderer(tape, params);
  const Mat<double> sample = random_mat<double>(kColorSampleDim, 5, rng);
  std::array<Var<double>, 3> k{tape.constant(sample), tape.constant(sample),
                               tape.constant(sample)};
  BlendOutput<double> out = blend(k, {0.4, 0.35, 0.25}, rv);
  CHECK(out.variance.value().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.pooled_variance.value().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("blend outputs stay in [0,1] and differentiate w.r.t. parameters") {
  std::mt19937 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    RendererParams<float> params = RendererParams<float>::init(rng);
    Tape<float> t;
    RendererVars<float> rv = push_renderer(t, params);
    std::array<Var<float>, 3> k{t.constant(random_mat<float>(kColorSampleDim, 16, rng, -2, 2)),
                                t.constant(random_mat<float>(kColorSampleDim, 16, rng, -2, 2)),
                                t.constant(random_mat<float>(kColorSampleDim, 16, rng, -2, 2))};
    BlendOutput<float> out = blend(k, {0.5, 0.3, 0.2}, rv);
    CHECK(out.rgb.value().minCoeff() >= 0.f);
    CHECK(out.rgb.value().maxCoeff() <= 1.f);
    CHECK(out.confidence.value().minCoeff() >= 0.f);
    CHECK(out.confidence.value().maxCoeff() <= 1.f);
  }

  // Finite differences on a few blend-MLP weights at single precision.
  RendererParams<float> params = RendererParams<float>::init(rng);
  std::array<Mat<float>, 3> kraw;
  for (auto& m : kraw) m = random_mat<float>(kColorSampleDim, 12, rng, -1, 1);

  auto eval = [&](const RendererParams<float>& p) {
    Tape<float> t;
    RendererVars<float> rv = push_renderer(t, p);
    std::array<Var<float>, 3> k{t.constant(kraw[0]), t.constant(kraw[1]), t.constant(kraw[2])};
    return double(blend(k, {0.5, 0.3, 0.2}, rv).rgb.value().mean());
  };

  Tape<float> t;
  RendererVars<float> rv = push_renderer(t, params);
  std::array<Var<float>, 3> k{t.constant(kraw[0]), t.constant(kraw[1]), t.constant(kraw[2])};
  t.backward(mean_all(blend(k, {0.5, 0.3, 0.2}, rv).rgb));

  RendererParams<float> probe = params;
  std::uniform_int_distribution<int> pick_row(0, 63);
  std::uniform_int_distribution<int> pick_col(0, int(params.blend1.weight.cols()) - 1);
  double worst = 0;
  for (int s = 0; s < 10; ++s) {
    const int i = pick_row(rng), j = pick_col(rng);
    const float eps = 5e-3f;
    probe.blend1.weight(i, j) = params.blend1.weight(i, j) + eps;
    const double up = eval(probe);
    probe.blend1.weight(i, j) = params.blend1.weight(i, j) - eps;
    const double down = eval(probe);
    probe.blend1.weight(i, j) = params.blend1.weight(i, j);
    const double fd = (up - down) / (2.0 * eps);
    const double an = double(t.grad(rv.blend1.weight)(i, j));
    if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
  }
  CHECK(worst < 1e-2);
}
