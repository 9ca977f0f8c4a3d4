#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vecdraw/augment.hpp"
#include "vecdraw/error.hpp"

using namespace vecdraw;

namespace {

constexpr std::array<double, 3> kWhite{1.0, 1.0, 1.0};

AugmentConfig identity_config(int size) {
  AugmentConfig cfg;
  cfg.distortion_scale = 0.0;
  cfg.crop_scale_range = {1.0, 1.0};
  cfg.out_size = size;
  return cfg;
}

/// The affine part of warp_image only: warp(X) - warp(0).
ImageTensor warp_linear(const ImageTensor& img, const Homography& h, int out) {
  ImageTensor a = warp_image(img, h, out, kWhite);
  const ImageTensor b = warp_image(ImageTensor(img.height(), img.width()), h, out, kWhite);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] -= b.data()[i];
  return a;
}

}  // namespace

TEST_CASE("homography basics") {
  const Homography id = Homography::identity();
  const Point p = id.apply({3.5, -2.0});
  CHECK(p.x == 3.5);
  CHECK(p.y == -2.0);
  CHECK(id.determinant() == 1.0);

  const std::array<Point, 4> from{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}};
  const std::array<Point, 4> to{{{1, 2}, {12, 1}, {11, 13}, {-1, 9}}};
  const Homography h = Homography::from_correspondences(from, to);
  for (std::size_t i = 0; i < 4; ++i) {
    const Point q = h.apply(from[i]);
    CHECK(q.x == doctest::Approx(to[i].x).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(to[i].y).epsilon(1e-12));
  }
  CHECK(h(2, 2) == doctest::Approx(1.0));

  const Homography back = Homography::from_correspondences(to, from);
  const Point r = (back * h).apply({4.0, 7.0});
  CHECK(r.x == doctest::Approx(4.0));
  CHECK(r.y == doctest::Approx(7.0));

  const Homography behind({1, 0, 0, 0, 1, 0, 0, 0, -1});
  Point out{9, 9};
  CHECK_FALSE(behind.apply({1, 1}, out));
  CHECK(out.x == 9);
}

TEST_CASE("augment config validation") {
  AugmentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_copies = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.crop_scale_range = {0.9, 0.7};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.crop_scale_range = {0.0, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.distortion_scale = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("degenerate config samples identity homographies") {
  Rng rng(3);
  const auto hs = sample_augmentations(identity_config(32), 32, 32, rng);
  REQUIRE(hs.size() == 8);
  for (const Homography& h : hs) {
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(h.matrix()[i] == doctest::Approx(Homography::identity().matrix()[i]));
    }
  }

  SUBCASE("with a resize it is a pure scaling") {
    AugmentConfig cfg = identity_config(64);
    Rng r2(4);
    const Homography h = sample_augmentations(cfg, 32, 32, r2).front();
    CHECK(h(0, 0) == doctest::Approx(0.5));
    CHECK(h(1, 1) == doctest::Approx(0.5));
    CHECK(h(0, 1) == doctest::Approx(0.0));
    CHECK(h(2, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("sample_augmentations count and determinism") {
  AugmentConfig cfg;
  Rng a(11), b(11), c(12);
  const auto ha = sample_augmentations(cfg, 224, 224, a);
  CHECK(ha.size() == 8);
  CHECK(ha == sample_augmentations(cfg, 224, 224, b));
  CHECK(ha != sample_augmentations(cfg, 224, 224, c));
  cfg.n_copies = 3;
  CHECK(sample_augmentations(cfg, 224, 224, a).size() == 3);
  for (const Homography& h : ha) CHECK(std::abs(h.determinant()) > 1e-9);
}

TEST_CASE("crop window stays inside the image") {
  AugmentConfig cfg;
  cfg.distortion_scale = 0.0;
  cfg.crop_aspect_range = {0.5, 2.0};
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    for (const Homography& h : sample_augmentations(cfg, 100, 60, rng)) {
      const Point tl = h.apply({-0.5, -0.5});
      const Point br = h.apply({cfg.out_size - 0.5, cfg.out_size - 0.5});
      CHECK(tl.x >= -0.5 - 1e-9);
      CHECK(tl.y >= -0.5 - 1e-9);
      CHECK(br.x <= 60 - 0.5 + 1e-9);
      CHECK(br.y <= 100 - 0.5 + 1e-9);
    }
  }
}

TEST_CASE("warp_image examples") {
  Rng rng(6);
  const ImageTensor img = testing::random_image(rng, 16, 16);

  SUBCASE("identity is exact") {
    CHECK(warp_image(img, Homography::identity(), 16, kWhite) == img);
  }
  SUBCASE("2x upscale of a constant stays constant") {
    const std::array<double, 3> c{0.3, 0.6, 0.9};
    const ImageTensor flat = ImageTensor::filled(16, 16, c);
    const Homography up({0.5, 0, -0.25, 0, 0.5, -0.25, 0, 0, 1});
    const ImageTensor out = warp_image(flat, up, 32, kWhite);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          CHECK(out.at(y, x, ch) == doctest::Approx(c[static_cast<std::size_t>(ch)]).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("everything out of bounds gives the fill colour") {
    const std::array<double, 3> fill{0.1, 0.2, 0.3};
    const Homography away({1, 0, 1000, 0, 1, 1000, 0, 0, 1});
    const ImageTensor out = warp_image(img, away, 8, fill);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        CHECK(out.at(y, x, 0) == 0.1);
        CHECK(out.at(y, x, 2) == 0.3);
      }
    }
  }
  SUBCASE("singular homography is rejected") {
    const Homography flat({1, 0, 0, 1, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(warp_image(img, flat, 8, kWhite), ContractError);
  }
  SUBCASE("half-pixel shift averages neighbours") {
    const Homography shift({1, 0, 0.5, 0, 1, 0, 0, 0, 1});
    const ImageTensor out = warp_image(img, shift, 16, kWhite);
    CHECK(out.at(4, 3, 1) == doctest::Approx(0.5 * (img.at(4, 3, 1) + img.at(4, 4, 1))));
  }
}

TEST_CASE("warp_pullback trivial cases") {
  Rng rng(7);
  std::vector<Homography> hs = sample_augmentations(AugmentConfig{}, 16, 16, rng);
  const ImageTensor zero = warp_pullback(16, 16, hs[0], 224, ImageTensor(224, 224));
  for (double v : zero.data()) CHECK(v == 0.0);

  const ImageTensor g = testing::random_image(rng, 16, 16, -1, 1);
  CHECK(warp_pullback(16, 16, Homography::identity(), 16, g) == g);

  CHECK_THROWS_AS(warp_pullback(16, 16, Homography::identity(), 16, ImageTensor(8, 8)),
                  ContractError);
}

TEST_CASE("warp_pullback matches finite differences on a probe loss") {
  Rng rng(8);
  AugmentConfig cfg;
  cfg.out_size = 16;
  const Homography h = sample_augmentations(cfg, 16, 16, rng).front();
  const ImageTensor img = testing::random_image(rng, 16, 16);
  const ImageTensor probe = testing::random_image(rng, 16, 16, -1, 1);
  const ImageTensor analytic = warp_pullback(16, 16, h, 16, probe);
  std::vector<double> x(img.data().begin(), img.data().end());
  auto f = [&](const std::vector<double>& v) {
    ImageTensor t(16, 16);
    std::copy(v.begin(), v.end(), t.data().begin());
    return dot(warp_image(t, h, 16, kWhite), probe);
  };
  const auto check = testing::compare_gradient(
      f, x, std::vector<double>(analytic.data().begin(), analytic.data().end()), 1e-3, 1e-3, 1e-6);
  CHECK(check.checked > 100);
  CHECK(check.passed == check.checked);
}

TEST_CASE("warp_pullback is the adjoint of the linear part of warp_image") {
  Rng rng(9);
  for (const int out : {16, 32, 48}) {
    AugmentConfig cfg;
    cfg.out_size = out;
    for (const Homography& h : sample_augmentations(cfg, 32, 32, rng)) {
      const ImageTensor x = testing::random_image(rng, 32, 32);
      const ImageTensor g = testing::random_image(rng, out, out, -1, 1);
      const double lhs = dot(warp_linear(x, h, out), g);
      const double rhs = dot(x, warp_pullback(32, 32, h, out, g));
      CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("augment_batch and its pullback") {
  Rng rng(10);
  const ImageTensor img = testing::random_image(rng, 24, 24);

  SUBCASE("one identity copy returns the image") {
    AugmentConfig cfg = identity_config(24);
    cfg.n_copies = 1;
    const Homography id = Homography::identity();
    const auto batch = augment_batch(img, std::span(&id, 1), cfg);
    REQUIRE(batch.size() == 1);
    CHECK(batch[0] == img);
  }

  AugmentConfig cfg;
  cfg.out_size = 20;
  const auto hs = sample_augmentations(cfg, 24, 24, rng);
  const auto batch = augment_batch(img, hs, cfg);
  REQUIRE(batch.size() == hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    CHECK(batch[i] == warp_image(img, hs[i], 20, cfg.fill_rgb));
  }

  SUBCASE("gradient on copy 0 only") {
    std::vector<ImageTensor> grads(hs.size(), ImageTensor(20, 20));
    grads[0] = testing::random_image(rng, 20, 20, -1, 1);
    CHECK(augment_pullback(24, 24, hs, cfg, grads) == warp_pullback(24, 24, hs[0], 20, grads[0]));
  }

  SUBCASE("linear in the copy gradients") {
    std::vector<ImageTensor> g1, g2, g12;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      g1.push_back(testing::random_image(rng, 20, 20, -1, 1));
      g2.push_back(testing::random_image(rng, 20, 20, -1, 1));
      ImageTensor s = g1.back();
      for (std::size_t k = 0; k < s.size(); ++k) s.data()[k] += g2.back().data()[k];
      g12.push_back(std::move(s));
    }
    ImageTensor sum = augment_pullback(24, 24, hs, cfg, g1);
    const ImageTensor p2 = augment_pullback(24, 24, hs, cfg, g2);
    for (std::size_t k = 0; k < sum.size(); ++k) sum.data()[k] += p2.data()[k];
    CHECK(max_abs_diff(augment_pullback(24, 24, hs, cfg, g12), sum) < 1e-6);
  }

  SUBCASE("copy count mismatch is a contract error") {
    std::vector<ImageTensor> grads(hs.size() - 1, ImageTensor(20, 20));
    CHECK_THROWS_AS(augment_pullback(24, 24, hs, cfg, grads), ContractError);
  }
}
