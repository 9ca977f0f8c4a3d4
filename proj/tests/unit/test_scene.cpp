#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vecdraw/error.hpp"
#include "vecdraw/scene.hpp"

using namespace vecdraw;

TEST_CASE("init_scene draws 3-5 points per stroke") {
  Rng rng(7);
  const Scene s = init_scene(256, CanvasConfig{}, rng);
  REQUIRE(s.strokes.size() == 256);
  bool seen[6] = {};
  for (const Stroke& st : s.strokes) {
    CHECK(st.control_points.size() >= 3);
    CHECK(st.control_points.size() <= 5);
    seen[st.control_points.size()] = true;
    CHECK(st.width_px >= 1.0);
    CHECK(st.width_px <= 3.0);
    for (double c : st.color_rgba) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }
  CHECK((seen[3] && seen[4] && seen[5]));
}

TEST_CASE("init_scene is deterministic per seed") {
  Rng a(0), b(0), c(1);
  const Scene sa = init_scene(1, CanvasConfig{}, a);
  const Scene sb = init_scene(1, CanvasConfig{}, b);
  const Scene sc = init_scene(1, CanvasConfig{}, c);
  CHECK(sa == sb);
  CHECK_FALSE(sa == sc);
}

TEST_CASE("init_scene keeps control points near the unit square") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Scene s = init_scene(16, CanvasConfig{}, rng);
    for (const Stroke& st : s.strokes) {
      CHECK(st.control_points[0].x >= 0.0);
      CHECK(st.control_points[0].x <= 1.0);
      for (Point p : st.control_points) {
        CHECK(p.x >= -0.2);
        CHECK(p.x <= 1.2);
        CHECK(p.y >= -0.2);
        CHECK(p.y <= 1.2);
      }
    }
  }
}

TEST_CASE("init_scene rejects zero strokes and tiny canvases") {
  Rng rng(1);
  CHECK_THROWS_AS(init_scene(0, CanvasConfig{}, rng), ConfigError);
  CanvasConfig tiny;
  tiny.width_px = 4;
  CHECK_THROWS_AS(init_scene(1, tiny, rng), ConfigError);
}

TEST_CASE("parameter vector lengths") {
  Scene one;
  one.strokes.push_back(Stroke{{{0, 0}, {1, 0}, {1, 1}}, 2.0, {0.1, 0.2, 0.3, 0.4}});
  CHECK(scene_to_params(one).first.size() == 11);

  Scene big;
  for (int i = 0; i < 256; ++i) {
    big.strokes.push_back(Stroke{{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}}, 1.0, {}});
  }
  CHECK(scene_to_params(big).first.size() == 3840);
}

TEST_CASE("scene/params round trip is exact and every scalar has one group") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Scene s = init_scene(1 + seed * 7, CanvasConfig{}, rng);
    const auto [params, layout] = scene_to_params(s);
    CHECK(layout.groups.size() == params.size());
    std::size_t points = 0, widths = 0, colors = 0;
    for (ParamGroup g : layout.groups) {
      points += g == ParamGroup::points;
      widths += g == ParamGroup::width;
      colors += g == ParamGroup::color;
    }
    CHECK(widths == s.strokes.size());
    CHECK(colors == 4 * s.strokes.size());
    CHECK(points + widths + colors == params.size());
    CHECK(params_to_scene(params, layout, s.canvas) == s);
  }
}

TEST_CASE("params_to_scene rejects a mismatched vector") {
  Rng rng(3);
  const Scene s = init_scene(2, CanvasConfig{}, rng);
  auto [params, layout] = scene_to_params(s);
  params.pop_back();
  CHECK_THROWS_AS(params_to_scene(params, layout, s.canvas), ContractError);
}

TEST_CASE("clamp_params") {
  Scene s;
  s.strokes.push_back(Stroke{{{-3, 2}, {1, 0}, {1, 1}}, 0.2, {1.4, -0.1, 0.5, 0.7}});
  auto [params, layout] = scene_to_params(s);
  const auto clamped = clamp_params(params, layout, WidthBounds{0.5, 12.0});
  const Scene c = params_to_scene(clamped, layout, s.canvas);
  CHECK(c.strokes[0].color_rgba[0] == 1.0);
  CHECK(c.strokes[0].color_rgba[1] == 0.0);
  CHECK(c.strokes[0].width_px == 0.5);
  CHECK(c.strokes[0].control_points == s.strokes[0].control_points);

  SUBCASE("in-bounds vector is unchanged") {
    const auto twice = clamp_params(clamped, layout, WidthBounds{});
    CHECK(twice == clamped);
  }
  SUBCASE("inverted bounds") {
    CHECK_THROWS_AS(clamp_params(params, layout, WidthBounds{3.0, 2.0}), ConfigError);
  }
}

TEST_CASE("clamp_params postcondition on random vectors") {
  Rng rng(11);
  const Scene s = init_scene(40, CanvasConfig{}, rng);
  auto [params, layout] = scene_to_params(s);
  for (double& p : params) p = rng.uniform(-20.0, 20.0);
  const WidthBounds b{0.5, 12.0};
  const auto out = clamp_params(params, layout, b);
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (layout.groups[i]) {
      case ParamGroup::points:
        CHECK(out[i] == params[i]);
        break;
      case ParamGroup::width:
        CHECK(out[i] >= b.min_px);
        CHECK(out[i] <= b.max_px);
        break;
      case ParamGroup::color:
        CHECK(out[i] >= 0.0);
        CHECK(out[i] <= 1.0);
        break;
    }
  }
}

TEST_CASE("bezier_point") {
  const std::vector<Point> quad{{0, 0}, {1, 0}, {1, 1}};
  const Point mid = bezier_point(quad, 0.5);
  CHECK(mid.x == doctest::Approx(0.75));
  CHECK(mid.y == doctest::Approx(0.25));
  CHECK(bezier_point(quad, 0.0) == quad[0]);
  CHECK(bezier_point(quad, 1.0) == quad[2]);

  const std::vector<Point> arch{{0, 0}, {0.5, 1}, {1, 0}};
  CHECK(bezier_point(arch, 0.5).x == doctest::Approx(0.5));
  CHECK(bezier_point(arch, 0.5).y == doctest::Approx(0.5));

  CHECK_THROWS_AS(bezier_point(quad, 1.5), DomainError);
  CHECK_THROWS_AS(bezier_point(quad, -0.01), DomainError);
}

TEST_CASE("bezier_point is affine equivariant") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(3, 5));
    std::vector<Point> ctrl(n);
    for (Point& p : ctrl) p = {rng.uniform(-1, 2), rng.uniform(-1, 2)};
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2), c = rng.uniform(-2, 2),
                 d = rng.uniform(-2, 2), e = rng.uniform(-5, 5), f = rng.uniform(-5, 5);
    auto map = [&](Point p) { return Point{a * p.x + b * p.y + e, c * p.x + d * p.y + f}; };
    std::vector<Point> mapped;
    for (Point p : ctrl) mapped.push_back(map(p));
    const double t = rng.uniform();
    const Point lhs = bezier_point(mapped, t);
    const Point rhs = map(bezier_point(ctrl, t));
    CHECK(std::abs(lhs.x - rhs.x) < 1e-9);
    CHECK(std::abs(lhs.y - rhs.y) < 1e-9);
  }
}

TEST_CASE("bernstein weights reproduce de Casteljau") {
  Rng rng(9);
  for (std::size_t n = 3; n <= 5; ++n) {
    std::vector<Point> ctrl(n);
    for (Point& p : ctrl) p = {rng.uniform(), rng.uniform()};
    for (double t : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
      const auto w = bernstein_weights(n, t);
      Point sum{};
      for (std::size_t i = 0; i < n; ++i) sum = sum + w[i] * ctrl[i];
      const Point ref = bezier_point(ctrl, t);
      CHECK(std::abs(sum.x - ref.x) < 1e-12);
      CHECK(std::abs(sum.y - ref.y) < 1e-12);
    }
  }
}

TEST_CASE("flatten_stroke") {
  const Stroke quad{{{0, 0}, {1, 0}, {1, 1}}, 1.0, {}};
  const auto two = flatten_stroke(quad, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Point{0, 0});
  CHECK(two[1] == Point{1, 1});

  const auto three = flatten_stroke(quad, 3);
  CHECK(three[1].x == doctest::Approx(0.75));
  CHECK(three[1].y == doctest::Approx(0.25));

  CHECK_THROWS_AS(flatten_stroke(quad, 1), ContractError);
}

TEST_CASE("chord length grows with the sample count") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Scene s = testing::random_scene(rng, 1, 64);
    double previous = 0.0;
    for (std::size_t samples : {2, 4, 8, 16}) {
      const auto poly = flatten_stroke(s.strokes[0], samples);
      double len = 0.0;
      for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
        len += std::hypot(poly[i + 1].x - poly[i].x, poly[i + 1].y - poly[i].y);
      }
      CHECK(len >= previous - 1e-12);
      previous = len;
    }
  }
}
