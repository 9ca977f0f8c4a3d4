#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vecdraw/rng.hpp"

namespace vecdraw {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
  friend constexpr bool operator==(Point, Point) = default;
};

struct CanvasConfig {
  int width_px = 224;
  int height_px = 224;
  std::array<double, 3> background_rgb{1.0, 1.0, 1.0};

  /// Throws ConfigError unless both sides are >= 8 px and the background is in [0,1].
  void validate() const;
  friend bool operator==(const CanvasConfig&, const CanvasConfig&) = default;
};

/// One Bezier segment of degree control_points.size() - 1. Control points are
/// in normalized canvas coordinates: [0,1]^2 spans the canvas, values outside
/// it are legal and simply fall off the canvas when rendered.
struct Stroke {
  static constexpr std::size_t kMinPoints = 3;
  static constexpr std::size_t kMaxPoints = 5;

  std::vector<Point> control_points;
  double width_px = 1.0;
  std::array<double, 4> color_rgba{0.0, 0.0, 0.0, 1.0};

  [[nodiscard]] int degree() const { return static_cast<int>(control_points.size()) - 1; }
  friend bool operator==(const Stroke&, const Stroke&) = default;
};

/// Strokes are drawn in list order; later strokes composite over earlier ones.
struct Scene {
  std::vector<Stroke> strokes;
  CanvasConfig canvas;

  friend bool operator==(const Scene&, const Scene&) = default;
};

enum class ParamGroup : std::uint8_t { points = 0, width = 1, color = 2 };

/// Offsets of one stroke's scalars inside the flat parameter vector. Points are
/// stored interleaved (x0, y0, x1, y1, ...), followed by width, then RGBA.
struct StrokeSlot {
  std::size_t points_offset = 0;
  std::size_t n_points = 0;
  std::size_t width_offset = 0;
  std::size_t color_offset = 0;
};

struct ParamLayout {
  std::vector<StrokeSlot> strokes;
  std::vector<ParamGroup> groups;  // one tag per scalar

  [[nodiscard]] std::size_t size() const { return groups.size(); }
};

struct WidthBounds {
  double min_px = 0.5;
  double max_px = 12.0;
};

/// Random scene: point count uniform in {3,4,5}, first point uniform in the unit
/// square, each further point a +-0.05 step from its predecessor, width uniform
/// in [1,3] px, RGBA uniform in [0,1]^4. Throws ConfigError for n_strokes == 0.
Scene init_scene(std::size_t n_strokes, const CanvasConfig& canvas, Rng& rng);

ParamLayout make_layout(const Scene& scene);

std::pair<std::vector<double>, ParamLayout> scene_to_params(const Scene& scene);

Scene params_to_scene(std::span<const double> params, const ParamLayout& layout,
                      const CanvasConfig& canvas);

/// Projects colours onto [0,1] and widths onto [min_px, max_px]; points are
/// left alone. Throws ConfigError if min_px > max_px.
void clamp_params_inplace(std::span<double> params, const ParamLayout& layout,
                          const WidthBounds& bounds);

std::vector<double> clamp_params(std::vector<double> params, const ParamLayout& layout,
                                 const WidthBounds& bounds);

/// de Casteljau evaluation. Throws DomainError for t outside [0,1].
Point bezier_point(std::span<const Point> ctrl, double t);

/// Bernstein basis values B_{i,n}(t) for i = 0..n, n = n_points - 1.
std::vector<double> bernstein_weights(std::size_t n_points, double t);

/// Samples the stroke at t = i/(samples-1). Throws ContractError if samples < 2.
std::vector<Point> flatten_stroke(const Stroke& stroke, std::size_t samples);

}  // namespace vecdraw
