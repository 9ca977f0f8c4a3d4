#include "vecdraw/scene.hpp"

#include <algorithm>
#include <string>

#include "vecdraw/error.hpp"

namespace vecdraw {

void CanvasConfig::validate() const {
  if (width_px < 8 || height_px < 8) {
    throw ConfigError("canvas must be at least 8x8 px, got " + std::to_string(width_px) + "x" +
                      std::to_string(height_px));
  }
  for (double c : background_rgb) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("background colour must lie in [0,1]");
  }
}

Scene init_scene(std::size_t n_strokes, const CanvasConfig& canvas, Rng& rng) {
  if (n_strokes == 0) throw ConfigError("stroke count must be at least 1");
  canvas.validate();

  constexpr double kStep = 0.05;
  Scene scene;
  scene.canvas = canvas;
  scene.strokes.reserve(n_strokes);
  for (std::size_t s = 0; s < n_strokes; ++s) {
    Stroke stroke;
    const auto n_points = static_cast<std::size_t>(
        rng.uniform_int(Stroke::kMinPoints, Stroke::kMaxPoints));
    Point p{rng.uniform(), rng.uniform()};
    stroke.control_points.push_back(p);
    for (std::size_t i = 1; i < n_points; ++i) {
      p = p + Point{rng.uniform(-kStep, kStep), rng.uniform(-kStep, kStep)};
      stroke.control_points.push_back(p);
    }
    stroke.width_px = rng.uniform(1.0, 3.0);
    for (double& c : stroke.color_rgba) c = rng.uniform();
    scene.strokes.push_back(std::move(stroke));
  }
  return scene;
}

ParamLayout make_layout(const Scene& scene) {
  ParamLayout layout;
  layout.strokes.reserve(scene.strokes.size());
  std::size_t offset = 0;
  for (const Stroke& stroke : scene.strokes) {
    StrokeSlot slot;
    slot.n_points = stroke.control_points.size();
    slot.points_offset = offset;
    offset += 2 * slot.n_points;
    slot.width_offset = offset;
    offset += 1;
    slot.color_offset = offset;
    offset += 4;
    layout.groups.insert(layout.groups.end(), 2 * slot.n_points, ParamGroup::points);
    layout.groups.push_back(ParamGroup::width);
    layout.groups.insert(layout.groups.end(), 4, ParamGroup::color);
    layout.strokes.push_back(slot);
  }
  return layout;
}

std::pair<std::vector<double>, ParamLayout> scene_to_params(const Scene& scene) {
  ParamLayout layout = make_layout(scene);
  std::vector<double> params(layout.size());
  for (std::size_t s = 0; s < scene.strokes.size(); ++s) {
    const Stroke& stroke = scene.strokes[s];
    const StrokeSlot& slot = layout.strokes[s];
    for (std::size_t i = 0; i < slot.n_points; ++i) {
      params[slot.points_offset + 2 * i] = stroke.control_points[i].x;
      params[slot.points_offset + 2 * i + 1] = stroke.control_points[i].y;
    }
    params[slot.width_offset] = stroke.width_px;
    std::copy(stroke.color_rgba.begin(), stroke.color_rgba.end(),
              params.begin() + static_cast<std::ptrdiff_t>(slot.color_offset));
  }
  return {std::move(params), std::move(layout)};
}

Scene params_to_scene(std::span<const double> params, const ParamLayout& layout,
                      const CanvasConfig& canvas) {
  if (params.size() != layout.size()) {
    throw ContractError("parameter vector length " + std::to_string(params.size()) +
                        " does not match layout size " + std::to_string(layout.size()));
  }
  Scene scene;
  scene.canvas = canvas;
  scene.strokes.reserve(layout.strokes.size());
  for (const StrokeSlot& slot : layout.strokes) {
    Stroke stroke;
    stroke.control_points.resize(slot.n_points);
    for (std::size_t i = 0; i < slot.n_points; ++i) {
      stroke.control_points[i] = {params[slot.points_offset + 2 * i],
                                  params[slot.points_offset + 2 * i + 1]};
    }
    stroke.width_px = params[slot.width_offset];
    for (std::size_t c = 0; c < 4; ++c) stroke.color_rgba[c] = params[slot.color_offset + c];
    scene.strokes.push_back(std::move(stroke));
  }
  return scene;
}

void clamp_params_inplace(std::span<double> params, const ParamLayout& layout,
                          const WidthBounds& bounds) {
  if (bounds.min_px > bounds.max_px) {
    throw ConfigError("width bounds inverted: min " + std::to_string(bounds.min_px) + " > max " +
                      std::to_string(bounds.max_px));
  }
  if (params.size() != layout.size()) throw ContractError("parameter vector/layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    switch (layout.groups[i]) {
      case ParamGroup::points:
        break;
      case ParamGroup::width:
        params[i] = std::clamp(params[i], bounds.min_px, bounds.max_px);
        break;
      case ParamGroup::color:
        params[i] = std::clamp(params[i], 0.0, 1.0);
        break;
    }
  }
}

std::vector<double> clamp_params(std::vector<double> params, const ParamLayout& layout,
                                 const WidthBounds& bounds) {
  clamp_params_inplace(params, layout, bounds);
  return params;
}

Point bezier_point(std::span<const Point> ctrl, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("Bezier parameter t must lie in [0,1]");
  if (ctrl.empty()) throw ContractError("Bezier curve needs at least one control point");
  std::array<Point, Stroke::kMaxPoints> work{};
  std::vector<Point> heap;
  std::span<Point> w;
  if (ctrl.size() <= work.size()) {
    w = std::span<Point>(work.data(), ctrl.size());
  } else {
    heap.resize(ctrl.size());
    w = heap;
  }
  std::copy(ctrl.begin(), ctrl.end(), w.begin());
  for (std::size_t level = ctrl.size() - 1; level > 0; --level) {
    for (std::size_t i = 0; i < level; ++i) w[i] = (1.0 - t) * w[i] + t * w[i + 1];
  }
  return w[0];
}

std::vector<double> bernstein_weights(std::size_t n_points, double t) {
  if (n_points == 0) return {};
  const std::size_t n = n_points - 1;
  std::vector<double> b(n_points, 0.0);
  b[0] = 1.0;
  // Pascal-style build-up keeps every entry a convex combination.
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t i = k; i > 0; --i) b[i] = (1.0 - t) * b[i] + t * b[i - 1];
    b[0] *= (1.0 - t);
  }
  return b;
}

std::vector<Point> flatten_stroke(const Stroke& stroke, std::size_t samples) {
  if (samples < 2) throw ContractError("flatten_stroke needs at least 2 samples");
  std::vector<Point> out;
  out.reserve(samples);
  const double denom = static_cast<double>(samples - 1);
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = i + 1 == samples ? 1.0 : static_cast<double>(i) / denom;
    out.push_back(bezier_point(stroke.control_points, t));
  }
  return out;
}

}  // namespace vecdraw
