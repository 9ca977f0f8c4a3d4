#include "vecdraw/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "vecdraw/error.hpp"

namespace vecdraw {

void RasterConfig::validate() const {
  if (curve_samples_per_stroke < 2) throw ConfigError("curve_samples_per_stroke must be >= 2");
  if (!(antialias_width_px > 0.0)) throw ConfigError("antialias_width_px must be > 0");
  if (supersample_factor < 1) throw ConfigError("supersample_factor must be >= 1");
}

namespace {

struct Nearest {
  double distance = std::numeric_limits<double>::infinity();
  std::size_t segment = 0;
  double t = 0.0;  // position of the closest point along the segment
  Point closest;
};

Nearest nearest_on_polyline(Point p, std::span<const Point> poly) {
  Nearest best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
    const Point a = poly[s];
    const Point ab = poly[s + 1] - a;
    const Point ap = p - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Point q = a + t * ab;
    const double dx = p.x - q.x;
    const double dy = p.y - q.y;
    const double d2 = dx * dx + dy * dy;
    // Strict comparison: ties resolve to the first segment.
    if (d2 < best_d2) {
      best_d2 = d2;
      best.segment = s;
      best.t = t;
      best.closest = q;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

/// Inclusive pixel index range whose centres fall inside [lo, hi] on one axis.
std::pair<int, int> pixel_span(double lo, double hi, int size) {
  const double first = std::ceil(lo - 0.5);
  const double last = std::floor(hi - 0.5);
  const int a = static_cast<int>(std::clamp(first, 0.0, static_cast<double>(size)));
  const int b = static_cast<int>(std::clamp(last, -1.0, static_cast<double>(size - 1)));
  return {a, b};
}

struct CurveNearest {
  double distance = 0.0;
  double t = 0.0;  // curve parameter of the closest point
  Point closest;
};

struct PreparedStroke {
  std::vector<Point> polyline;  // pixel coordinates
  std::array<Point, Stroke::kMaxPoints> ctrl{};  // pixel coordinates
  std::size_t n_points = 0;
  double half_width = 0.0;
  std::array<double, 4> rgba{};
  int x_lo = 0, x_hi = -1, y_lo = 0, y_hi = -1;

  [[nodiscard]] bool touches(int x, int y) const {
    return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
  }
};

PreparedStroke prepare(const Stroke& stroke, const CanvasConfig& canvas, std::size_t samples,
                       double inflate_extra) {
  PreparedStroke ps;
  ps.polyline = flatten_stroke(stroke, samples);
  if (stroke.control_points.size() > Stroke::kMaxPoints) {
    throw ContractError("stroke has more than " + std::to_string(Stroke::kMaxPoints) + " points");
  }
  ps.n_points = stroke.control_points.size();
  for (std::size_t i = 0; i < ps.n_points; ++i) {
    ps.ctrl[i] = {stroke.control_points[i].x * canvas.width_px,
                  stroke.control_points[i].y * canvas.height_px};
  }
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (Point& p : ps.polyline) {
    p = {p.x * canvas.width_px, p.y * canvas.height_px};
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  ps.half_width = 0.5 * stroke.width_px;
  ps.rgba = stroke.color_rgba;
  const double inflate = ps.half_width + inflate_extra;
  std::tie(ps.x_lo, ps.x_hi) = pixel_span(min_x - inflate, max_x + inflate, canvas.width_px);
  std::tie(ps.y_lo, ps.y_hi) = pixel_span(min_y - inflate, max_y + inflate, canvas.height_px);
  return ps;
}

Point de_casteljau(std::array<Point, Stroke::kMaxPoints> pts, std::size_t n, double t) {
  for (std::size_t k = n; k-- > 1;) {
    for (std::size_t i = 0; i < k; ++i) pts[i] = (1.0 - t) * pts[i] + t * pts[i + 1];
  }
  return pts[0];
}

// Position, first and second derivative of the stroke's curve at t.
struct CurveJet {
  Point b, d1, d2;
};

CurveJet curve_jet(const PreparedStroke& ps, double t) {
  const std::size_t n = ps.n_points;
  CurveJet jet;
  jet.b = de_casteljau(ps.ctrl, n, t);
  if (n < 2) return jet;
  std::array<Point, Stroke::kMaxPoints> d{};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    d[i] = static_cast<double>(n - 1) * (ps.ctrl[i + 1] - ps.ctrl[i]);
  }
  jet.d1 = de_casteljau(d, n - 1, t);
  if (n < 3) return jet;
  std::array<Point, Stroke::kMaxPoints> dd{};
  for (std::size_t i = 0; i + 2 < n; ++i) dd[i] = static_cast<double>(n - 2) * (d[i + 1] - d[i]);
  jet.d2 = de_casteljau(dd, n - 2, t);
  return jet;
}

double squared_norm(Point p) { return p.x * p.x + p.y * p.y; }

// Closest point on the curve itself. The polyline supplies the starting
// parameter and Newton iterations on (B(t) - p) . B'(t) = 0 refine it, which
// keeps the distance field smooth in the control points.
CurveNearest nearest_on_curve(Point p, const PreparedStroke& ps) {
  const Nearest coarse = nearest_on_polyline(p, ps.polyline);
  const double denom = static_cast<double>(ps.polyline.size() - 1);
  const double t0 = std::clamp((static_cast<double>(coarse.segment) + coarse.t) / denom, 0.0, 1.0);
  double t = t0;
  for (int iter = 0; iter < 12; ++iter) {
    const CurveJet jet = curve_jet(ps, t);
    const Point r = jet.b - p;
    const double g = r.x * jet.d1.x + r.y * jet.d1.y;
    const double speed2 = squared_norm(jet.d1);
    double h = speed2 + r.x * jet.d2.x + r.y * jet.d2.y;
    if (!(h > 0.0)) h = speed2;
    if (!(h > 0.0)) break;
    const double next = std::clamp(t - g / h, 0.0, 1.0);
    const double step = std::abs(next - t);
    t = next;
    if (step < 1e-14) break;
  }
  CurveNearest out;
  out.t = t;
  out.closest = de_casteljau(ps.ctrl, ps.n_points, t);
  double d2 = squared_norm(p - out.closest);
  const Point start = de_casteljau(ps.ctrl, ps.n_points, t0);
  if (const double s2 = squared_norm(p - start); s2 < d2) {
    out.t = t0;
    out.closest = start;
    d2 = s2;
  }
  out.distance = std::sqrt(d2);
  return out;
}

std::vector<PreparedStroke> prepare_all(const Scene& scene, std::size_t samples,
                                        double inflate_extra) {
  std::vector<PreparedStroke> out;
  out.reserve(scene.strokes.size());
  for (const Stroke& s : scene.strokes) {
    if (s.control_points.empty()) throw ContractError("stroke without control points");
    out.push_back(prepare(s, scene.canvas, samples, inflate_extra));
  }
  return out;
}

// Edge profile: a Gaussian CDF whose slope at the stroke boundary is 1/aa,
// truncated at kEdgeSigmas standard deviations and rescaled to reach 0 and 1
// exactly. It is smooth enough that finite differences at sub-pixel steps
// agree with the analytic derivative.
constexpr double kEdgeSigmas = 5.0;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double edge_sigma(double aa) { return aa * kInvSqrt2Pi; }

/// Distance beyond the nominal stroke edge where coverage reaches zero.
double edge_reach(double aa) { return kEdgeSigmas * edge_sigma(aa); }

double phi_cdf(double s) { return 0.5 * std::erfc(-s * kInvSqrt2); }

/// Coverage as a function of `edge` = half width minus distance, in pixels.
double ramp_value(double edge, double aa) {
  const double s = edge / edge_sigma(aa);
  if (s <= -kEdgeSigmas) return 0.0;
  if (s >= kEdgeSigmas) return 1.0;
  const double lo = phi_cdf(-kEdgeSigmas);
  return std::clamp((phi_cdf(s) - lo) / (1.0 - 2.0 * lo), 0.0, 1.0);
}

/// d ramp_value / d edge.
double ramp_slope(double edge, double aa) {
  const double sigma = edge_sigma(aa);
  const double s = edge / sigma;
  if (s <= -kEdgeSigmas || s >= kEdgeSigmas) return 0.0;
  const double lo = phi_cdf(-kEdgeSigmas);
  return kInvSqrt2Pi * std::exp(-0.5 * s * s) / (sigma * (1.0 - 2.0 * lo));
}

// One stroke's contribution at one pixel, kept for the reverse sweep.
struct CoverageRecord {
  std::uint32_t pixel = 0;
  bool ramp = false;  // coverage strictly inside (0,1): geometry receives gradient
  double coverage = 0.0;
  double slope = 0.0;  // d coverage / d (half width - distance)
  CurveNearest nearest;
  Point centre;
  std::array<double, 3> under{};  // colour before this stroke was composited
};

}  // namespace

double edge_falloff_px(const RasterConfig& config) {
  return edge_reach(config.antialias_width_px);
}

double distance_to_polyline(Point p, std::span<const Point> polyline) {
  if (polyline.size() < 2) throw ContractError("polyline needs at least 2 points");
  return nearest_on_polyline(p, polyline).distance;
}

ImageTensor render(const Scene& scene, const RasterConfig& config) {
  config.validate();
  scene.canvas.validate();
  const double aa = config.antialias_width_px;
  const auto strokes =
      prepare_all(scene, static_cast<std::size_t>(config.curve_samples_per_stroke), edge_reach(aa) + 0.5);

  ImageTensor img = ImageTensor::filled(scene.canvas.height_px, scene.canvas.width_px,
                                        scene.canvas.background_rgb);
  for (const PreparedStroke& ps : strokes) {
    for (int y = ps.y_lo; y <= ps.y_hi; ++y) {
      for (int x = ps.x_lo; x <= ps.x_hi; ++x) {
        const Point centre{x + 0.5, y + 0.5};
        const double d = nearest_on_curve(centre, ps).distance;
        const double cov = ramp_value(ps.half_width - d, aa);
        if (cov <= 0.0) continue;
        const double beta = ps.rgba[3] * cov;
        for (int c = 0; c < 3; ++c) {
          double& v = img.at(y, x, c);
          v = v * (1.0 - beta) + ps.rgba[static_cast<std::size_t>(c)] * beta;
        }
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<double> render_pullback(const Scene& scene, const RasterConfig& config,
                                    const ImageTensor& dl_dpixels) {
  config.validate();
  scene.canvas.validate();
  if (dl_dpixels.height() != scene.canvas.height_px ||
      dl_dpixels.width() != scene.canvas.width_px) {
    throw ContractError("pixel gradient is " + std::to_string(dl_dpixels.height()) + "x" +
                        std::to_string(dl_dpixels.width()) + ", canvas is " +
                        std::to_string(scene.canvas.height_px) + "x" +
                        std::to_string(scene.canvas.width_px));
  }
  const double aa = config.antialias_width_px;
  const auto samples = static_cast<std::size_t>(config.curve_samples_per_stroke);
  const auto strokes = prepare_all(scene, samples, edge_reach(aa) + 0.5);
  const ParamLayout layout = make_layout(scene);
  std::vector<double> grad(layout.size(), 0.0);

  // Forward sweep, recording per-stroke coverage and the colour underneath.
  ImageTensor img = ImageTensor::filled(scene.canvas.height_px, scene.canvas.width_px,
                                        scene.canvas.background_rgb);
  std::vector<std::vector<CoverageRecord>> records(strokes.size());
  for (std::size_t k = 0; k < strokes.size(); ++k) {
    const PreparedStroke& ps = strokes[k];
    for (int y = ps.y_lo; y <= ps.y_hi; ++y) {
      for (int x = ps.x_lo; x <= ps.x_hi; ++x) {
        CoverageRecord rec;
        rec.centre = {x + 0.5, y + 0.5};
        rec.nearest = nearest_on_curve(rec.centre, ps);
        const double edge = ps.half_width - rec.nearest.distance;
        rec.coverage = ramp_value(edge, aa);
        if (rec.coverage <= 0.0) continue;
        rec.slope = ramp_slope(edge, aa);
        rec.ramp = rec.slope > 0.0;
        rec.pixel = static_cast<std::uint32_t>(y * scene.canvas.width_px + x);
        const double beta = ps.rgba[3] * rec.coverage;
        for (int c = 0; c < 3; ++c) {
          double& v = img.at(y, x, c);
          rec.under[static_cast<std::size_t>(c)] = v;
          v = v * (1.0 - beta) + ps.rgba[static_cast<std::size_t>(c)] * beta;
        }
        records[k].push_back(rec);
      }
    }
  }

  // Gradient w.r.t. the composited colour, masked where the output clamp bites.
  std::vector<double> g(dl_dpixels.data().begin(), dl_dpixels.data().end());
  auto composed = img.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (composed[i] < 0.0 || composed[i] > 1.0) g[i] = 0.0;
  }

  for (std::size_t k = strokes.size(); k-- > 0;) {
    const PreparedStroke& ps = strokes[k];
    const StrokeSlot& slot = layout.strokes[k];
    std::array<Point, Stroke::kMaxPoints> ctrl_grad{};
    double g_width = 0.0;
    std::array<double, 4> g_rgba{};
    const double alpha = ps.rgba[3];

    for (const CoverageRecord& rec : records[k]) {
      double* gp = g.data() + static_cast<std::size_t>(rec.pixel) * 3;
      const double beta = alpha * rec.coverage;
      double g_beta = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        g_beta += gp[c] * (ps.rgba[c] - rec.under[c]);
        g_rgba[c] += gp[c] * beta;
        gp[c] *= (1.0 - beta);
      }
      g_rgba[3] += g_beta * rec.coverage;
      if (!rec.ramp) continue;
      const double g_edge = g_beta * alpha * rec.slope;
      g_width += 0.5 * g_edge;
      const double d = rec.nearest.distance;
      if (d <= 0.0) continue;
      const double g_d = -g_edge;
      const Point dir = (1.0 / d) * (rec.nearest.closest - rec.centre);
      const auto basis = bernstein_weights(ps.n_points, rec.nearest.t);
      for (std::size_t j = 0; j < ps.n_points; ++j) {
        ctrl_grad[j] = ctrl_grad[j] + (g_d * basis[j]) * dir;
      }
    }

    for (std::size_t j = 0; j < slot.n_points; ++j) {
      grad[slot.points_offset + 2 * j] += ctrl_grad[j].x * scene.canvas.width_px;
      grad[slot.points_offset + 2 * j + 1] += ctrl_grad[j].y * scene.canvas.height_px;
    }
    grad[slot.width_offset] += g_width;
    for (std::size_t c = 0; c < 4; ++c) grad[slot.color_offset + c] += g_rgba[c];
  }
  return grad;
}

ImageTensor reference_render(const Scene& scene, const RasterConfig& config) {
  config.validate();
  scene.canvas.validate();
  const auto samples = static_cast<std::size_t>(config.curve_samples_per_stroke) * 4;
  const auto strokes = prepare_all(scene, samples, 1.0);
  const int f = config.supersample_factor;
  const double inv_f = 1.0 / f;
  const double inv_n = 1.0 / (static_cast<double>(f) * f);
  const auto& bg = scene.canvas.background_rgb;

  ImageTensor img(scene.canvas.height_px, scene.canvas.width_px);
  std::vector<const PreparedStroke*> active;
  for (int y = 0; y < scene.canvas.height_px; ++y) {
    for (int x = 0; x < scene.canvas.width_px; ++x) {
      active.clear();
      for (const PreparedStroke& ps : strokes) {
        if (ps.touches(x, y)) active.push_back(&ps);
      }
      if (active.empty()) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[static_cast<std::size_t>(c)];
        continue;
      }
      std::array<double, 3> acc{};
      for (int sy = 0; sy < f; ++sy) {
        for (int sx = 0; sx < f; ++sx) {
          const Point p{x + (sx + 0.5) * inv_f, y + (sy + 0.5) * inv_f};
          std::array<double, 3> col = bg;
          for (const PreparedStroke* ps : active) {
            if (nearest_on_polyline(p, ps->polyline).distance > ps->half_width) continue;
            const double a = ps->rgba[3];
            for (std::size_t c = 0; c < 3; ++c) col[c] = col[c] * (1.0 - a) + ps->rgba[c] * a;
          }
          for (std::size_t c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(acc[static_cast<std::size_t>(c)] * inv_n, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace vecdraw
