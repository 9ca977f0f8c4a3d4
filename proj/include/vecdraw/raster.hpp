#pragma once

#include <span>
#include <vector>

#include "vecdraw/image.hpp"
#include "vecdraw/scene.hpp"

namespace vecdraw {

struct RasterConfig {
  int curve_samples_per_stroke = 32;
  double antialias_width_px = 1.0;
  int supersample_factor = 16;  // reference_render only

  void validate() const;
};

/// Minimum Euclidean distance from `p` to any segment of `polyline`.
/// Throws ContractError for fewer than 2 points.
double distance_to_polyline(Point p, std::span<const Point> polyline);

/// Distance from the nominal stroke edge (d = w/2) beyond which coverage is
/// exactly 0 outside and exactly 1 inside.
double edge_falloff_px(const RasterConfig& config);

/// Antialiased stroke rendering. A stroke covers a pixel centre at distance d
/// from its curve by a smooth edge profile of (w/2 - d) whose slope at the
/// edge is 1/a, a being the antialias width; see edge_falloff_px for its
/// support. Strokes are composited "over" the background in list order.
ImageTensor render(const Scene& scene, const RasterConfig& config);

/// Vector-Jacobian product of render(): maps dL/dpixels onto dL/dparams in the
/// order of make_layout(scene). At clamp corners and equidistant segments the
/// derivative of the interior / first-found branch is used.
std::vector<double> render_pullback(const Scene& scene, const RasterConfig& config,
                                    const ImageTensor& dl_dpixels);

/// Slow ground-truth renderer: hard coverage (d <= w/2) evaluated on a
/// supersample_factor^2 grid of subpixel samples per pixel and box filtered.
/// Curves are flattened four times finer than in render().
ImageTensor reference_render(const Scene& scene, const RasterConfig& config);

}  // namespace vecdraw
