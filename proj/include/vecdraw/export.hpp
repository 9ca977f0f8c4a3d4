#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vecdraw/image.hpp"
#include "vecdraw/optim.hpp"
#include "vecdraw/scene.hpp"

namespace vecdraw {

/// Maximum distance, in canvas pixels, between a degree-4 stroke and the cubic
/// pieces written for it.
inline constexpr double kQuarticFitTolerancePx = 0.25;

struct CubicPieces {
  std::vector<std::array<Point, 4>> pieces;
  double max_deviation = 0.0;  // measured at matching parameters on a dense grid
};

/// Approximates a quartic Bezier by cubics: split at t = 0.5 (de Casteljau),
/// least-squares cubic per half with pinned endpoints. Halves whose measured
/// deviation exceeds `tolerance` are split again.
CubicPieces quartic_to_cubics(std::span<const Point, 5> ctrl, double tolerance);

/// de Casteljau subdivision of any Bezier at t.
std::pair<std::vector<Point>, std::vector<Point>> subdivide_bezier(std::span<const Point> ctrl,
                                                                   double t);

/// SVG 1.1 document: background rect, then one path per stroke in draw order
/// (quadratic 'Q' or cubic 'C' commands; degree-4 strokes become 'C' pieces).
/// Throws NumericError if a degree-4 fit cannot meet kQuarticFitTolerancePx.
std::string export_svg(const Scene& scene);

/// Reads documents produced by export_svg. Every path becomes one stroke per
/// curve command, so degree-4 strokes come back as their cubic pieces.
/// Throws Error on anything it does not understand.
Scene parse_svg(std::string_view svg);

/// 8-bit RGB PNG; values are rounded from [0,1]. Throws IoError.
void write_png(const std::filesystem::path& path, const ImageTensor& image);
/// Any PNG libpng understands, converted to 8-bit RGB (alpha dropped). Throws IoError.
ImageTensor read_png(const std::filesystem::path& path);

/// Grid of images left-to-right, top-to-bottom, separated by `padding` px of `background`.
ImageTensor tile_images(std::span<const ImageTensor> images, int columns, int padding = 4,
                        std::array<double, 3> background = {1.0, 1.0, 1.0});

/// iteration, loss_sum, loss_mean, then one cosine column per prompt series.
std::string loss_csv(const RunArtifacts& artifacts);

/// Writes `contents` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace vecdraw
