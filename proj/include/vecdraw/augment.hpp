#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "vecdraw/image.hpp"
#include "vecdraw/rng.hpp"
#include "vecdraw/scene.hpp"

namespace vecdraw {

/// Projective map from output pixel coordinates to source pixel coordinates.
/// Pixel (x, y) refers to the centre of column x, row y.
class Homography {
 public:
  Homography() : Homography(identity()) {}
  explicit Homography(const std::array<double, 9>& row_major);

  static Homography identity() { return Homography({1, 0, 0, 0, 1, 0, 0, 0, 1}); }

  /// Unique homography mapping from[i] onto to[i] for four points in general position.
  static Homography from_correspondences(const std::array<Point, 4>& from,
                                         const std::array<Point, 4>& to);

  /// Returns false (and leaves `out` untouched) when the point maps to or behind
  /// the line at infinity.
  bool apply(Point p, Point& out) const;
  [[nodiscard]] Point apply(Point p) const;

  [[nodiscard]] double determinant() const;
  [[nodiscard]] const std::array<double, 9>& matrix() const { return m_; }
  [[nodiscard]] double operator()(int r, int c) const { return m_[static_cast<std::size_t>(3 * r + c)]; }

  friend Homography operator*(const Homography& a, const Homography& b);
  friend bool operator==(const Homography&, const Homography&) = default;

 private:
  std::array<double, 9> m_;
};

struct AugmentConfig {
  int n_copies = 8;
  double distortion_scale = 0.5;
  std::pair<double, double> crop_scale_range{0.7, 0.9};
  std::pair<double, double> crop_aspect_range{1.0, 1.0};
  std::array<double, 3> fill_rgb{1.0, 1.0, 1.0};
  int out_size = 224;

  void validate() const;
};

/// D random (perspective then crop-resize) homographies for a source of the
/// given size. Each corner of the source is displaced independently by up to
/// +-distortion_scale*side/2 per axis; the crop takes an area fraction from
/// crop_scale_range and a log-uniform aspect ratio from crop_aspect_range at a
/// uniform position inside the image and is resized to out_size^2.
std::vector<Homography> sample_augmentations(const AugmentConfig& config, int src_height,
                                             int src_width, Rng& rng);

/// Bilinear resampling: output pixel (u, v) reads the source at h(u, v).
/// Sample points outside the source rectangle [-0.5, w-0.5] x [-0.5, h-0.5]
/// give fill_rgb; inside it, taps past the last row or column reuse the edge
/// pixel. Throws ContractError if h is singular.
ImageTensor warp_image(const ImageTensor& image, const Homography& h, int out_size,
                       std::span<const double, 3> fill_rgb);

/// Exact adjoint of warp_image with respect to the source pixels. Output pixels
/// that took the fill colour contribute nothing.
ImageTensor warp_pullback(int src_height, int src_width, const Homography& h, int out_size,
                          const ImageTensor& dl_dout);

std::vector<ImageTensor> augment_batch(const ImageTensor& image,
                                       std::span<const Homography> homographies,
                                       const AugmentConfig& config);

/// Sum of the per-copy warp pullbacks, accumulated in copy order.
ImageTensor augment_pullback(int src_height, int src_width,
                             std::span<const Homography> homographies,
                             const AugmentConfig& config,
                             std::span<const ImageTensor> dl_dcopies);

}  // namespace vecdraw
