#include "vecdraw/augment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "vecdraw/error.hpp"

namespace vecdraw {

Homography::Homography(const std::array<double, 9>& row_major) : m_(row_major) {}

Homography Homography::from_correspondences(const std::array<Point, 4>& from,
                                            const std::array<Point, 4>& to) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const Point p = from[static_cast<std::size_t>(i)];
    const Point q = to[static_cast<std::size_t>(i)];
    a.row(2 * i) << p.x, p.y, 1, 0, 0, 0, -q.x * p.x, -q.x * p.y;
    a.row(2 * i + 1) << 0, 0, 0, p.x, p.y, 1, -q.y * p.x, -q.y * p.y;
    b(2 * i) = q.x;
    b(2 * i + 1) = q.y;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) throw ContractError("degenerate corner correspondences");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  return Homography({h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0});
}

bool Homography::apply(Point p, Point& out) const {
  const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
  if (!(w > 0.0)) return false;
  out = {(m_[0] * p.x + m_[1] * p.y + m_[2]) / w, (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
  return true;
}

Point Homography::apply(Point p) const {
  Point out;
  if (!apply(p, out)) throw DomainError("point maps to infinity");
  return out;
}

double Homography::determinant() const {
  const auto& m = m_;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography operator*(const Homography& a, const Homography& b) {
  std::array<double, 9> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a(r, k) * b(k, c);
      m[static_cast<std::size_t>(3 * r + c)] = s;
    }
  }
  return Homography(m);
}

void AugmentConfig::validate() const {
  if (n_copies < 1) throw ConfigError("augmentation needs at least one copy");
  if (!(distortion_scale >= 0.0 && distortion_scale < 1.0)) {
    throw ConfigError("distortion_scale must lie in [0,1)");
  }
  const auto [lo, hi] = crop_scale_range;
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) throw ConfigError("crop scale range must satisfy 0 < lo <= hi <= 1");
  const auto [alo, ahi] = crop_aspect_range;
  if (!(alo > 0.0 && alo <= ahi)) throw ConfigError("crop aspect range must satisfy 0 < lo <= hi");
  for (double c : fill_rgb) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("fill colour must lie in [0,1]");
  }
  if (out_size < 1) throw ConfigError("augmentation out_size must be positive");
}

std::vector<Homography> sample_augmentations(const AugmentConfig& config, int src_height,
                                             int src_width, Rng& rng) {
  config.validate();
  if (src_height < 1 || src_width < 1) throw ContractError("empty source image");
  const double w = src_width;
  const double h = src_height;
  const std::array<Point, 4> corners{Point{0, 0}, Point{w - 1, 0}, Point{w - 1, h - 1},
                                     Point{0, h - 1}};
  std::vector<Homography> out;
  out.reserve(static_cast<std::size_t>(config.n_copies));
  for (int i = 0; i < config.n_copies; ++i) {
    // Perspective: the warped image shows source corner c at displaced corner e,
    // so the output->source map takes e onto c.
    Homography perspective = Homography::identity();
    if (config.distortion_scale > 0.0) {
      const double dx = 0.5 * config.distortion_scale * w;
      const double dy = 0.5 * config.distortion_scale * h;
      std::array<Point, 4> displaced{};
      for (std::size_t c = 0; c < 4; ++c) {
        displaced[c] = corners[c] + Point{rng.uniform(-dx, dx), rng.uniform(-dy, dy)};
      }
      perspective = Homography::from_correspondences(displaced, corners);
    }

    const auto [slo, shi] = config.crop_scale_range;
    const auto [alo, ahi] = config.crop_aspect_range;
    const double area = w * h * rng.uniform(slo, shi);
    const double aspect = std::exp(rng.uniform(std::log(alo), std::log(ahi)));
    const double cw = std::min(std::sqrt(area * aspect), w);
    const double ch = std::min(std::sqrt(area / aspect), h);
    const double x0 = rng.uniform(0.0, w - cw);
    const double y0 = rng.uniform(0.0, h - ch);

    // Pixel-centre aligned resize of the crop box onto out_size^2.
    const double sx = cw / config.out_size;
    const double sy = ch / config.out_size;
    const Homography crop({sx, 0, x0 + 0.5 * sx - 0.5, 0, sy, y0 + 0.5 * sy - 0.5, 0, 0, 1});
    out.push_back(perspective * crop);
  }
  return out;
}

namespace {

void require_invertible(const Homography& h) {
  if (!(std::abs(h.determinant()) > 1e-9)) throw ContractError("homography is not invertible");
}

struct Taps {
  std::array<int, 2> xs{}, ys{};   // tap columns and rows, clamped to the image
  std::array<double, 4> weight{};  // (x0,y0) (x1,y0) (x0,y1) (x1,y1)

  [[nodiscard]] int x(std::size_t k) const { return xs[k & 1U]; }
  [[nodiscard]] int y(std::size_t k) const { return ys[k >> 1U]; }
};

// Returns false when the sample point falls outside the source rectangle
// [-0.5, w-0.5] x [-0.5, h-0.5]; such output pixels take the fill colour.
bool bilinear_taps(const Homography& h, int u, int v, int src_w, int src_h, Taps& taps) {
  Point src;
  if (!h.apply(Point{static_cast<double>(u), static_cast<double>(v)}, src)) return false;
  if (!(src.x >= -0.5 && src.x <= src_w - 0.5 && src.y >= -0.5 && src.y <= src_h - 0.5)) {
    return false;
  }
  const double fx0 = std::floor(src.x);
  const double fy0 = std::floor(src.y);
  const double fx = src.x - fx0;
  const double fy = src.y - fy0;
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  taps.xs = {std::clamp(x0, 0, src_w - 1), std::clamp(x0 + 1, 0, src_w - 1)};
  taps.ys = {std::clamp(y0, 0, src_h - 1), std::clamp(y0 + 1, 0, src_h - 1)};
  taps.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return true;
}

}  // namespace

ImageTensor warp_image(const ImageTensor& image, const Homography& h, int out_size,
                       std::span<const double, 3> fill_rgb) {
  require_invertible(h);
  if (out_size < 1) throw ContractError("out_size must be positive");
  ImageTensor out(out_size, out_size);
  const int sh = image.height();
  const int sw = image.width();
  for (int v = 0; v < out_size; ++v) {
    for (int u = 0; u < out_size; ++u) {
      Taps taps;
      if (!bilinear_taps(h, u, v, sw, sh, taps)) {
        for (int c = 0; c < 3; ++c) out.at(v, u, c) = fill_rgb[static_cast<std::size_t>(c)];
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) acc += taps.weight[k] * image.at(taps.y(k), taps.x(k), c);
        out.at(v, u, c) = acc;
      }
    }
  }
  return out;
}

ImageTensor warp_pullback(int src_height, int src_width, const Homography& h, int out_size,
                          const ImageTensor& dl_dout) {
  require_invertible(h);
  if (dl_dout.height() != out_size || dl_dout.width() != out_size) {
    throw ContractError("output gradient is " + std::to_string(dl_dout.height()) + "x" +
                        std::to_string(dl_dout.width()) + ", expected " +
                        std::to_string(out_size) + "x" + std::to_string(out_size));
  }
  ImageTensor grad(src_height, src_width);
  for (int v = 0; v < out_size; ++v) {
    for (int u = 0; u < out_size; ++u) {
      Taps taps;
      if (!bilinear_taps(h, u, v, src_width, src_height, taps)) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        for (int c = 0; c < 3; ++c) {
          grad.at(taps.y(k), taps.x(k), c) += taps.weight[k] * dl_dout.at(v, u, c);
        }
      }
    }
  }
  return grad;
}

std::vector<ImageTensor> augment_batch(const ImageTensor& image,
                                       std::span<const Homography> homographies,
                                       const AugmentConfig& config) {
  std::vector<ImageTensor> out;
  out.reserve(homographies.size());
  for (const Homography& h : homographies) {
    out.push_back(warp_image(image, h, config.out_size, config.fill_rgb));
  }
  return out;
}

ImageTensor augment_pullback(int src_height, int src_width,
                             std::span<const Homography> homographies,
                             const AugmentConfig& config,
                             std::span<const ImageTensor> dl_dcopies) {
  if (homographies.size() != dl_dcopies.size()) {
    throw ContractError("got " + std::to_string(dl_dcopies.size()) + " copy gradients for " +
                        std::to_string(homographies.size()) + " homographies");
  }
  ImageTensor total(src_height, src_width);
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    const ImageTensor g =
        warp_pullback(src_height, src_width, homographies[i], config.out_size, dl_dcopies[i]);
    auto dst = total.data();
    auto src = g.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return total;
}

}  // namespace vecdraw
