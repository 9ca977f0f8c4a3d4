#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vecdraw {

/// H x W x 3 image, row-major, channel-last. Rendered values lie in [0,1];
/// the same type carries gradients, which are unbounded.
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int height, int width, double fill = 0.0);

  /// Image filled with one colour.
  static ImageTensor filled(int height, int width, std::span<const double, 3> rgb);

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  [[nodiscard]] double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  [[nodiscard]] std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * kChannels + static_cast<std::size_t>(c);
  }

  std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Frobenius inner product of two same-shaped tensors.
double dot(const ImageTensor& a, const ImageTensor& b);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const ImageTensor& a, const ImageTensor& b);

/// Mean absolute elementwise difference; shapes must match.
double mean_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace vecdraw
