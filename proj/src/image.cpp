#include "vecdraw/image.hpp"

#include <algorithm>
#include <cmath>

#include "vecdraw/error.hpp"

namespace vecdraw {

ImageTensor::ImageTensor(int height, int width, double fill) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ContractError("image dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels,
               fill);
}

ImageTensor ImageTensor::filled(int height, int width, std::span<const double, 3> rgb) {
  ImageTensor img(height, width);
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); i += kChannels) {
    d[i] = rgb[0];
    d[i + 1] = rgb[1];
    d[i + 2] = rgb[2];
  }
  return img;
}

namespace {
void require_same_shape(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw ContractError("image shape mismatch");
}
}  // namespace

double dot(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b);
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
  return s;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b);
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b);
  if (a.empty()) return 0.0;
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += std::abs(da[i] - db[i]);
  return s / static_cast<double>(da.size());
}

}  // namespace vecdraw
