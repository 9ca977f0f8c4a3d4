#include "vecdraw/export.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

#include "vecdraw/error.hpp"

namespace vecdraw {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string percent_rgb(double r, double g, double b) {
  return "rgb(" + num(100.0 * r) + "%," + num(100.0 * g) + "%," + num(100.0 * b) + "%)";
}

Point to_px(Point p, const CanvasConfig& c) { return {p.x * c.width_px, p.y * c.height_px}; }

/// Least-squares cubic through fixed endpoints approximating `curve` on [0,1].
std::array<Point, 4> fit_cubic(std::span<const Point> curve) {
  constexpr int kSamples = 64;
  const Point p0 = curve.front();
  const Point p3 = curve.back();
  // Normal equations for the two inner control points (shared across x and y).
  double a11 = 0, a12 = 0, a22 = 0;
  Point r1{}, r2{};
  for (int k = 0; k <= kSamples; ++k) {
    const double t = static_cast<double>(k) / kSamples;
    const double s = 1.0 - t;
    const double b0 = s * s * s, b1 = 3 * s * s * t, b2 = 3 * s * t * t, b3 = t * t * t;
    const Point target = bezier_point(curve, t) - b0 * p0 - b3 * p3;
    a11 += b1 * b1;
    a12 += b1 * b2;
    a22 += b2 * b2;
    r1 = r1 + b1 * target;
    r2 = r2 + b2 * target;
  }
  const double det = a11 * a22 - a12 * a12;
  const Point p1 = (1.0 / det) * (a22 * r1 - a12 * r2);
  const Point p2 = (1.0 / det) * (a11 * r2 - a12 * r1);
  return {p0, p1, p2, p3};
}

double parametric_deviation(std::span<const Point> curve, const std::array<Point, 4>& cubic) {
  constexpr int kSamples = 256;
  double worst = 0.0;
  for (int k = 0; k <= kSamples; ++k) {
    const double t = static_cast<double>(k) / kSamples;
    const Point d = bezier_point(curve, t) - bezier_point(cubic, t);
    worst = std::max(worst, std::hypot(d.x, d.y));
  }
  return worst;
}

void fit_recursive(std::span<const Point> curve, double tolerance, int depth, CubicPieces& out) {
  const auto cubic = fit_cubic(curve);
  const double dev = parametric_deviation(curve, cubic);
  if (dev <= tolerance || depth >= 8) {
    out.pieces.push_back(cubic);
    out.max_deviation = std::max(out.max_deviation, dev);
    return;
  }
  const auto [left, right] = subdivide_bezier(curve, 0.5);
  fit_recursive(left, tolerance, depth + 1, out);
  fit_recursive(right, tolerance, depth + 1, out);
}

}  // namespace

std::pair<std::vector<Point>, std::vector<Point>> subdivide_bezier(std::span<const Point> ctrl,
                                                                   double t) {
  if (ctrl.empty()) throw ContractError("cannot subdivide an empty curve");
  std::vector<Point> work(ctrl.begin(), ctrl.end());
  const std::size_t n = work.size();
  std::vector<Point> left(n), right(n);
  for (std::size_t level = 0; level < n; ++level) {
    left[level] = work[0];
    right[n - 1 - level] = work[n - 1 - level];
    for (std::size_t i = 0; i + 1 < n - level; ++i) work[i] = (1.0 - t) * work[i] + t * work[i + 1];
  }
  return {left, right};
}

CubicPieces quartic_to_cubics(std::span<const Point, 5> ctrl, double tolerance) {
  CubicPieces out;
  const auto [left, right] = subdivide_bezier(ctrl, 0.5);
  fit_recursive(left, tolerance, 1, out);
  fit_recursive(right, tolerance, 1, out);
  return out;
}

std::string export_svg(const Scene& scene) {
  const CanvasConfig& c = scene.canvas;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << c.width_px
     << "\" height=\"" << c.height_px << "\" viewBox=\"0 0 " << c.width_px << ' ' << c.height_px
     << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << c.width_px << "\" height=\"" << c.height_px
     << "\" fill=\""
     << percent_rgb(c.background_rgb[0], c.background_rgb[1], c.background_rgb[2]) << "\"/>\n";
  for (const Stroke& s : scene.strokes) {
    std::vector<Point> px;
    for (Point p : s.control_points) px.push_back(to_px(p, c));
    std::string d;
    auto pt = [](Point p) { return num(p.x) + ' ' + num(p.y); };
    switch (px.size()) {
      case 3:
        d = "M " + pt(px[0]) + " Q " + pt(px[1]) + ' ' + pt(px[2]);
        break;
      case 4:
        d = "M " + pt(px[0]) + " C " + pt(px[1]) + ' ' + pt(px[2]) + ' ' + pt(px[3]);
        break;
      case 5: {
        const CubicPieces fit =
            quartic_to_cubics(std::span<const Point, 5>(px.data(), 5), kQuarticFitTolerancePx);
        if (fit.max_deviation > kQuarticFitTolerancePx) {
          throw NumericError("quartic stroke fit deviates by " + num(fit.max_deviation) + " px");
        }
        d = "M " + pt(px[0]);
        for (const auto& piece : fit.pieces) {
          d += " C " + pt(piece[1]) + ' ' + pt(piece[2]) + ' ' + pt(piece[3]);
        }
        break;
      }
      default:
        throw ContractError("SVG export supports strokes with 3 to 5 control points");
    }
    os << "<path d=\"" << d << "\" fill=\"none\" stroke=\""
       << percent_rgb(s.color_rgba[0], s.color_rgba[1], s.color_rgba[2]) << "\" stroke-opacity=\""
       << num(s.color_rgba[3]) << "\" stroke-width=\"" << num(s.width_px)
       << "\" stroke-linecap=\"round\" stroke-linejoin=\"round\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

double parse_number(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error("bad number in SVG: \"" + std::string(s) + "\"");
  }
  return v;
}

std::array<double, 3> parse_rgb(const std::string& s) {
  static const std::regex re(R"(rgb\(\s*([-+0-9.eE]+)%\s*,\s*([-+0-9.eE]+)%\s*,\s*([-+0-9.eE]+)%\s*\))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw Error("unsupported SVG colour \"" + s + "\"");
  return {parse_number(m.str(1)) / 100.0, parse_number(m.str(2)) / 100.0,
          parse_number(m.str(3)) / 100.0};
}

std::string attr(const std::string& element, const std::string& name) {
  const std::regex re("\\s" + name + "=\"([^\"]*)\"");
  std::smatch m;
  if (!std::regex_search(element, m, re)) throw Error("SVG element lacks attribute " + name);
  return m.str(1);
}

}  // namespace

Scene parse_svg(std::string_view svg) {
  const std::string doc(svg);
  Scene scene;
  std::smatch m;
  static const std::regex svg_re(R"(<svg\b[^>]*>)");
  if (!std::regex_search(doc, m, svg_re)) throw Error("no <svg> element");
  const std::string root = m.str(0);
  scene.canvas.width_px = static_cast<int>(parse_number(attr(root, "width")));
  scene.canvas.height_px = static_cast<int>(parse_number(attr(root, "height")));
  const double w = scene.canvas.width_px;
  const double h = scene.canvas.height_px;

  static const std::regex rect_re(R"(<rect\b[^>]*>)");
  if (std::regex_search(doc, m, rect_re)) scene.canvas.background_rgb = parse_rgb(attr(m.str(0), "fill"));

  static const std::regex path_re(R"(<path\b[^>]*>)");
  for (auto it = std::sregex_iterator(doc.begin(), doc.end(), path_re); it != std::sregex_iterator();
       ++it) {
    const std::string el = it->str(0);
    const auto rgb = parse_rgb(attr(el, "stroke"));
    const double opacity = parse_number(attr(el, "stroke-opacity"));
    const double width = parse_number(attr(el, "stroke-width"));

    std::istringstream d(attr(el, "d"));
    std::vector<std::string> tokens;
    for (std::string tok; d >> tok;) tokens.push_back(tok);
    std::size_t i = 0;
    auto next_point = [&] {
      if (i + 2 > tokens.size()) throw Error("truncated SVG path data");
      const Point p{parse_number(tokens[i]) / w, parse_number(tokens[i + 1]) / h};
      i += 2;
      return p;
    };
    Point current{};
    bool have_current = false;
    while (i < tokens.size()) {
      const std::string cmd = tokens[i++];
      if (cmd == "M") {
        current = next_point();
        have_current = true;
        continue;
      }
      const int n = cmd == "Q" ? 2 : cmd == "C" ? 3 : 0;
      if (n == 0) throw Error("unsupported SVG path command '" + cmd + "'");
      if (!have_current) throw Error("SVG curve without a starting point");
      Stroke s;
      s.control_points.push_back(current);
      for (int k = 0; k < n; ++k) s.control_points.push_back(next_point());
      s.width_px = width;
      s.color_rgba = {rgb[0], rgb[1], rgb[2], opacity};
      current = s.control_points.back();
      scene.strokes.push_back(std::move(s));
    }
  }
  return scene;
}

// --- PNG --------------------------------------------------------------------

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> rows(image.size());
  auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    rows[i] = static_cast<png_byte>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(image.height()));
  for (int y = 0; y < image.height(); ++y) {
    row_ptrs[static_cast<std::size_t>(y)] = rows.data() + static_cast<std::size_t>(y) * image.width() * 3;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ImageTensor img(static_cast<int>(height), static_cast<int>(width));
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(static_cast<int>(y), static_cast<int>(x), c) = row_ptrs[y][x * 3 + static_cast<png_uint_32>(c)] / 255.0;
      }
    }
  }
  return img;
}

ImageTensor tile_images(std::span<const ImageTensor> images, int columns, int padding,
                        std::array<double, 3> background) {
  if (images.empty()) return ImageTensor::filled(1, 1, background);
  if (columns < 1) throw ContractError("contact sheet needs at least one column");
  int cell_h = 0, cell_w = 0;
  for (const auto& img : images) {
    cell_h = std::max(cell_h, img.height());
    cell_w = std::max(cell_w, img.width());
  }
  const int n = static_cast<int>(images.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  ImageTensor sheet = ImageTensor::filled(rows * cell_h + (rows + 1) * padding,
                                          cols * cell_w + (cols + 1) * padding, background);
  for (int i = 0; i < n; ++i) {
    const ImageTensor& img = images[static_cast<std::size_t>(i)];
    const int oy = padding + (i / cols) * (cell_h + padding);
    const int ox = padding + (i % cols) * (cell_w + padding);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        for (int c = 0; c < 3; ++c) sheet.at(oy + y, ox + x, c) = img.at(y, x, c);
      }
    }
  }
  return sheet;
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}
}  // namespace

std::string loss_csv(const RunArtifacts& artifacts) {
  std::ostringstream os;
  os << "iteration,loss_sum,loss_mean";
  for (const auto& label : artifacts.series_labels) os << ',' << csv_field("cos:" + label);
  os << '\n';
  for (std::size_t i = 0; i < artifacts.loss.size(); ++i) {
    os << i << ',' << num(artifacts.loss[i]) << ',' << num(artifacts.loss_mean[i]);
    for (const auto& series : artifacts.cosine_series) os << ',' << (i < series.size() ? num(series[i]) : "");
    os << '\n';
  }
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace vecdraw
