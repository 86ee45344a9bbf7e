#include "plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace msmgp::plot {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189},
                                       {140, 86, 75}}};

struct Image {
  int w, h;
  std::vector<std::uint8_t> px;
  Image(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}
  void put(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
    p[0] = c[0], p[1] = c[1], p[2] = c[2];
  }
  // Bresenham.
  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }
};

void write_png(const std::filesystem::path& path, const Image& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    png_write_row(png, const_cast<png_bytep>(&img.px[static_cast<std::size_t>(y) * img.w * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void line_chart(const std::filesystem::path& path, const std::vector<Series>& series, bool log_y, int width,
                int height) {
  const int margin = 20;
  Image img(width, height);
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (log_y) y0 = std::max(y0, y1 - 8.0);
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const int pw = width - 2 * margin, ph = height - 2 * margin;
  const Rgb axis{0, 0, 0};
  img.line(margin, height - margin, width - margin, height - margin, axis);
  img.line(margin, margin, margin, height - margin, axis);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const Rgb c = kPalette[k % kPalette.size()];
    int px = -1, py = -1;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double fy = std::clamp((ty(s.y[i]) - y0) / (y1 - y0), 0.0, 1.0);
      const int x = margin + static_cast<int>(std::lround((s.x[i] - x0) / (x1 - x0) * pw));
      const int y = height - margin - static_cast<int>(std::lround(fy * ph));
      if (px >= 0) img.line(px, py, x, y, c);
      px = x, py = y;
    }
  }
  write_png(path, img);
}

void heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values, int cell_w, int cell_h) {
  const int rows = static_cast<int>(values.rows()), cols = static_cast<int>(values.cols());
  Image img(std::max(1, cols * cell_w), std::max(1, rows * cell_h));
  const double top = values.size() > 0 ? std::max(values.maxCoeff(), 1e-300) : 1.0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto g = static_cast<std::uint8_t>(255.0 - 255.0 * std::clamp(values(r, c) / top, 0.0, 1.0));
      for (int dy = 0; dy < cell_h; ++dy) {
        for (int dx = 0; dx < cell_w; ++dx) img.put(c * cell_w + dx, r * cell_h + dy, {g, g, g});
      }
    }
  }
  write_png(path, img);
}

}  // namespace msmgp::plot
