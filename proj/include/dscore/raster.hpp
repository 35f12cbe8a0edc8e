// Rasterization of design documents: the visual rendition and the
// color-coded layout encoding. A pixel belongs to a rect iff its center lies
// in the half-open box [x0, x1) x [y0, y1).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dscore/design.hpp"

namespace dscore {

/// H x W x 3 image, row-major, channel-interleaved, values in [0, 1].
struct RasterImage {
  int h = 0, w = 0;
  std::vector<float> data;

  RasterImage() = default;
  RasterImage(int height, int width, float fill = 1.0f)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width * 3, fill) {}

  float* px(int y, int x) { return data.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
  const float* px(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * w + x) * 3;
  }
  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

struct RasterPair {
  RasterImage rendition;
  RasterImage layout;
};

struct PixelSpan {
  int begin = 0, end = 0;  // [begin, end)
  bool empty() const { return end <= begin; }
};

/// Pixels along one axis of length n whose centers fall in [lo, hi).
inline PixelSpan pixel_span(double lo, double hi, int n) {
  const double a = std::ceil(lo * n - 0.5);
  const double b = std::ceil(hi * n - 0.5);
  PixelSpan s;
  s.begin = static_cast<int>(std::clamp(a, 0.0, static_cast<double>(n)));
  s.end = static_cast<int>(std::clamp(b, 0.0, static_cast<double>(n)));
  return s;
}

namespace layout_color {
// Table values are 8-bit RGB; stored here as fractions of 255.
inline constexpr std::array<float, 3> kWhite{1.0f, 1.0f, 1.0f};
inline constexpr std::array<float, 3> kImage{0.0f, 100.0f / 255, 0.0f};
inline constexpr std::array<float, 3> kText{0.0f, 0.0f, 100.0f / 255};
inline constexpr std::array<float, 3> kTextOverText{0.0f, 0.0f, 0.0f};
inline constexpr std::array<float, 3> kTextOverImage{100.0f / 255, 0.0f, 0.0f};
inline constexpr std::array<float, 3> kImageOverText{100.0f / 255, 100.0f / 255, 0.0f};
inline constexpr std::array<float, 3> kImageOverImage{0.0f, 100.0f / 255, 100.0f / 255};
inline constexpr std::array<std::array<float, 3>, 7> kAll{
    kWhite, kImage, kText, kTextOverText, kTextOverImage, kImageOverText, kImageOverImage};
}  // namespace layout_color

inline RasterImage render_rendition(const DesignDocument& doc, int h, int w) {
  if (h < 32 || w < 32) throw std::invalid_argument("render_rendition: raster must be at least 32x32");
  RasterImage img(h, w, 1.0f);
  for (const Element& e : doc.elements) {
    const Rect r = element_rect(e);
    const PixelSpan xs = pixel_span(r.x0, r.x1, w);
    const PixelSpan ys = pixel_span(r.y0, r.y1, h);
    if (xs.empty() || ys.empty()) continue;
    const float a = static_cast<float>(e.opacity);
    const float col[3] = {e.color.r / 255.0f, e.color.g / 255.0f, e.color.b / 255.0f};
    // Text is drawn as glyph bars: bar height = h/5, gap = bar height.
    const double bar = e.h / 5.0;
    for (int y = ys.begin; y < ys.end; ++y) {
      if (e.kind == ElementKind::Text) {
        const double t = ((y + 0.5) / h - r.y0) / bar;
        if (static_cast<long>(std::floor(t)) % 2 != 0) continue;
      }
      for (int x = xs.begin; x < xs.end; ++x) {
        float* p = img.px(y, x);
        for (int c = 0; c < 3; ++c) p[c] = a * col[c] + (1.0f - a) * p[c];
      }
    }
  }
  return img;
}

inline RasterImage render_layout(const DesignDocument& doc, int h, int w) {
  if (h < 32 || w < 32) throw std::invalid_argument("render_layout: raster must be at least 32x32");
  // 0 = none, 1 = graphic, 2 = text; per pixel the two topmost covering roles.
  std::vector<std::uint8_t> top(static_cast<std::size_t>(h) * w, 0), second(top.size(), 0);
  for (const Element& e : doc.elements) {
    if (e.kind == ElementKind::Background) continue;
    const std::uint8_t role = e.kind == ElementKind::Text ? 2 : 1;
    const Rect r = element_rect(e);
    const PixelSpan xs = pixel_span(r.x0, r.x1, w);
    const PixelSpan ys = pixel_span(r.y0, r.y1, h);
    for (int y = ys.begin; y < ys.end; ++y) {
      for (int x = xs.begin; x < xs.end; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        second[i] = top[i];
        top[i] = role;
      }
    }
  }
  RasterImage img(h, w, 1.0f);
  for (std::size_t i = 0; i < top.size(); ++i) {
    using namespace layout_color;
    const std::array<float, 3>* c = &kWhite;
    if (top[i] == 1) {
      c = second[i] == 0 ? &kImage : second[i] == 1 ? &kImageOverImage : &kImageOverText;
    } else if (top[i] == 2) {
      c = second[i] == 0 ? &kText : second[i] == 1 ? &kTextOverImage : &kTextOverText;
    }
    std::copy(c->begin(), c->end(), img.data.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return img;
}

inline RasterPair render_pair(const DesignDocument& doc, int h, int w) {
  return {render_rendition(doc, h, w), render_layout(doc, h, w)};
}

/// Copy of img with the side x side window centered at (cx, cy) set to fill.
/// The window spans [cx - side/2, cx - side/2 + side) on each axis, clipped.
inline RasterImage occlude(const RasterImage& img, int cx, int cy, int side, std::array<float, 3> fill) {
  if (side <= 0) throw std::invalid_argument("occlude: side must be positive");
  RasterImage out = img;
  const long x0 = static_cast<long>(cx) - side / 2, y0 = static_cast<long>(cy) - side / 2;
  const long xb = std::max(0L, x0), xe = std::min<long>(img.w, x0 + side);
  const long yb = std::max(0L, y0), ye = std::min<long>(img.h, y0 + side);
  for (long y = yb; y < ye; ++y)
    for (long x = xb; x < xe; ++x) std::copy(fill.begin(), fill.end(), out.px(static_cast<int>(y), static_cast<int>(x)));
  return out;
}

inline std::array<float, 3> mean_pixel(const RasterImage& img) {
  std::array<double, 3> acc{};
  const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) acc[c] += img.data[i * 3 + c];
  std::array<float, 3> m{};
  for (int c = 0; c < 3; ++c) m[c] = n ? static_cast<float>(acc[c] / static_cast<double>(n)) : 0.0f;
  return m;
}

}  // namespace dscore
