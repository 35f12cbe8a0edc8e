// Design document model and axis-aligned box geometry.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace dscore {

enum class ElementKind : std::uint8_t { Background, Image, Svg, Text };

inline constexpr std::array<ElementKind, 4> kAllKinds = {
    ElementKind::Background, ElementKind::Image, ElementKind::Svg, ElementKind::Text};

inline std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::Background: return "background";
    case ElementKind::Image: return "image";
    case ElementKind::Svg: return "svg";
    case ElementKind::Text: return "text";
  }
  return "?";
}

inline bool parse_kind(std::string_view s, ElementKind& out) {
  for (auto k : kAllKinds) {
    if (to_string(k) == s) {
      out = k;
      return true;
    }
  }
  return false;
}

/// Image and Svg share the "image" role in layout encoding and snapping.
inline bool is_graphic(ElementKind k) { return k == ElementKind::Image || k == ElementKind::Svg; }

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// One design component. Geometry is normalized to the canvas: (cx, cy) is the
/// center as a fraction of canvas width/height, (w, h) the extent.
struct Element {
  ElementKind kind = ElementKind::Image;
  double cx = 0.5, cy = 0.5, w = 0.1, h = 0.1;
  int z = 0;
  Rgb color{};
  std::string content_tag;
  double opacity = 1.0;

  double area() const { return w * h; }
  friend bool operator==(const Element&, const Element&) = default;
};

/// Canvas plus elements in ascending z-order.
struct DesignDocument {
  int canvas_w = 256;
  int canvas_h = 256;
  std::vector<Element> elements;

  friend bool operator==(const DesignDocument&, const DesignDocument&) = default;

  bool has_background() const {
    return !elements.empty() && elements.front().kind == ElementKind::Background;
  }
  /// Index of the first non-background element.
  std::size_t foreground_begin() const { return has_background() ? 1 : 0; }
};

/// Normalized axis-aligned box, x0 <= x1, y0 <= y1.
struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect element_rect(const Element& e) {
  return {e.cx - e.w / 2, e.cy - e.h / 2, e.cx + e.w / 2, e.cy + e.h / 2};
}

/// Intersection; degenerate (zero-area) when the inputs do not overlap.
inline Rect intersect(const Rect& a, const Rect& b) {
  Rect r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  if (r.x1 < r.x0) r.x1 = r.x0;
  if (r.y1 < r.y0) r.y1 = r.y0;
  return r;
}

inline double intersection_area(const Rect& a, const Rect& b) { return intersect(a, b).area(); }

inline double union_area(const Rect& a, const Rect& b) {
  return a.area() + b.area() - intersection_area(a, b);
}

inline double rect_iou(const Rect& a, const Rect& b) {
  const double u = union_area(a, b);
  if (u <= 0) return 0.0;
  return std::clamp(intersection_area(a, b) / u, 0.0, 1.0);
}

inline bool rect_within_unit(const Rect& r, double eps = 1e-9) {
  return r.x0 >= -eps && r.y0 >= -eps && r.x1 <= 1 + eps && r.y1 <= 1 + eps;
}

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void sort_by_z(DesignDocument& doc) {
  std::stable_sort(doc.elements.begin(), doc.elements.end(),
                   [](const Element& a, const Element& b) { return a.z < b.z; });
}

/// Checks structural invariants. Geometry is only checked for finiteness and
/// positivity since perturbed documents may overflow the canvas.
inline void validate(const DesignDocument& doc) {
  if (doc.canvas_w < 32 || doc.canvas_h < 32)
    throw ValidationError("canvas must be at least 32x32");
  std::unordered_set<int> seen;
  int prev_z = -1;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    const Element& e = doc.elements[i];
    const std::string where = "element " + std::to_string(i) + ": ";
    if (!seen.insert(e.z).second) throw ValidationError(where + "duplicate z " + std::to_string(e.z));
    if (e.z < 0) throw ValidationError(where + "negative z");
    if (e.z < prev_z) throw ValidationError(where + "elements not sorted by z");
    prev_z = e.z;
    for (double v : {e.cx, e.cy, e.w, e.h, e.opacity})
      if (!std::isfinite(v)) throw ValidationError(where + "non-finite field");
    if (!(e.w > 0) || !(e.h > 0)) throw ValidationError(where + "w and h must be positive");
    if (e.cx < 0 || e.cx > 1 || e.cy < 0 || e.cy > 1)
      throw ValidationError(where + "center outside [0,1]");
    if (e.opacity < 0 || e.opacity > 1) throw ValidationError(where + "opacity outside [0,1]");
    if (e.kind == ElementKind::Background) {
      if (i != 0) throw ValidationError(where + "background must be the lowest element");
      const Rect r = element_rect(e);
      constexpr double tol = 1e-6;
      if (std::abs(r.x0) > tol || std::abs(r.y0) > tol || std::abs(r.x1 - 1) > tol ||
          std::abs(r.y1 - 1) > tol)
        throw ValidationError(where + "background must span the canvas");
    }
  }
}

/// Full-canvas background element.
inline Element make_background(Rgb color, int z = 0, std::string tag = "bg") {
  Element e;
  e.kind = ElementKind::Background;
  e.cx = 0.5;
  e.cy = 0.5;
  e.w = 1.0;
  e.h = 1.0;
  e.z = z;
  e.color = color;
  e.content_tag = std::move(tag);
  return e;
}

}  // namespace dscore
