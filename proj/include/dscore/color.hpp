// sRGB -> CIE L*a*b* (D65) and the CIE76 color difference.
#pragma once

#include <cmath>

#include "dscore/design.hpp"

namespace dscore {

struct Lab {
  double l = 0, a = 0, b = 0;
};

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline Lab rgb_to_lab(Rgb rgb) {
  const double r = srgb_to_linear(rgb.r / 255.0);
  const double g = srgb_to_linear(rgb.g / 255.0);
  const double b = srgb_to_linear(rgb.b / 255.0);
  // sRGB primaries, D65 white.
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

inline double delta_e76(const Lab& p, const Lab& q) {
  return std::sqrt((p.l - q.l) * (p.l - q.l) + (p.a - q.a) * (p.a - q.a) + (p.b - q.b) * (p.b - q.b));
}

inline double delta_e76(Rgb p, Rgb q) { return delta_e76(rgb_to_lab(p), rgb_to_lab(q)); }

}  // namespace dscore
