// Occlusion sensitivity: slide a window over the rendition, fill it with the
// rendition's mean pixel, and record the score change.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dscore/parallel.hpp"
#include "dscore/raster.hpp"
#include "dscore/scorer.hpp"

namespace dscore {

struct SensitivityConfig {
  int window = 60;
  int stride = 10;
  int jobs = 1;
};

struct SensitivityMap {
  int grid_h = 0, grid_w = 0;
  int stride = 0;
  std::vector<double> grid;  // [grid_h * grid_w], S_occluded - S_original
  int h = 0, w = 0;
  std::vector<double> values;  // bilinear upsample to [h * w]

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

/// Window center for grid cell i.
inline int sensitivity_center(int i, int stride, int n) { return std::min(i * stride + stride / 2, n - 1); }

inline SensitivityMap sensitivity_map(const std::function<double(const RasterPair&)>& score_fn, const RasterPair& base,
                                      const SensitivityConfig& cfg) {
  if (cfg.window <= 0) throw std::invalid_argument("sensitivity_map: window must be positive");
  if (cfg.stride <= 0) throw std::invalid_argument("sensitivity_map: stride must be positive");
  const int h = base.rendition.h, w = base.rendition.w;
  SensitivityMap m;
  m.stride = cfg.stride;
  m.grid_h = (h + cfg.stride - 1) / cfg.stride;
  m.grid_w = (w + cfg.stride - 1) / cfg.stride;
  m.grid.assign(static_cast<std::size_t>(m.grid_h) * m.grid_w, 0.0);
  const double s0 = score_fn(base);
  const auto fill = mean_pixel(base.rendition);
  parallel_for(m.grid.size(), cfg.jobs, [&](std::size_t k) {
    const int gy = static_cast<int>(k) / m.grid_w, gx = static_cast<int>(k) % m.grid_w;
    RasterPair occ{occlude(base.rendition, sensitivity_center(gx, cfg.stride, w), sensitivity_center(gy, cfg.stride, h),
                           cfg.window, fill),
                   base.layout};
    m.grid[k] = score_fn(occ) - s0;
  });

  m.h = h;
  m.w = w;
  m.values.assign(static_cast<std::size_t>(h) * w, 0.0);
  auto coord = [&](int p, int g) {
    const double u = (p - cfg.stride / 2) / static_cast<double>(cfg.stride);
    return std::clamp(u, 0.0, static_cast<double>(g - 1));
  };
  for (int y = 0; y < h; ++y) {
    const double v = coord(y, m.grid_h);
    const int y0 = static_cast<int>(v), y1 = std::min(y0 + 1, m.grid_h - 1);
    const double fy = v - y0;
    for (int x = 0; x < w; ++x) {
      const double u = coord(x, m.grid_w);
      const int x0 = static_cast<int>(u), x1 = std::min(x0 + 1, m.grid_w - 1);
      const double fx = u - x0;
      auto g = [&](int yy, int xx) { return m.grid[static_cast<std::size_t>(yy) * m.grid_w + xx]; };
      m.values[static_cast<std::size_t>(y) * w + x] =
          (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x1)) + fy * ((1 - fx) * g(y1, x0) + fx * g(y1, x1));
    }
  }
  return m;
}

inline SensitivityMap sensitivity_map(const Scorer& model, const DesignDocument& doc, const SensitivityConfig& cfg) {
  return sensitivity_map([&](const RasterPair& r) { return score(model, r); }, rasterize_for(model, doc), cfg);
}

/// Blue for negative, white for zero, red for positive; symmetric scale.
inline RasterImage colorize(const SensitivityMap& m) {
  RasterImage img;
  img.h = m.h;
  img.w = m.w;
  img.data.assign(static_cast<std::size_t>(m.h) * m.w * 3, 1.0f);
  double peak = 0;
  for (double v : m.values) peak = std::max(peak, std::abs(v));
  if (peak == 0) return img;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const float t = static_cast<float>(std::clamp(m.values[i] / peak, -1.0, 1.0));
    float* p = img.data.data() + i * 3;
    if (t >= 0) {
      p[1] = p[2] = 1.0f - t;
    } else {
      p[0] = p[1] = 1.0f + t;
    }
  }
  return img;
}

}  // namespace dscore
