// Refinement metrics: mean IoU, mean boundary displacement error, and the
// type-pooled mean IoU.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "dscore/design.hpp"

namespace dscore {

struct EvalRecord {
  DesignDocument ground_truth;
  DesignDocument predicted;
};

namespace detail {

inline void check_record(const EvalRecord& r) {
  const auto& a = r.ground_truth.elements;
  const auto& b = r.predicted.elements;
  if (a.size() != b.size()) throw std::invalid_argument("EvalRecord: element counts differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].kind != b[i].kind) throw std::invalid_argument("EvalRecord: element kinds differ at index " + std::to_string(i));
}

inline std::vector<std::size_t> resolve_targets(const EvalRecord& r, const std::vector<std::size_t>& targets) {
  if (!targets.empty()) {
    for (std::size_t t : targets)
      if (t >= r.ground_truth.elements.size()) throw std::out_of_range("metric target index out of range");
    return targets;
  }
  std::vector<std::size_t> all;
  for (std::size_t i = r.ground_truth.foreground_begin(); i < r.ground_truth.elements.size(); ++i) all.push_back(i);
  return all;
}

}  // namespace detail

/// Mean edge displacement of two rects: left/right edges in canvas-width
/// units, top/bottom in canvas-height units.
inline double boundary_displacement(const Rect& a, const Rect& b) {
  return (std::abs(a.x0 - b.x0) + std::abs(a.x1 - b.x1) + std::abs(a.y0 - b.y0) + std::abs(a.y1 - b.y1)) / 4.0;
}

/// Mean over records of the per-record mean IoU over targets. An empty
/// target list means every non-background element.
inline double mean_iou(const std::vector<EvalRecord>& records, const std::vector<std::size_t>& targets = {}) {
  if (records.empty()) throw std::invalid_argument("mean_iou: no records");
  double total = 0;
  for (const auto& r : records) {
    detail::check_record(r);
    const auto idx = detail::resolve_targets(r, targets);
    if (idx.empty()) throw std::invalid_argument("mean_iou: record has no targets");
    double s = 0;
    for (std::size_t i : idx) s += rect_iou(element_rect(r.ground_truth.elements[i]), element_rect(r.predicted.elements[i]));
    total += s / static_cast<double>(idx.size());
  }
  return total / static_cast<double>(records.size());
}

inline double mean_bde(const std::vector<EvalRecord>& records, const std::vector<std::size_t>& targets = {}) {
  if (records.empty()) throw std::invalid_argument("mean_bde: no records");
  double total = 0;
  for (const auto& r : records) {
    detail::check_record(r);
    const auto idx = detail::resolve_targets(r, targets);
    if (idx.empty()) throw std::invalid_argument("mean_bde: record has no targets");
    double s = 0;
    for (std::size_t i : idx)
      s += boundary_displacement(element_rect(r.ground_truth.elements[i]), element_rect(r.predicted.elements[i]));
    total += s / static_cast<double>(idx.size());
  }
  return total / static_cast<double>(records.size());
}

/// Per element type, total intersection area over total union area across
/// all records; then the plain mean over the types that occur. Background
/// elements are not counted.
inline double type_mean_iou(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("type_mean_iou: no records");
  std::map<ElementKind, std::array<double, 2>> pooled;  // {intersection, union}
  for (const auto& r : records) {
    detail::check_record(r);
    for (std::size_t i = 0; i < r.ground_truth.elements.size(); ++i) {
      const Element& g = r.ground_truth.elements[i];
      if (g.kind == ElementKind::Background) continue;
      const Rect a = element_rect(g), b = element_rect(r.predicted.elements[i]);
      auto& acc = pooled[g.kind];
      acc[0] += intersection_area(a, b);
      acc[1] += union_area(a, b);
    }
  }
  if (pooled.empty()) throw std::invalid_argument("type_mean_iou: no foreground elements");
  double s = 0;
  for (const auto& [kind, acc] : pooled) s += acc[1] > 0 ? acc[0] / acc[1] : 0.0;
  return s / static_cast<double>(pooled.size());
}

}  // namespace dscore
