// The 22 guided layout perturbations that turn a good design into a bad one.
#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "dscore/design.hpp"
#include "dscore/random.hpp"

namespace dscore {

enum class PerturbationKind : std::uint8_t {
  PosNoise005, PosNoise010, PosNoise020, PosNoise050,
  MoveLargest, MoveSmallest, MoveTwoLargest, MoveTwoSmallest,
  ClutterCenter, ClutterTopLeft, ClutterTopRight, ClutterBottomLeft, ClutterBottomRight,
  ScaleNoise005, ScaleNoise010, ScaleNoise020, ScaleNoise050,
  ScaleLargest, ScaleSmallest, ScaleTwoLargest, ScaleTwoSmallest,
  Combined,
};

inline constexpr std::size_t kPerturbationCount = 22;

inline constexpr std::array<std::string_view, kPerturbationCount> kPerturbationNames = {
    "pos_noise_0.05", "pos_noise_0.1", "pos_noise_0.2", "pos_noise_0.5",
    "move_largest", "move_smallest", "move_two_largest", "move_two_smallest",
    "clutter_center", "clutter_top_left", "clutter_top_right", "clutter_bottom_left",
    "clutter_bottom_right",
    "scale_noise_0.05", "scale_noise_0.1", "scale_noise_0.2", "scale_noise_0.5",
    "scale_largest", "scale_smallest", "scale_two_largest", "scale_two_smallest",
    "combined_0.1",
};

inline std::string_view to_string(PerturbationKind k) {
  return kPerturbationNames[static_cast<std::size_t>(k)];
}

inline std::optional<PerturbationKind> parse_perturbation(std::string_view s) {
  for (std::size_t i = 0; i < kPerturbationCount; ++i)
    if (kPerturbationNames[i] == s) return static_cast<PerturbationKind>(i);
  return std::nullopt;
}

inline PerturbationKind perturbation_from_index(std::size_t i) {
  if (i >= kPerturbationCount) throw std::out_of_range("perturbation index");
  return static_cast<PerturbationKind>(i);
}

namespace perturb_const {
inline constexpr std::array<double, 4> kNoiseSigmas{0.05, 0.1, 0.2, 0.5};
inline constexpr double kTargetedSigma = 0.3;
inline constexpr double kClutterJitter = 0.02;
inline constexpr double kCombinedSigma = 0.1;
inline constexpr double kMinScale = 0.1;
}  // namespace perturb_const

/// Severity tier used by transformation-based margins: 0 low, 1 medium, 2 high.
inline int noise_tier(PerturbationKind k) {
  using P = PerturbationKind;
  switch (k) {
    case P::PosNoise005: case P::PosNoise010:
    case P::ScaleNoise005: case P::ScaleNoise010:
    case P::Combined:
      return 0;
    case P::PosNoise020: case P::ScaleNoise020:
    case P::MoveLargest: case P::MoveSmallest: case P::MoveTwoLargest: case P::MoveTwoSmallest:
    case P::ScaleLargest: case P::ScaleSmallest: case P::ScaleTwoLargest: case P::ScaleTwoSmallest:
      return 1;
    default:
      return 2;
  }
}

namespace detail {

inline void clamp_center(Element& e) {
  e.cx = std::clamp(e.cx, 0.0, 1.0);
  e.cy = std::clamp(e.cy, 0.0, 1.0);
}

/// The `count` largest (or smallest) foreground elements by area; ties go to lower z.
inline std::vector<std::size_t> targets(const DesignDocument& doc, bool largest, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = doc.foreground_begin(); i < doc.elements.size(); ++i) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double aa = doc.elements[a].area(), ab = doc.elements[b].area();
    return largest ? aa > ab : aa < ab;
  });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

}  // namespace detail

/// Adds N(0, sigma^2) to the center of every foreground element.
inline void apply_position_noise(DesignDocument& doc, double sigma, Rng& rng) {
  for (std::size_t i = doc.foreground_begin(); i < doc.elements.size(); ++i) {
    Element& e = doc.elements[i];
    e.cx += normal(rng, sigma);
    e.cy += normal(rng, sigma);
    detail::clamp_center(e);
  }
}

/// Multiplies (w, h) of each foreground element by one factor max(0.1, 1 + N(0, sigma^2)).
inline void apply_scale_noise(DesignDocument& doc, double sigma, Rng& rng) {
  for (std::size_t i = doc.foreground_begin(); i < doc.elements.size(); ++i) {
    Element& e = doc.elements[i];
    const double f = std::max(perturb_const::kMinScale, 1.0 + normal(rng, sigma));
    e.w *= f;
    e.h *= f;
  }
}

inline DesignDocument perturb(const DesignDocument& doc, PerturbationKind kind, Rng& rng) {
  using P = PerturbationKind;
  using namespace perturb_const;
  if (doc.elements.size() <= doc.foreground_begin())
    throw std::invalid_argument("perturb: document has nothing to perturb");
  DesignDocument out = doc;
  const auto k = static_cast<std::size_t>(kind);
  auto move = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) {
      Element& e = out.elements[i];
      e.cx += normal(rng, kTargetedSigma);
      e.cy += normal(rng, kTargetedSigma);
      detail::clamp_center(e);
    }
  };
  auto scale = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) {
      Element& e = out.elements[i];
      const double f = std::max(kMinScale, 1.0 + normal(rng, kTargetedSigma));
      e.w *= f;
      e.h *= f;
    }
  };
  auto clutter = [&](double ax, double ay) {
    for (std::size_t i = out.foreground_begin(); i < out.elements.size(); ++i) {
      Element& e = out.elements[i];
      e.cx = ax + normal(rng, kClutterJitter);
      e.cy = ay + normal(rng, kClutterJitter);
      detail::clamp_center(e);
    }
  };
  switch (kind) {
    case P::PosNoise005: case P::PosNoise010: case P::PosNoise020: case P::PosNoise050:
      apply_position_noise(out, kNoiseSigmas[k - static_cast<std::size_t>(P::PosNoise005)], rng);
      break;
    case P::MoveLargest: move(detail::targets(out, true, 1)); break;
    case P::MoveSmallest: move(detail::targets(out, false, 1)); break;
    case P::MoveTwoLargest: move(detail::targets(out, true, 2)); break;
    case P::MoveTwoSmallest: move(detail::targets(out, false, 2)); break;
    case P::ClutterCenter: clutter(0.5, 0.5); break;
    case P::ClutterTopLeft: clutter(0.25, 0.25); break;
    case P::ClutterTopRight: clutter(0.75, 0.25); break;
    case P::ClutterBottomLeft: clutter(0.25, 0.75); break;
    case P::ClutterBottomRight: clutter(0.75, 0.75); break;
    case P::ScaleNoise005: case P::ScaleNoise010: case P::ScaleNoise020: case P::ScaleNoise050:
      apply_scale_noise(out, kNoiseSigmas[k - static_cast<std::size_t>(P::ScaleNoise005)], rng);
      break;
    case P::ScaleLargest: scale(detail::targets(out, true, 1)); break;
    case P::ScaleSmallest: scale(detail::targets(out, false, 1)); break;
    case P::ScaleTwoLargest: scale(detail::targets(out, true, 2)); break;
    case P::ScaleTwoSmallest: scale(detail::targets(out, false, 2)); break;
    case P::Combined:
      apply_position_noise(out, kCombinedSigma, rng);
      apply_scale_noise(out, kCombinedSigma, rng);
      break;
  }
  return out;
}

inline DesignDocument perturb(const DesignDocument& doc, PerturbationKind kind, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x70e7);
  return perturb(doc, kind, rng);
}

}  // namespace dscore
