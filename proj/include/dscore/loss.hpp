// Siamese ranking + similarity loss over a batch of (good, bad) pairs, with
// hand-written gradients for scores and embeddings.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "dscore/perturbation.hpp"

namespace dscore {

enum class MarginMode : std::uint8_t { Hard, TransformBased, Adaptive };
enum class SimMode : std::uint8_t { Deviance, Exponential, Square };

inline std::string_view to_string(MarginMode m) {
  switch (m) {
    case MarginMode::Hard: return "hard";
    case MarginMode::TransformBased: return "transform";
    case MarginMode::Adaptive: return "adaptive";
  }
  return "?";
}

inline std::string_view to_string(SimMode m) {
  switch (m) {
    case SimMode::Deviance: return "deviance";
    case SimMode::Exponential: return "exponential";
    case SimMode::Square: return "square";
  }
  return "?";
}

inline std::optional<MarginMode> parse_margin_mode(std::string_view s) {
  for (auto m : {MarginMode::Hard, MarginMode::TransformBased, MarginMode::Adaptive})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline std::optional<SimMode> parse_sim_mode(std::string_view s) {
  for (auto m : {SimMode::Deviance, SimMode::Exponential, SimMode::Square})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct LossConfig {
  double alpha = 0.8;
  double beta = 0.2;
  MarginMode margin_mode = MarginMode::Hard;
  double m = 0.2;
  std::array<double, 3> tb_margins{0.2, 0.4, 0.6};  // by noise tier
  double lambda = 0.05;
  double ada_floor = 0.1;
  SimMode sim_mode = SimMode::Deviance;
  double eps = 1e-8;

  void validate() const {
    if (!(alpha >= 0 && beta >= 0 && alpha + beta > 0)) throw std::invalid_argument("LossConfig: need alpha, beta >= 0 and alpha + beta > 0");
    if (!(m >= 0)) throw std::invalid_argument("LossConfig: margin must be >= 0");
    if (!(eps > 0)) throw std::invalid_argument("LossConfig: eps must be > 0");
    if (static_cast<int>(margin_mode) > 2) throw std::invalid_argument("LossConfig: unknown margin mode");
    if (static_cast<int>(sim_mode) > 2) throw std::invalid_argument("LossConfig: unknown similarity mode");
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine-style similarity with a floored denominator.
inline double p_sim(std::span<const double> eg, std::span<const double> eb, double eps = 1e-8) {
  if (eg.size() != eb.size()) throw std::invalid_argument("p_sim: embedding sizes differ");
  return dot(eg, eb) / std::max(norm2(eg) * norm2(eb), eps);
}

inline double sim_loss(double p, SimMode mode) {
  switch (mode) {
    case SimMode::Deviance: return std::log1p(std::exp(2 * p));
    case SimMode::Exponential: return std::exp(p);
    case SimMode::Square: return (p + 1) * (p + 1);
  }
  throw std::invalid_argument("sim_loss: unknown mode");
}

inline double sim_loss_grad(double p, SimMode mode) {
  switch (mode) {
    case SimMode::Deviance: return 2 / (1 + std::exp(-2 * p));
    case SimMode::Exponential: return std::exp(p);
    case SimMode::Square: return 2 * (p + 1);
  }
  throw std::invalid_argument("sim_loss_grad: unknown mode");
}

/// max(0, margin - (sg - sb)); zero at the boundary.
inline double hinge(double sg, double sb, double margin) { return std::max(0.0, margin - (sg - sb)); }

struct LossResult {
  double loss = 0;    // batch mean
  double rank = 0;    // mean hinge term (unweighted)
  double sim = 0;     // mean similarity term (unweighted)
  double margin = 0;  // adaptive margin used (Adaptive mode)
  std::vector<double> grad_sg, grad_sb;
  std::vector<std::vector<double>> grad_eg, grad_eb;
};

/// Mean over the batch of alpha * hinge + beta * L_sim. `tiers` gives each
/// pair's noise tier for TransformBased margins (negative = use `m`).
inline LossResult pair_loss(std::span<const double> sg, std::span<const double> sb,
                            const std::vector<std::vector<double>>& eg, const std::vector<std::vector<double>>& eb,
                            const LossConfig& cfg, std::span<const int> tiers = {}) {
  cfg.validate();
  const std::size_t n = sg.size();
  if (n == 0) throw std::invalid_argument("pair_loss: empty batch");
  if (sb.size() != n || eg.size() != n || eb.size() != n) throw std::invalid_argument("pair_loss: batch sizes differ");
  if (!tiers.empty() && tiers.size() != n) throw std::invalid_argument("pair_loss: tier count differs from batch");
  const double inv = 1.0 / static_cast<double>(n);

  LossResult r;
  r.grad_sg.assign(n, 0.0);
  r.grad_sb.assign(n, 0.0);
  r.grad_eg.assign(n, std::vector<double>(eg[0].size(), 0.0));
  r.grad_eb.assign(n, std::vector<double>(eg[0].size(), 0.0));

  // Adaptive margin: one value for the whole batch.
  std::size_t arg = 0;
  double best = -1;
  if (cfg.margin_mode == MarginMode::Adaptive) {
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0;
      for (std::size_t k = 0; k < eg[i].size(); ++k) d2 += (eg[i][k] - eb[i][k]) * (eg[i][k] - eb[i][k]);
      const double d = cfg.lambda * std::sqrt(d2);
      if (d > best) best = d, arg = i;
    }
    r.margin = std::max(best, cfg.ada_floor);
  }

  double dmargin = 0;  // dL / d(adaptive margin)
  for (std::size_t i = 0; i < n; ++i) {
    double margin = cfg.m;
    if (cfg.margin_mode == MarginMode::TransformBased && !tiers.empty() && tiers[i] >= 0)
      margin = cfg.tb_margins.at(static_cast<std::size_t>(tiers[i]));
    else if (cfg.margin_mode == MarginMode::Adaptive)
      margin = r.margin;
    const double h = hinge(sg[i], sb[i], margin);
    r.rank += h * inv;
    if (h > 0) {
      r.grad_sg[i] = -cfg.alpha * inv;
      r.grad_sb[i] = cfg.alpha * inv;
      dmargin += cfg.alpha * inv;
    }

    const auto& g = eg[i];
    const auto& b = eb[i];
    const double ng = norm2(g), nb = norm2(b), den = ng * nb;
    const double p = dot(g, b) / std::max(den, cfg.eps);
    r.sim += sim_loss(p, cfg.sim_mode) * inv;
    const double dp = cfg.beta * inv * sim_loss_grad(p, cfg.sim_mode);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (den > cfg.eps) {
        r.grad_eg[i][k] += dp * (b[k] / den - p * g[k] / (ng * ng));
        r.grad_eb[i][k] += dp * (g[k] / den - p * b[k] / (nb * nb));
      } else {
        r.grad_eg[i][k] += dp * b[k] / cfg.eps;
        r.grad_eb[i][k] += dp * g[k] / cfg.eps;
      }
    }
  }

  if (cfg.margin_mode == MarginMode::Adaptive && best > cfg.ada_floor && dmargin != 0) {
    const auto& g = eg[arg];
    const auto& b = eb[arg];
    const double d = best / cfg.lambda;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = dmargin * cfg.lambda * (g[k] - b[k]) / d;
      r.grad_eg[arg][k] += t;
      r.grad_eb[arg][k] -= t;
    }
  }

  r.loss = cfg.alpha * r.rank + cfg.beta * r.sim;
  return r;
}

}  // namespace dscore
