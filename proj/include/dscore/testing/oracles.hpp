// Independent reference implementations used by the test suite and by the
// `selfcheck` command: finite-difference gradient checks, pixel-count
// geometry, and an exhaustive slot search.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dscore/design.hpp"
#include "dscore/gradnet/layers.hpp"
#include "dscore/loss.hpp"
#include "dscore/metrics.hpp"
#include "dscore/random.hpp"
#include "dscore/refiner.hpp"
#include "dscore/scorer.hpp"

namespace dscore::testing {

/// |a - n| / max(|a|, |n|, floor)
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline nn::Tensor<double> random_tensor(const nn::Shape& s, Rng& rng, double scale = 1.0) {
  nn::Tensor<double> t(s);
  for (auto& v : t.data) v = uniform(rng, -scale, scale);
  return t;
}

inline double weighted_sum(const nn::Tensor<double>& y, const nn::Tensor<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

/// Central differences of f with respect to every entry of x (or a sample).
/// Returns the worst relative error against the analytic gradient.
inline double check_gradient(const std::function<double()>& f, std::vector<double*> entries,
                             std::span<const double> analytic, double h = 1e-5) {
  double worst = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    double* p = entries[i];
    const double old = *p;
    *p = old + h;
    const double fp = f();
    *p = old - h;
    const double fm = f();
    *p = old;
    worst = std::max(worst, rel_error(analytic[i], (fp - fm) / (2 * h)));
  }
  return worst;
}

template <typename T>
std::vector<double*> all_entries(nn::Tensor<T>& t) {
  std::vector<double*> out;
  for (auto& v : t.data) out.push_back(&v);
  return out;
}

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
};

/// Checks one layer: loss = sum(r * layer(x)) for random r. `run` computes
/// the forward output; `back` accumulates parameter grads and returns dx.
inline double check_layer(nn::Tensor<double>& x, std::vector<nn::Param<double>*> params,
                          const std::function<nn::Tensor<double>()>& run,
                          const std::function<nn::Tensor<double>(const nn::Tensor<double>&)>& back, Rng& rng) {
  const nn::Tensor<double> y = run();
  const nn::Tensor<double> r = random_tensor(y.shape, rng);
  for (auto* p : params) p->zero_grad();
  const nn::Tensor<double> gx = back(r);
  auto f = [&] { return weighted_sum(run(), r); };
  double worst = check_gradient(f, all_entries(x), gx.data);
  for (auto* p : params) {
    const std::vector<double> g(p->grad.data.begin(), p->grad.data.end());
    worst = std::max(worst, check_gradient(f, all_entries(p->value), g));
  }
  return worst;
}

inline std::vector<GradCheckResult> check_layers(std::uint64_t seed) {
  using nn::Tensor;
  Rng rng = make_rng(seed, 0x6c);
  std::vector<GradCheckResult> out;

  {
    nn::Conv2d<double> conv("c", 3, 4, 3);
    conv.init(rng);
    for (auto& v : conv.bias.value.data) v = uniform(rng, -0.5, 0.5);
    Tensor<double> x = random_tensor({2, 3, 5, 6}, rng);
    out.push_back({"conv2d", check_layer(x, conv.params(), [&] { return conv.forward(x); },
                                         [&](const Tensor<double>& g) { return conv.backward(x, g); }, rng)});
  }
  for (int groups : {1, 2, 4}) {
    nn::GroupNorm<double> gn("g", 4, groups);
    for (auto& v : gn.gamma.value.data) v = uniform(rng, 0.5, 1.5);
    for (auto& v : gn.beta.value.data) v = uniform(rng, -0.5, 0.5);
    Tensor<double> x = random_tensor({2, 4, 3, 3}, rng);
    nn::GroupNormCache<double> cache;
    out.push_back({"groupnorm(" + std::to_string(groups) + ")",
                   check_layer(x, gn.params(), [&] { return gn.forward(x, &cache); },
                               [&](const Tensor<double>& g) { return gn.backward(cache, g); }, rng)});
  }
  for (bool training : {true, false}) {
    nn::BatchNorm2d<double> bn("b", 3);
    for (auto& v : bn.gamma.value.data) v = uniform(rng, 0.5, 1.5);
    for (auto& v : bn.running_mean.data) v = uniform(rng, -0.5, 0.5);
    Tensor<double> x = random_tensor({3, 3, 2, 2}, rng);
    nn::BatchNormCache<double> cache;
    // Running statistics must not drift between finite-difference probes.
    const nn::BatchNorm2d<double> frozen = bn;
    out.push_back({training ? "batchnorm(train)" : "batchnorm(eval)",
                   check_layer(x, bn.params(),
                               [&] {
                                 bn.running_mean = frozen.running_mean;
                                 bn.running_var = frozen.running_var;
                                 return bn.forward(x, training, &cache);
                               },
                               [&](const Tensor<double>& g) { return bn.backward(cache, g); }, rng)});
  }
  {
    Tensor<double> x = random_tensor({2, 3, 4}, rng, 2.0);
    Tensor<double> y;
    out.push_back({"tanh", check_layer(x, {}, [&] { return y = nn::tanh_forward(x); },
                                       [&](const Tensor<double>& g) { return nn::tanh_backward(nn::tanh_forward(x), g); }, rng)});
  }
  {
    Tensor<double> x = random_tensor({2, 3, 4, 6}, rng);
    out.push_back({"avgpool2x2", check_layer(x, {}, [&] { return nn::avgpool2x2_forward(x); },
                                             [&](const Tensor<double>& g) { return nn::avgpool2x2_backward(x.shape, g); }, rng)});
  }
  {
    Tensor<double> x = random_tensor({2, 3, 4, 5}, rng);
    out.push_back({"global_avgpool", check_layer(x, {}, [&] { return nn::global_avgpool_forward(x); },
                                                 [&](const Tensor<double>& g) { return nn::global_avgpool_backward(x.shape, g); }, rng)});
  }
  {
    nn::Linear<double> fc("f", 5, 3);
    fc.init(rng);
    for (auto& v : fc.bias.value.data) v = uniform(rng, -0.5, 0.5);
    Tensor<double> x = random_tensor({4, 5}, rng);
    out.push_back({"linear", check_layer(x, fc.params(), [&] { return fc.forward(x); },
                                         [&](const Tensor<double>& g) { return fc.backward(x, g); }, rng)});
  }
  return out;
}

/// Full scorer + loss, double precision, on small random rasters. Checks a
/// random `fraction` of all parameters.
inline double check_end_to_end(std::uint64_t seed, double fraction = 0.01, LossConfig loss = {},
                               NormKind norm = NormKind::Group, int size = 32, int pairs = 2) {
  Rng rng = make_rng(seed, 0xe2e);
  ScorerConfig cfg;
  cfg.input_size = size;
  cfg.norm = norm;
  ScorerModel<double> model(cfg, seed);
  const nn::Tensor<double> x = random_tensor({2 * pairs, kInputChannels, size, size}, rng, 1.0);
  std::vector<int> tiers(static_cast<std::size_t>(pairs));
  for (auto& t : tiers) t = static_cast<int>(uniform_index(rng, 3));

  auto split = [&](const ScorerOutput& o) {
    const std::size_t b = static_cast<std::size_t>(pairs);
    std::span<const double> s(o.scores);
    std::vector<std::vector<double>> eg(o.embeddings.begin(), o.embeddings.begin() + pairs),
        eb(o.embeddings.begin() + pairs, o.embeddings.end());
    return pair_loss(s.first(b), s.subspan(b), eg, eb, loss, tiers);
  };
  // Batch norm in inference mode keeps the probe loss a pure function.
  const bool training = norm != NormKind::Batch;
  typename ScorerModel<double>::Cache cache;
  const LossResult lr = split(model.forward_train(x, cache, training));
  std::vector<double> gs(2 * pairs);
  std::vector<std::vector<double>> ge(2 * pairs);
  for (int i = 0; i < pairs; ++i) {
    gs[i] = lr.grad_sg[i];
    gs[pairs + i] = lr.grad_sb[i];
    ge[i] = lr.grad_eg[i];
    ge[pairs + i] = lr.grad_eb[i];
  }
  model.zero_grad();
  model.backward(cache, gs, ge);

  std::vector<double*> entries;
  std::vector<double> analytic;
  for (auto* p : model.params())
    for (std::size_t j = 0; j < p->value.size(); ++j)
      if (bernoulli(rng, fraction)) {
        entries.push_back(&p->value[j]);
        analytic.push_back(p->grad[j]);
      }
  auto f = [&] {
    typename ScorerModel<double>::Cache c;
    return split(model.forward_train(x, c, training)).loss;
  };
  return check_gradient(f, entries, analytic);
}

// ---------------------------------------------------------------------------
// Pixel-count geometry.

inline bool covers(const Rect& r, double px, double py) { return px >= r.x0 && px < r.x1 && py >= r.y0 && py < r.y1; }

/// Intersection and union pixel counts on a res x res grid of pixel centers.
inline std::pair<long, long> pixel_counts(const Rect& a, const Rect& b, int res) {
  long inter = 0, uni = 0;
  for (int y = 0; y < res; ++y) {
    const double py = (y + 0.5) / res;
    for (int x = 0; x < res; ++x) {
      const double px = (x + 0.5) / res;
      const bool ia = covers(a, px, py), ib = covers(b, px, py);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return {inter, uni};
}

inline double pixel_iou(const Rect& a, const Rect& b, int res = 1000) {
  const auto [i, u] = pixel_counts(a, b, res);
  return u ? static_cast<double>(i) / static_cast<double>(u) : 0.0;
}

inline double pixel_mean_iou(const std::vector<EvalRecord>& records, int res = 1000) {
  double total = 0;
  for (const auto& r : records) {
    double s = 0;
    int n = 0;
    for (std::size_t i = r.ground_truth.foreground_begin(); i < r.ground_truth.elements.size(); ++i, ++n)
      s += pixel_iou(element_rect(r.ground_truth.elements[i]), element_rect(r.predicted.elements[i]), res);
    total += s / n;
  }
  return total / static_cast<double>(records.size());
}

inline double pixel_type_mean_iou(const std::vector<EvalRecord>& records, int res = 1000) {
  std::map<ElementKind, std::pair<long, long>> acc;
  for (const auto& r : records)
    for (std::size_t i = 0; i < r.ground_truth.elements.size(); ++i) {
      const Element& g = r.ground_truth.elements[i];
      if (g.kind == ElementKind::Background) continue;
      const auto [in, un] = pixel_counts(element_rect(g), element_rect(r.predicted.elements[i]), res);
      acc[g.kind].first += in;
      acc[g.kind].second += un;
    }
  double s = 0;
  for (const auto& [k, v] : acc) s += v.second ? static_cast<double>(v.first) / static_cast<double>(v.second) : 0.0;
  return s / static_cast<double>(acc.size());
}

// ---------------------------------------------------------------------------
// Exhaustive slot search, written without the grid helper.

inline std::optional<Rect> brute_force_slot(const Element& e, const std::vector<Element>& canvas) {
  std::vector<double> xs{0, 1}, ys{0, 1};
  for (const Element& c : canvas) {
    xs.push_back(std::min(1.0, std::max(0.0, c.cx - c.w / 2)));
    xs.push_back(std::min(1.0, std::max(0.0, c.cx + c.w / 2)));
    ys.push_back(std::min(1.0, std::max(0.0, c.cy - c.h / 2)));
    ys.push_back(std::min(1.0, std::max(0.0, c.cy + c.h / 2)));
  }
  std::optional<Rect> best;
  double best_cost = 0, best_dist = 0;
  for (double x0 : xs)
    for (double x1 : xs)
      for (double y0 : ys)
        for (double y1 : ys) {
          if (!(x0 < x1 && y0 < y1)) continue;
          const double area = (x1 - x0) * (y1 - y0);
          bool free = true;
          for (const Element& c : canvas) {
            const double ix = std::min(x1, c.cx + c.w / 2) - std::max(x0, c.cx - c.w / 2);
            const double iy = std::min(y1, c.cy + c.h / 2) - std::max(y0, c.cy - c.h / 2);
            if (ix > 0 && iy > 0 && ix * iy >= 0.05 * area) free = false;
          }
          if (!free) continue;
          const double dist = std::hypot((x0 + x1) / 2 - e.cx, (y0 + y1) / 2 - e.cy);
          const double cost = std::abs(std::log(area / (e.w * e.h))) + 2 * dist;
          const Rect r{x0, y0, x1, y1};
          bool better = !best || cost < best_cost || (cost == best_cost && dist < best_dist) ||
                        (cost == best_cost && dist == best_dist &&
                         std::tie(r.x0, r.y0, r.x1, r.y1) < std::tie(best->x0, best->y0, best->x1, best->y1));
          if (better) {
            best = r;
            best_cost = cost;
            best_dist = dist;
          }
        }
  return best;
}

// ---------------------------------------------------------------------------

/// Runs the gradient and oracle checks; prints one line per check.
inline bool run_selfcheck(std::ostream& os, int seeds = 5) {
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, double value) {
    os << (pass ? "PASS " : "FAIL ") << name << " " << value << "\n";
    ok = ok && pass;
  };
  for (int s = 0; s < seeds; ++s) {
    for (const auto& r : check_layers(static_cast<std::uint64_t>(s)))
      line("grad/" + r.name + "/seed" + std::to_string(s), r.max_rel_error < 1e-4, r.max_rel_error);
    const double e = check_end_to_end(static_cast<std::uint64_t>(s), 0.002);
    line("grad/end_to_end/seed" + std::to_string(s), e < 1e-3, e);
  }

  Rng rng = make_rng(99, 0x0c);
  double worst_iou = 0;
  for (int i = 0; i < 20; ++i) {
    auto rnd = [&] {
      const double x0 = uniform(rng, 0, 0.8), y0 = uniform(rng, 0, 0.8);
      return Rect{x0, y0, x0 + uniform(rng, 0.05, 0.2), y0 + uniform(rng, 0.05, 0.2)};
    };
    const Rect a = rnd(), b = rnd();
    worst_iou = std::max(worst_iou, std::abs(rect_iou(a, b) - pixel_iou(a, b, 500)));
  }
  line("oracle/iou_pixel_count", worst_iou < 5e-3, worst_iou);

  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<Element> canvas;
    const int n = static_cast<int>(uniform_index(rng, 4));
    for (int k = 0; k < n; ++k) {
      Element c;
      c.w = uniform(rng, 0.1, 0.4);
      c.h = uniform(rng, 0.1, 0.4);
      c.cx = uniform(rng, c.w / 2, 1 - c.w / 2);
      c.cy = uniform(rng, c.h / 2, 1 - c.h / 2);
      canvas.push_back(c);
    }
    Element e;
    e.w = uniform(rng, 0.05, 0.5);
    e.h = uniform(rng, 0.05, 0.5);
    e.cx = uniform(rng, 0, 1);
    e.cy = uniform(rng, 0, 1);
    const auto a = find_slot(e, canvas, build_grid(canvas));
    const auto b = brute_force_slot(e, canvas);
    if (a.has_value() != b.has_value() || (a && !(a->x0 == b->x0 && a->y0 == b->y0 && a->x1 == b->x1 && a->y1 == b->y1)))
      ++mismatches;
  }
  line("oracle/grid_snap_exhaustive", mismatches == 0, mismatches);
  return ok;
}

}  // namespace dscore::testing
