// Single-objective elitist genetic algorithm over element positions and
// sizes, with the snapping crossover and canvas-aware mutation.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <stdexcept>
#include <vector>

#include "dscore/design.hpp"
#include "dscore/parallel.hpp"
#include "dscore/random.hpp"
#include "dscore/scorer.hpp"

namespace dscore {

inline constexpr int kGenesPerElement = 4;  // cx, cy, w, h

struct GaConfig {
  int population_size = 100;
  int n_trials = 1500;  // fitness evaluations, initial population included
  double p = 0.3;       // per-element probability of taking parent 2
  double mutation_sigma = 0.05;
  double mutation_rate = 0.2;
  double elitism = 0.5;
  std::uint64_t seed = 0;
  bool lock_aspect = false;
  int jobs = 1;
  /// Generations in a row with no new evaluation before giving up.
  int stall_limit = 100;

  void validate() const {
    if (population_size < 2) throw std::invalid_argument("GaConfig: population_size must be >= 2");
    if (!(p > 0 && p < 1)) throw std::invalid_argument("GaConfig: p must be in (0, 1)");
    if (n_trials < population_size) throw std::invalid_argument("GaConfig: n_trials must be >= population_size");
    if (!(mutation_sigma >= 0) || !(mutation_rate >= 0 && mutation_rate <= 1))
      throw std::invalid_argument("GaConfig: bad mutation settings");
    if (!(elitism > 0 && elitism <= 1)) throw std::invalid_argument("GaConfig: elitism must be in (0, 1]");
  }
};

/// What is being optimized: a base document and the indices of the elements
/// whose (cx, cy, w, h) the GA may change.
struct RefineProblem {
  DesignDocument base;
  std::vector<std::size_t> refinable;  // ascending, so also ascending z
  bool lock_aspect = false;
  std::vector<double> aspect;  // h / w per refinable element

  RefineProblem() = default;
  RefineProblem(DesignDocument doc, std::vector<std::size_t> idx, bool lock = false)
      : base(std::move(doc)), refinable(std::move(idx)), lock_aspect(lock) {
    std::sort(refinable.begin(), refinable.end());
    refinable.erase(std::unique(refinable.begin(), refinable.end()), refinable.end());
    for (std::size_t i : refinable) {
      if (i >= base.elements.size()) throw std::out_of_range("RefineProblem: element index out of range");
      if (base.elements[i].kind == ElementKind::Background) throw std::invalid_argument("RefineProblem: background is not refinable");
      aspect.push_back(base.elements[i].h / base.elements[i].w);
    }
  }

  std::size_t gene_count() const { return kGenesPerElement * refinable.size(); }
  bool is_refinable(std::size_t i) const { return std::binary_search(refinable.begin(), refinable.end(), i); }
};

struct Chromosome {
  std::vector<double> genes;
  std::optional<double> fitness;

  void set_gene(std::size_t i, double v) {
    genes[i] = v;
    fitness.reset();
  }
};

inline std::vector<double> genes_of(const RefineProblem& prob, const DesignDocument& doc) {
  std::vector<double> g;
  g.reserve(prob.gene_count());
  for (std::size_t i : prob.refinable) {
    const Element& e = doc.elements[i];
    g.insert(g.end(), {e.cx, e.cy, e.w, e.h});
  }
  return g;
}

inline Element with_genes(Element e, const double* g) {
  e.cx = g[0];
  e.cy = g[1];
  e.w = g[2];
  e.h = g[3];
  return e;
}

inline DesignDocument apply_genes(const RefineProblem& prob, const std::vector<double>& genes) {
  if (genes.size() != prob.gene_count()) throw std::invalid_argument("apply_genes: gene count mismatch");
  DesignDocument doc = prob.base;
  for (std::size_t k = 0; k < prob.refinable.size(); ++k)
    doc.elements[prob.refinable[k]] = with_genes(doc.elements[prob.refinable[k]], &genes[kGenesPerElement * k]);
  return doc;
}

/// Moves the rect inside the unit square when it fits; otherwise centers it.
inline void contain(Element& e) {
  e.cx = e.w <= 1 ? std::clamp(e.cx, e.w / 2, 1 - e.w / 2) : 0.5;
  e.cy = e.h <= 1 ? std::clamp(e.cy, e.h / 2, 1 - e.h / 2) : 0.5;
}

// ---------------------------------------------------------------------------
// Grid slots and snapping.

inline constexpr double kSlotOverlapLimit = 0.05;  // fraction of slot area
inline constexpr double kSlotSizeWeight = 1.0;
inline constexpr double kSlotDistanceWeight = 2.0;

struct GridSlots {
  std::vector<double> vlines, hlines;
  std::vector<Rect> slots;
};

/// Lines from canvas borders and element edges (clipped to the canvas);
/// one slot per pair of vertical lines times pair of horizontal lines.
inline GridSlots build_grid(const std::vector<Element>& canvas) {
  GridSlots g;
  g.vlines = {0.0, 1.0};
  g.hlines = {0.0, 1.0};
  for (const Element& e : canvas) {
    const Rect r = element_rect(e);
    g.vlines.push_back(std::clamp(r.x0, 0.0, 1.0));
    g.vlines.push_back(std::clamp(r.x1, 0.0, 1.0));
    g.hlines.push_back(std::clamp(r.y0, 0.0, 1.0));
    g.hlines.push_back(std::clamp(r.y1, 0.0, 1.0));
  }
  for (auto* v : {&g.vlines, &g.hlines}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  for (std::size_t a = 0; a < g.vlines.size(); ++a)
    for (std::size_t b = a + 1; b < g.vlines.size(); ++b)
      for (std::size_t c = 0; c < g.hlines.size(); ++c)
        for (std::size_t d = c + 1; d < g.hlines.size(); ++d)
          g.slots.push_back({g.vlines[a], g.hlines[c], g.vlines[b], g.hlines[d]});
  return g;
}

inline bool slot_is_free(const Rect& slot, const std::vector<Element>& canvas) {
  const double limit = kSlotOverlapLimit * slot.area();
  for (const Element& e : canvas)
    if (intersection_area(slot, element_rect(e)) >= limit) return false;
  return true;
}

inline double slot_distance(const Rect& slot, const Element& e) {
  return std::hypot(slot.center_x() - e.cx, slot.center_y() - e.cy);
}

inline double slot_cost(const Rect& slot, const Element& e) {
  return kSlotSizeWeight * std::abs(std::log(slot.area() / e.area())) + kSlotDistanceWeight * slot_distance(slot, e);
}

/// True if slot a is preferred over slot b for element e.
inline bool slot_better(const Rect& a, const Rect& b, const Element& e) {
  const double ca = slot_cost(a, e), cb = slot_cost(b, e);
  if (ca != cb) return ca < cb;
  const double da = slot_distance(a, e), db = slot_distance(b, e);
  if (da != db) return da < db;
  return std::tie(a.x0, a.y0, a.x1, a.y1) < std::tie(b.x0, b.y0, b.x1, b.y1);
}

inline std::optional<Rect> find_slot(const Element& e, const std::vector<Element>& canvas, const GridSlots& grid) {
  std::optional<Rect> best;
  for (const Rect& s : grid.slots) {
    if (!slot_is_free(s, canvas)) continue;
    if (!best || slot_better(s, *best, e)) best = s;
  }
  return best;
}

/// Centers the element on its slot, shrinking it (aspect preserved) when it
/// does not fit. Without a free slot the element is returned unchanged.
inline Element snap_to(Element e, const Rect& slot) {
  e.cx = slot.center_x();
  e.cy = slot.center_y();
  if (e.w > slot.width() || e.h > slot.height()) {
    const double f = std::min(slot.width() / e.w, slot.height() / e.h);
    e.w *= f;
    e.h *= f;
  }
  return e;
}

inline Element grid_snap(const Element& e, const std::vector<Element>& canvas, const GridSlots& grid) {
  const auto slot = find_slot(e, canvas, grid);
  return slot ? snap_to(e, *slot) : e;
}

inline Element grid_snap(const Element& e, const std::vector<Element>& canvas) {
  return grid_snap(e, canvas, build_grid(canvas));
}

/// Aligns the element's center x or center y with the nearest canvas
/// element, whichever moves it less (x on ties).
inline Element text_align(Element e, const std::vector<Element>& canvas) {
  if (canvas.empty()) return e;
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double d = std::hypot(canvas[i].cx - e.cx, canvas[i].cy - e.cy);
    if (d < best) best = d, nearest = i;
  }
  const double cost_x = std::abs(canvas[nearest].cx - e.cx), cost_y = std::abs(canvas[nearest].cy - e.cy);
  if (cost_x <= cost_y)
    e.cx = canvas[nearest].cx;
  else
    e.cy = canvas[nearest].cy;
  return e;
}

// ---------------------------------------------------------------------------
// Variation operators.

inline Chromosome swan_crossover(const RefineProblem& prob, const Chromosome& p1, const Chromosome& p2, double p, Rng& rng) {
  const std::size_t n = prob.refinable.size();
  if (n == 0) return p1;
  std::vector<bool> take2(n);
  for (std::size_t k = 0; k < n; ++k) take2[k] = bernoulli(rng, p);
  if (std::none_of(take2.begin(), take2.end(), [](bool b) { return b; })) {
    Chromosome c;
    c.genes = p1.genes;
    return c;
  }

  std::vector<Element> canvas;
  for (std::size_t i = prob.base.foreground_begin(); i < prob.base.elements.size(); ++i)
    if (!prob.is_refinable(i)) canvas.push_back(prob.base.elements[i]);
  for (std::size_t k = 0; k < n; ++k)
    if (!take2[k]) canvas.push_back(with_genes(prob.base.elements[prob.refinable[k]], &p1.genes[kGenesPerElement * k]));

  Chromosome child;
  child.genes = p1.genes;
  for (std::size_t k = 0; k < n; ++k) {
    if (!take2[k]) continue;
    Element e = with_genes(prob.base.elements[prob.refinable[k]], &p2.genes[kGenesPerElement * k]);
    e = e.kind == ElementKind::Text ? text_align(e, canvas) : grid_snap(e, canvas);
    contain(e);
    double* g = &child.genes[kGenesPerElement * k];
    g[0] = e.cx;
    g[1] = e.cy;
    g[2] = e.w;
    g[3] = e.h;
    canvas.push_back(e);
  }
  return child;
}

inline Chromosome swan_crossover(const RefineProblem& prob, const Chromosome& p1, const Chromosome& p2, double p,
                                 std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x5a7);
  return swan_crossover(prob, p1, p2, p, rng);
}

/// Gaussian noise per gene; an element whose rect would leave the unit
/// square keeps its previous genes. With locked aspect, h follows w.
inline Chromosome mutate(const RefineProblem& prob, Chromosome c, const GaConfig& cfg, Rng& rng) {
  for (std::size_t k = 0; k < prob.refinable.size(); ++k) {
    double* g = &c.genes[kGenesPerElement * k];
    double trial[kGenesPerElement];
    std::copy_n(g, kGenesPerElement, trial);
    bool changed = false;
    for (int j = 0; j < kGenesPerElement; ++j) {
      if (!bernoulli(rng, cfg.mutation_rate)) continue;
      trial[j] += normal(rng, cfg.mutation_sigma);
      changed = true;
    }
    if (!changed) continue;
    if (prob.lock_aspect) trial[3] = trial[2] * prob.aspect[k];
    const bool ok = trial[2] > 0 && trial[3] > 0 &&
                    rect_within_unit({trial[0] - trial[2] / 2, trial[1] - trial[3] / 2, trial[0] + trial[2] / 2,
                                      trial[1] + trial[3] / 2});
    if (!ok) continue;
    std::copy_n(trial, kGenesPerElement, g);
    c.fitness.reset();
  }
  return c;
}

inline Chromosome mutate(const RefineProblem& prob, const Chromosome& c, const GaConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x3a7);
  return mutate(prob, c, cfg, rng);
}

inline constexpr double kInitMinSize = 0.05;
inline constexpr double kInitMaxSize = 0.9;

/// Uniform random genes for every refinable element, rects inside the canvas.
inline std::vector<double> random_genes(const RefineProblem& prob, Rng& rng) {
  std::vector<double> g;
  g.reserve(prob.gene_count());
  for (std::size_t k = 0; k < prob.refinable.size(); ++k) {
    double w = uniform(rng, kInitMinSize, kInitMaxSize), h;
    if (prob.lock_aspect) {
      h = w * prob.aspect[k];
      if (h > kInitMaxSize) {
        w *= kInitMaxSize / h;
        h = kInitMaxSize;
      }
    } else {
      h = uniform(rng, kInitMinSize, kInitMaxSize);
    }
    const double cx = uniform(rng, w / 2, 1 - w / 2), cy = uniform(rng, h / 2, 1 - h / 2);
    g.insert(g.end(), {cx, cy, w, h});
  }
  return g;
}

// ---------------------------------------------------------------------------
// Evolution loop.

using Fitness = std::function<double(const DesignDocument&)>;

struct EvolveResult {
  DesignDocument best;
  std::vector<double> best_genes;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // best-ever fitness after each generation
  std::size_t evaluations = 0;
  int generations = 0;
};

/// Fitness is only called from evolve's evaluation step, possibly on several
/// threads at once; it must be safe for concurrent calls.
inline EvolveResult evolve(const RefineProblem& prob, const Fitness& fitness, const GaConfig& cfg) {
  cfg.validate();
  const std::size_t pop_n = static_cast<std::size_t>(cfg.population_size);
  const std::size_t budget = static_cast<std::size_t>(cfg.n_trials);
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.elitism * static_cast<double>(pop_n))));

  std::vector<Chromosome> pop(pop_n);
  pop[0].genes = genes_of(prob, prob.base);
  {
    Rng rng = make_rng(cfg.seed, 0);
    for (std::size_t i = 1; i < pop_n; ++i) pop[i].genes = random_genes(prob, rng);
  }

  std::map<std::vector<double>, double> cache;
  EvolveResult res;
  int stalled = 0;
  for (int gen = 0;; ++gen) {
    // Fill fitness from the cache; evaluate what is new, within budget.
    std::vector<std::size_t> todo;
    std::vector<std::vector<double>> seen;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (pop[i].fitness) continue;
      if (auto it = cache.find(pop[i].genes); it != cache.end()) {
        pop[i].fitness = it->second;
      } else if (std::find(seen.begin(), seen.end(), pop[i].genes) == seen.end() &&
                 res.evaluations + todo.size() < budget) {
        todo.push_back(i);
        seen.push_back(pop[i].genes);
      }
    }
    std::vector<double> values(todo.size());
    parallel_for(todo.size(), cfg.jobs, [&](std::size_t t) { values[t] = fitness(apply_genes(prob, pop[todo[t]].genes)); });
    for (std::size_t t = 0; t < todo.size(); ++t) cache.emplace(pop[todo[t]].genes, values[t]);
    res.evaluations += todo.size();
    for (auto& c : pop)
      if (!c.fitness)
        if (auto it = cache.find(c.genes); it != cache.end()) c.fitness = it->second;
    // Anything still unscored ran past the budget and is dropped.
    pop.erase(std::remove_if(pop.begin(), pop.end(), [](const Chromosome& c) { return !c.fitness; }), pop.end());

    std::stable_sort(pop.begin(), pop.end(), [](const Chromosome& a, const Chromosome& b) { return *a.fitness > *b.fitness; });
    if (!pop.empty() && *pop.front().fitness > res.best_fitness) {
      res.best_fitness = *pop.front().fitness;
      res.best_genes = pop.front().genes;
    }
    res.trace.push_back(res.best_fitness);
    res.generations = gen + 1;
    stalled = todo.empty() ? stalled + 1 : 0;
    if (res.evaluations >= budget || stalled >= cfg.stall_limit || pop.empty()) break;

    pop.resize(std::min(keep, pop.size()));
    Rng rng = make_rng(cfg.seed, 1 + static_cast<std::uint64_t>(gen));
    const std::size_t survivors = pop.size();
    while (pop.size() < pop_n) {
      const Chromosome& a = pop[uniform_index(rng, survivors)];
      const Chromosome& b = pop[uniform_index(rng, survivors)];
      Chromosome child = swan_crossover(prob, a, b, cfg.p, rng);
      pop.push_back(mutate(prob, std::move(child), cfg, rng));
    }
  }
  res.best = apply_genes(prob, res.best_genes);
  return res;
}

// ---------------------------------------------------------------------------
// Refinement protocols.

struct RefineResult {
  DesignDocument initial;  // randomized starting point
  DesignDocument refined;
  double initial_score = 0;
  double refined_score = 0;
  EvolveResult run;
};

inline RefineResult refine(const RefineProblem& prob_in, const Fitness& fitness, GaConfig cfg) {
  cfg.validate();
  RefineProblem prob = prob_in;
  Rng rng = make_rng(cfg.seed, 0x1417);
  prob.base = apply_genes(prob, random_genes(prob, rng));
  RefineResult r;
  r.initial = prob.base;
  r.run = evolve(prob, fitness, cfg);
  r.refined = r.run.best;
  r.initial_score = fitness(r.initial);
  r.refined_score = r.run.best_fitness;
  return r;
}

inline Fitness scorer_fitness(const Scorer& model) {
  return [&model](const DesignDocument& d) { return score(model, d); };
}

/// Re-places one text element from a random start; aspect ratio is kept.
inline RefineResult refine_text(const Fitness& fitness, const DesignDocument& doc, std::size_t target, GaConfig cfg) {
  if (target >= doc.elements.size() || doc.elements[target].kind != ElementKind::Text)
    throw std::invalid_argument("refine_text: target is not a text element");
  cfg.lock_aspect = true;
  return refine(RefineProblem(doc, {target}, true), fitness, cfg);
}

/// Re-places every non-background element from a random start.
inline RefineResult refine_all(const Fitness& fitness, const DesignDocument& doc, const GaConfig& cfg) {
  std::vector<std::size_t> idx;
  for (std::size_t i = doc.foreground_begin(); i < doc.elements.size(); ++i) idx.push_back(i);
  if (idx.empty()) throw std::invalid_argument("refine_all: document has no foreground elements");
  return refine(RefineProblem(doc, idx, cfg.lock_aspect), fitness, cfg);
}

inline RefineResult refine_text(const Scorer& model, const DesignDocument& doc, std::size_t target, const GaConfig& cfg) {
  return refine_text(scorer_fitness(model), doc, target, cfg);
}

inline RefineResult refine_all(const Scorer& model, const DesignDocument& doc, const GaConfig& cfg) {
  return refine_all(scorer_fitness(model), doc, cfg);
}

}  // namespace dscore
