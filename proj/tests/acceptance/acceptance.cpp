// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Progress goes to stderr.
#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dscore.hpp"
#include "dscore/testing/oracles.hpp"

using namespace dscore;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Options {
  int size = 64;
  int epochs = 4;
  int jobs = 1;
  std::string work = "acceptance_work";
  std::string only;
};

struct Report {
  int failed = 0;
  void line(int id, bool pass, const std::string& text) {
    std::cout << "C" << id << " " << (pass ? "PASS" : "FAIL") << " " << text << std::endl;
    failed += !pass;
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

// ---------------------------------------------------------------------------
// Shared data and models.

constexpr std::uint64_t kDataSeed = 2024;
constexpr std::size_t kTrainDocs = 2000, kValDocs = 250, kTestDocs = 250;

struct Data {
  std::vector<DesignDocument> test_docs;
  std::vector<DesignPair> train, val, test_biased, test_cross;
};

const Data& data(int jobs) {
  static const Data d = [&] {
    Data out;
    const auto docs = generate_synthetic(kDataSeed, kTrainDocs + kValDocs + kTestDocs, 10, jobs);
    auto slice = [&](std::size_t b, std::size_t n) {
      return std::vector<DesignDocument>(docs.begin() + static_cast<std::ptrdiff_t>(b), docs.begin() + static_cast<std::ptrdiff_t>(b + n));
    };
    out.train = build_pairs(slice(0, kTrainDocs), PairSetting::Biased, mix_seed(kDataSeed, 1), jobs);
    out.val = build_pairs(slice(kTrainDocs, kValDocs), PairSetting::Biased, mix_seed(kDataSeed, 2), jobs);
    out.test_docs = slice(kTrainDocs + kValDocs, kTestDocs);
    out.test_biased = build_pairs(out.test_docs, PairSetting::Biased, mix_seed(kDataSeed, 3), jobs);
    out.test_cross = build_pairs(out.test_docs, PairSetting::CrossMatch, mix_seed(kDataSeed, 3), jobs);
    return out;
  }();
  return d;
}

struct Trained {
  Scorer model;
  double biased = 0, cross = 0, seconds = 0;
};

Trained train_one(const Options& o, std::uint64_t seed, InputMode input) {
  const Data& d = data(o.jobs);
  ScorerConfig sc;
  sc.input_size = o.size;
  sc.input = input;
  Trained t{Scorer(sc, seed)};
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.seed = seed;
  tc.jobs = o.jobs;
  tc.on_epoch = [&](const EpochReport& e) {
    std::cerr << "  [train seed " << seed << " " << to_string(input) << "] epoch " << e.epoch << " loss " << e.train_loss
              << " val_racc " << e.val_racc << std::endl;
  };
  const auto t0 = Clock::now();
  train(t.model, d.train, d.val, tc);
  t.seconds = seconds_since(t0);
  t.biased = rank_accuracy(t.model, d.test_biased, o.jobs);
  t.cross = rank_accuracy(t.model, d.test_cross, o.jobs);
  return t;
}

std::map<std::pair<std::uint64_t, InputMode>, Trained>& model_cache() {
  static std::map<std::pair<std::uint64_t, InputMode>, Trained> cache;
  return cache;
}

const Trained& trained(const Options& o, std::uint64_t seed, InputMode input = InputMode::Both) {
  auto& cache = model_cache();
  auto it = cache.find({seed, input});
  if (it == cache.end()) it = cache.emplace(std::make_pair(seed, input), train_one(o, seed, input)).first;
  return it->second;
}

// ---------------------------------------------------------------------------

void c1_gradients(Report& rep) {
  const auto t0 = Clock::now();
  double layers = 0, e2e = 0;
  std::string worst_layer;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    for (const auto& r : testing::check_layers(s))
      if (r.max_rel_error > layers) layers = r.max_rel_error, worst_layer = r.name;
    e2e = std::max(e2e, testing::check_end_to_end(s, 0.002));
  }
  const double secs = seconds_since(t0);
  rep.line(1, layers < 1e-4 && e2e < 1e-3 && secs < 120,
           fmt("gradient checks over 5 seeds: layer max rel err %.2e (%s, limit 1e-4), end-to-end max rel err %.2e "
               "(limit 1e-3), %.1f s (limit 120 s)",
               layers, worst_layer.c_str(), e2e, secs));
}

void c2_quality(const Options& o, Report& rep) {
  std::vector<double> biased, cross;
  double secs = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Trained& t = trained(o, seed);
    biased.push_back(t.biased);
    cross.push_back(t.cross);
    secs += t.seconds;
    std::cerr << "  seed " << seed << " biased " << t.biased << " crossmatch " << t.cross << std::endl;
  }
  const double mb = median(biased), mc = median(cross);
  rep.line(2, mb >= 0.85 && mc >= 0.75,
           fmt("scorer quality (%zu train pairs, %dx%d px, %d epochs, 3 seeds): median held-out biased RAcc %.4f "
               "(>= 0.85), cross-match RAcc %.4f (>= 0.75); per seed biased %.4f/%.4f/%.4f cross %.4f/%.4f/%.4f; "
               "training %.0f s total",
               data(o.jobs).train.size(), o.size, o.size, o.epochs, mb, mc, biased[0], biased[1], biased[2], cross[0],
               cross[1], cross[2], secs));
}

void c3_ablation(const Options& o, Report& rep) {
  const double both = trained(o, 1).biased;
  const double ren = trained(o, 1, InputMode::Rendition).biased;
  const double lay = trained(o, 1, InputMode::Layout).biased;
  rep.line(3, both >= ren && both >= lay,
           fmt("input ablation, seed 1, same budget: held-out biased RAcc rendition+layout %.4f, rendition only %.4f, "
               "layout only %.4f",
               both, ren, lay));
}

void c4_closed_forms(Report& rep) {
  const double a = sim_loss(-1, SimMode::Deviance), b = sim_loss(0, SimMode::Deviance), c = sim_loss(1, SimMode::Deviance);
  const double ea = std::abs(a - std::log(std::exp(-2.0) + 1)), eb = std::abs(b - std::log(2.0)),
               ec = std::abs(c - std::log(std::exp(2.0) + 1));
  bool hinge_ok = true;
  Rng rng = make_rng(4);
  for (int i = 0; i < 1000; ++i) {
    // Dyadic values keep sg - sb exact.
    const double m = static_cast<double>(uniform_index(rng, 64)) / 64, sb = static_cast<double>(uniform_index(rng, 256)) / 256 - 0.5;
    const double sg = sb + m;
    hinge_ok = hinge_ok && hinge(sg, sb, m) == 0.0 && hinge(sg - 1.0 / 1024, sb, m) > 0.0;
    const std::vector<double> g{sg}, bb{sb};
    LossConfig cfg;
    cfg.m = m;
    hinge_ok = hinge_ok && pair_loss(g, bb, {{1.0}}, {{1.0}}, cfg).rank == 0.0;
  }
  const double worst = std::max({ea, eb, ec});
  rep.line(4, worst < 1e-6 && hinge_ok,
           fmt("loss closed forms: deviance at -1/0/1 = %.9f/%.9f/%.9f, max abs err %.1e (limit 1e-6); hinge zero at "
               "Sg - Sb = m on 1000 cases: %s",
               a, b, c, worst, hinge_ok ? "yes" : "no"));
}

void c5_metrics(Report& rep) {
  const auto t0 = Clock::now();
  const auto docs = generate_synthetic(55, 200, 10);
  Rng rng = make_rng(55, 1);
  std::vector<EvalRecord> recs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    DesignDocument pred = perturb(docs[i], perturbation_from_index(uniform_index(rng, kPerturbationCount)), rng);
    for (std::size_t k = pred.foreground_begin(); k < pred.elements.size(); ++k) {
      Element& e = pred.elements[k];
      e.w = std::min(e.w, 1.0);
      e.h = std::min(e.h, 1.0);
      contain(e);
    }
    recs.push_back({docs[i], pred});
  }
  const double miou = mean_iou(recs), tmiou = type_mean_iou(recs);
  const double pm = testing::pixel_mean_iou(recs, 1000), pt = testing::pixel_type_mean_iou(recs, 1000);
  const double dm = std::abs(miou - pm), dt = std::abs(tmiou - pt);

  // Edge coordinates in quarters and eighths keep every term exact.
  int exact = 0;
  for (int i = 0; i < 20; ++i) {
    const double x0 = (i % 4) / 8.0, y0 = (i % 3) / 8.0, dx = (i % 5) / 16.0, dy = ((i * 7) % 4) / 16.0;
    const Rect a{x0, y0, x0 + 0.25, y0 + 0.375};
    const Rect b{x0 + dx, y0 - dy, x0 + 0.25 + 2 * dx, y0 + 0.375 + dy};
    const double hand = (dx + 2 * dx + dy + dy) / 4;
    EvalRecord r;
    Element g;
    g.kind = ElementKind::Image;
    g.cx = a.center_x(), g.cy = a.center_y(), g.w = a.width(), g.h = a.height();
    Element p = g;
    p.cx = b.center_x(), p.cy = b.center_y(), p.w = b.width(), p.h = b.height();
    r.ground_truth.elements = {g};
    r.predicted.elements = {p};
    exact += mean_bde({r}) == hand;
  }
  rep.line(5, dm < 1e-3 && dt < 1e-3 && exact == 20,
           fmt("metric oracles on 200 document pairs: mIoU %.6f vs pixel %.6f (diff %.1e), T-mIoU %.6f vs pixel %.6f "
               "(diff %.1e), limit 1e-3; mBDE exact on %d/20 constructed cases; %.1f s",
               miou, pm, dm, tmiou, pt, dt, exact, seconds_since(t0)));
}

std::vector<std::size_t> foreground(const DesignDocument& d) {
  std::vector<std::size_t> idx;
  for (std::size_t i = d.foreground_begin(); i < d.elements.size(); ++i) idx.push_back(i);
  return idx;
}

void c6_ga(const Options& o, Report& rep) {
  const auto t0 = Clock::now();
  const Scorer& model = trained(o, 1).model;
  const Data& d = data(o.jobs);
  int monotone = 0, within_budget = 0;
  std::size_t max_evals = 0;
  GaConfig cfg;
  cfg.jobs = o.jobs;
  for (int run = 0; run < 20; ++run) {
    cfg.seed = static_cast<std::uint64_t>(run);
    std::atomic<std::size_t> calls{0};
    const Fitness f = [&](const DesignDocument& doc) {
      ++calls;
      return score(model, doc);
    };
    const auto& doc = d.test_docs[static_cast<std::size_t>(run)];
    const EvolveResult r = evolve(RefineProblem(doc, foreground(doc)), f, cfg);
    monotone += std::is_sorted(r.trace.begin(), r.trace.end());
    within_budget += calls.load() <= static_cast<std::size_t>(cfg.n_trials) && r.evaluations == calls.load();
    max_evals = std::max(max_evals, calls.load());
  }

  // Grid snapping against exhaustive slot enumeration.
  const auto corpus = generate_synthetic(66, 200, 4);
  Rng rng = make_rng(66, 1);
  int snap_cases = 0, snap_match = 0;
  for (const auto& base : corpus) {
    const DesignDocument doc = perturb(base, PerturbationKind::PosNoise010, rng);
    for (std::size_t i = doc.foreground_begin(); i < doc.elements.size(); ++i) {
      std::vector<Element> canvas;
      for (std::size_t j = doc.foreground_begin(); j < doc.elements.size(); ++j)
        if (j != i) canvas.push_back(doc.elements[j]);
      const Element& e = doc.elements[i];
      const auto slot = testing::brute_force_slot(e, canvas);
      const Element want = slot ? snap_to(e, *slot) : e;
      const Element got = grid_snap(e, canvas);
      ++snap_cases;
      snap_match += got.cx == want.cx && got.cy == want.cy && got.w == want.w && got.h == want.h;
    }
  }

  // Mutation containment.
  int contained = 0;
  GaConfig mcfg;
  mcfg.mutation_rate = 0.5;
  mcfg.mutation_sigma = 0.2;
  const auto mdocs = generate_synthetic(67, 100, 10);
  for (int s = 0; s < 10000; ++s) {
    const auto& doc = mdocs[static_cast<std::size_t>(s) % mdocs.size()];
    const RefineProblem prob(doc, foreground(doc), s % 2 == 0);
    Chromosome c;
    c.genes = random_genes(prob, rng);
    const DesignDocument out = apply_genes(prob, mutate(prob, c, mcfg, rng).genes);
    bool ok = true;
    for (std::size_t i : prob.refinable) ok = ok && rect_within_unit(element_rect(out.elements[i]));
    contained += ok;
  }
  rep.line(6, monotone == 20 && within_budget == 20 && snap_match == snap_cases && contained == 10000,
           fmt("GA soundness: best-ever trace non-decreasing %d/20, evaluations within budget %d/20 (max %zu of %d); "
               "grid_snap equals exhaustive oracle %d/%d; mutation containment %d/10000; %.1f s",
               monotone, within_budget, max_evals, cfg.n_trials, snap_match, snap_cases, contained, seconds_since(t0)));
}

void c7_refinement(const Options& o, Report& rep) {
  const Scorer& model = trained(o, 1).model;
  const Data& d = data(o.jobs);
  GaConfig cfg;
  cfg.jobs = o.jobs;

  int improved = 0, tasks = 0;
  double bde_init = 0, bde_ref = 0, max_secs = 0, iou_init = 0, iou_ref = 0;
  for (std::size_t i = 0; tasks < 50 && i < d.test_docs.size(); ++i) {
    const auto& doc = d.test_docs[i];
    std::size_t t = doc.elements.size();
    for (std::size_t k = 0; k < doc.elements.size() && t == doc.elements.size(); ++k)
      if (doc.elements[k].kind == ElementKind::Text) t = k;
    if (t == doc.elements.size()) continue;
    cfg.seed = 700 + i;
    const auto t0 = Clock::now();
    const RefineResult r = refine_text(model, doc, t, cfg);
    max_secs = std::max(max_secs, seconds_since(t0));
    const double a = mean_iou({{doc, r.initial}}, {t}), b = mean_iou({{doc, r.refined}}, {t});
    improved += b > a;
    iou_init += a;
    iou_ref += b;
    bde_init += mean_bde({{doc, r.initial}}, {t});
    bde_ref += mean_bde({{doc, r.refined}}, {t});
    ++tasks;
  }
  const double n = tasks;

  int all_improved = 0, all_tasks = 0;
  double t_init = 0, t_ref = 0;
  for (std::size_t i = 100; all_tasks < 25; ++i) {
    const auto& doc = d.test_docs[i];
    cfg.seed = 900 + i;
    const auto t0 = Clock::now();
    const RefineResult r = refine_all(model, doc, cfg);
    max_secs = std::max(max_secs, seconds_since(t0));
    const double a = type_mean_iou({{doc, r.initial}}), b = type_mean_iou({{doc, r.refined}});
    all_improved += b > a;
    t_init += a;
    t_ref += b;
    ++all_tasks;
  }
  const bool pass = improved >= 40 && bde_ref < bde_init && all_improved >= 20 && max_secs <= 30;
  rep.line(7, pass,
           fmt("refinement: refine-text mIoU improved on %d/%d tasks (need 40), mean mIoU %.4f -> %.4f, mean mBDE "
               "%.4f -> %.4f; refine-all T-mIoU improved on %d/%d (need 20), mean %.4f -> %.4f; slowest refinement "
               "%.1f s (limit 30 s)",
               improved, tasks, iou_init / n, iou_ref / n, bde_init / n, bde_ref / n, all_improved, all_tasks,
               t_init / all_tasks, t_ref / all_tasks, max_secs));
}

void c8_sensitivity(const Options& o, Report& rep) {
  const Data& d = data(o.jobs);
  const RasterPair base = render_pair(d.test_docs[0], o.size, o.size);
  SensitivityConfig sc;
  sc.window = std::max(1, static_cast<int>(std::lround(60.0 * o.size / 256)));
  sc.stride = std::max(1, static_cast<int>(std::lround(10.0 * o.size / 256)));
  sc.jobs = o.jobs;
  const auto flat = sensitivity_map([](const RasterPair&) { return 1.25; }, base, sc);
  const bool zero = std::all_of(flat.values.begin(), flat.values.end(), [](double v) { return v == 0.0; });

  const Scorer& model = trained(o, 1).model;
  std::vector<double> ratios;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& doc = d.test_docs[i];
    const auto m = sensitivity_map(model, doc, sc);
    double on = 0, off = 0;
    long n_on = 0, n_off = 0;
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        const double px = (x + 0.5) / m.w, py = (y + 0.5) / m.h;
        bool covered = false;
        for (std::size_t k = doc.foreground_begin(); k < doc.elements.size(); ++k)
          covered = covered || testing::covers(element_rect(doc.elements[k]), px, py);
        (covered ? on : off) += std::abs(m.at(y, x));
        (covered ? n_on : n_off) += 1;
      }
    if (n_on == 0 || n_off == 0) continue;
    const double mean_off = off / static_cast<double>(n_off);
    ratios.push_back(mean_off > 0 ? (on / static_cast<double>(n_on)) / mean_off : std::numeric_limits<double>::infinity());
  }
  const double med = ratios.empty() ? 0.0 : median(ratios);
  rep.line(8, zero && med > 1,
           fmt("sensitivity maps: constant scorer map all zero: %s; trained scorer element/background mean |value| "
               "ratio median %.3f over %zu docs (> 1), window %d stride %d px at %d px",
               zero ? "yes" : "no", med, ratios.size(), sc.window, sc.stride, o.size));
}

// ---------------------------------------------------------------------------
// CLI reproducibility.

int sh(const std::string& cmd) {
  const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& ent : fs::recursive_directory_iterator(root))
    if (ent.is_regular_file()) out[fs::relative(ent.path(), root).string()] = slurp(ent.path());
  return out;
}

void c9_reproducibility(const Options& o, Report& rep) {
  const fs::path root = fs::absolute(o.work) / "cli";
  fs::remove_all(root);
  const std::string cli = DSCORE_CLI_PATH;

  struct Step {
    std::string name, args;
  };
  // Later steps read outputs of run "a".
  const std::string a = (root / "a").string();
  const std::vector<Step> steps = {
      {"dataset-gen", "dataset-gen --n 40 --seed 5 --out {out}/data"},
      {"train", "train --data " + a + "/data --epochs 2 --input-size 32 --seed 5 --out {out}/model/model.ckpt"},
      {"score", "score --model " + a + "/model/model.ckpt --doc " + a + "/data/test/000000/good.doc --out {out}/score/score.txt"},
      {"refine", "refine --model " + a + "/model/model.ckpt --doc " + a +
                     "/data/test/000001/good.doc --mode all --pop 20 --trials 300 --seed 5 --out {out}/refine/refined.doc "
                     "--trace {out}/refine/trace.csv --render {out}/refine/refined.png"},
      {"refine-text", "refine --model " + a + "/model/model.ckpt --doc " + a +
                          "/data/test/000002/good.doc --mode text --pop 20 --trials 300 --seed 6 --out "
                          "{out}/refine_text/refined.doc --trace {out}/refine_text/trace.csv"},
      {"eval", "eval --gt " + a + "/data/test/000001/good.doc --pred " + a + "/refine/refined.doc --out {out}/eval/report.txt"},
      {"sensitivity", "sensitivity --model " + a + "/model/model.ckpt --doc " + a +
                          "/data/test/000000/good.doc --out {out}/sens/map.png --values {out}/sens/values.csv"},
      {"selfcheck", "selfcheck --seeds 1 > {out}/selfcheck.txt"},
  };
  auto expand = [](std::string s, const std::string& out) {
    for (std::size_t p; (p = s.find("{out}")) != std::string::npos;) s.replace(p, 5, out);
    return s;
  };
  auto subdir = [](const std::string& args) {
    const auto p = args.find("{out}/");
    if (p == std::string::npos) return std::string();
    const auto e = args.find_first_of("/ ", p + 6);
    return args.substr(p + 6, e - p - 6);
  };

  std::vector<std::string> bad;
  for (const auto& s : steps) {
    int rc = 0;
    for (const auto& [run, jobs] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
      const std::string out = (root / run).string();
      fs::create_directories(out);
      std::string args = expand(s.args, out);
      const auto redirect = args.find(" > ");
      std::string tail;
      if (redirect != std::string::npos) {
        tail = args.substr(redirect);
        args = args.substr(0, redirect);
      }
      // selfcheck is single-threaded and takes no --jobs.
      const std::string job_flag = s.name == "selfcheck" ? "" : " --jobs " + std::to_string(jobs);
      const std::string cmd = cli + " " + args + job_flag + tail;
      if (!tail.empty()) {
        const int st = std::system((cmd + " 2>/dev/null").c_str());
        rc |= WIFEXITED(st) ? WEXITSTATUS(st) : 1;
      } else {
        rc |= sh(cmd);
      }
    }
    const std::string sub = subdir(s.args);
    const bool is_file = sub.find('.') != std::string::npos;
    auto content = [&](const std::string& run) {
      const fs::path p = root / run / sub;
      return is_file ? std::map<std::string, std::string>{{sub, slurp(p)}} : tree(p);
    };
    const auto ca = content("a"), cb = content("b"), cc = content("c");
    const bool same = rc == 0 && !ca.empty() && ca == cb && ca == cc;
    std::cerr << "  [cli] " << s.name << " exit " << rc << " files " << ca.size() << (same ? " identical" : " DIFFER") << std::endl;
    if (!same) bad.push_back(s.name);
  }
  std::string which;
  for (const auto& b : bad) which += (which.empty() ? "" : ",") + b;
  rep.line(9, bad.empty(),
           fmt("CLI reproducibility: %zu/%zu commands byte-identical across two runs and --jobs 1 vs 4%s%s",
               steps.size() - bad.size(), steps.size(), bad.empty() ? "" : "; differing: ", which.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options o;
  app.add_option("--size", o.size, "Scorer input size for the trained-model criteria");
  app.add_option("--epochs", o.epochs, "Training epochs per model");
  app.add_option("--jobs", o.jobs, "Worker threads");
  app.add_option("--work", o.work, "Scratch directory");
  app.add_option("--only", o.only, "Comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);

  std::set<int> only;
  {
    std::stringstream ss(o.only);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) only.insert(std::stoi(item));
  }
  auto want = [&](int c) { return only.empty() || only.count(c); };

  fs::create_directories(o.work);
  Report rep;
  const auto t0 = Clock::now();
  try {
    if (want(1)) c1_gradients(rep);
    if (want(4)) c4_closed_forms(rep);
    if (want(5)) c5_metrics(rep);
    if (want(9)) c9_reproducibility(o, rep);
    if (want(2)) c2_quality(o, rep);
    if (want(3)) c3_ablation(o, rep);
    if (want(6)) c6_ga(o, rep);
    if (want(7)) c7_refinement(o, rep);
    if (want(8)) c8_sensitivity(o, rep);
  } catch (const std::exception& e) {
    std::cout << "ERROR " << e.what() << std::endl;
    return 1;
  }
  std::cerr << "total " << seconds_since(t0) << " s" << std::endl;
  return rep.failed == 0 ? 0 : 1;
}
