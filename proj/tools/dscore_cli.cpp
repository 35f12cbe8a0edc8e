// dscore: dataset generation, scorer training, scoring, refinement,
// evaluation and sensitivity maps from one executable.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dscore.hpp"
#include "dscore/testing/oracles.hpp"

namespace fs = std::filesystem;
using namespace dscore;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Flags that mirror a config key. Values are kept as text and applied on
/// top of the config file after parsing.
class Overrides {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_option(flag, values_[key], help);
    opts_.push_back({opt, key});
  }
  void apply(RunConfig& cfg) const {
    for (const auto& [opt, key] : opts_)
      if (opt->count() > 0) cfg.set(key, values_.at(key));
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> opts_;
};

RunConfig load_config(const Common& c, const Overrides& o) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  o.apply(cfg);
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

fs::path parent_dir(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

// Output files may name directories that do not exist yet.
const std::string& make_parent(const std::string& path) {
  if (!path.empty()) fs::create_directories(parent_dir(path));
  return path;
}

template <typename E>
E parse_enum(const std::optional<E>& v, const std::string& what, const std::string& text) {
  if (!v) throw ConfigError("unknown " + what + " '" + text + "'");
  return *v;
}

ScorerConfig scorer_config(const RunConfig& cfg) {
  ScorerConfig sc;
  sc.input_size = static_cast<int>(cfg.get_int("model.input_size"));
  sc.norm = parse_enum(parse_norm(cfg.get("model.norm")), "norm", cfg.get("model.norm"));
  sc.groups = static_cast<int>(cfg.get_int("model.groups"));
  sc.input = parse_enum(parse_input_mode(cfg.get("model.input")), "input mode", cfg.get("model.input"));
  return sc;
}

GaConfig ga_config(const RunConfig& cfg, const Common& c) {
  GaConfig g;
  g.population_size = static_cast<int>(cfg.get_int("ga.pop"));
  g.n_trials = static_cast<int>(cfg.get_int("ga.trials"));
  g.p = cfg.get_double("ga.p");
  g.mutation_sigma = cfg.get_double("ga.mutation_sigma");
  g.mutation_rate = cfg.get_double("ga.mutation_rate");
  g.elitism = cfg.get_double("ga.elitism");
  g.lock_aspect = cfg.get_bool("ga.lock_aspect");
  g.seed = c.seed;
  g.jobs = c.jobs;
  return g;
}

/// Window and stride are given for a 256-pixel raster and scaled to the
/// model's input size.
int scaled_pixels(double v, int size) { return std::max(1, static_cast<int>(std::lround(v * size / 256.0))); }

std::vector<fs::path> doc_files(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      std::vector<fs::path> found;
      for (const auto& ent : fs::directory_iterator(a))
        if (ent.is_regular_file() && ent.path().extension() == ".doc") found.push_back(ent.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(a);
    }
  }
  return out;
}

std::vector<std::size_t> parse_index_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoul(item));
  return out;
}

// ---------------------------------------------------------------------------

int run_dataset_gen(const Common& c, const RunConfig& cfg, const std::string& out) {
  const auto setting = parse_enum(parse_setting(cfg.get("data.setting")), "setting", cfg.get("data.setting"));
  const long n = cfg.get_int("data.n");
  if (n < 1) throw ConfigError("data.n must be positive");
  const auto docs = generate_synthetic(c.seed, static_cast<std::size_t>(n), static_cast<int>(cfg.get_int("data.max_elems")), c.jobs);
  const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * cfg.get_double("data.test_fraction")));
  const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(n) * cfg.get_double("data.val_fraction")));
  if (n_test + n_val >= docs.size()) throw ConfigError("validation and test fractions leave no training documents");
  const std::size_t n_train = docs.size() - n_val - n_test;
  const std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> splits = {
      {"train", {0, n_train}}, {"val", {n_train, n_train + n_val}}, {"test", {n_train + n_val, docs.size()}}};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, range] = splits[s];
    if (range.first == range.second) continue;
    std::vector<DesignDocument> part(docs.begin() + static_cast<std::ptrdiff_t>(range.first),
                                     docs.begin() + static_cast<std::ptrdiff_t>(range.second));
    const auto pairs = build_pairs(part, setting, mix_seed(c.seed, s + 1), c.jobs);
    write_split(fs::path(out) / name, pairs);
    std::cout << name << " " << pairs.size() << " pairs\n";
  }
  write_manifest(out, "dataset-gen", c.seed, cfg);
  return 0;
}

int run_train(const Common& c, const RunConfig& cfg, const std::string& data, const std::string& out) {
  const auto train_pairs = read_split(fs::path(data) / "train");
  const auto val_pairs = read_split(fs::path(data) / "val");
  Scorer model(scorer_config(cfg), c.seed);

  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch"));
  tc.seed = c.seed;
  tc.lr = cfg.get_double("train.lr");
  tc.beta1 = cfg.get_double("train.beta1");
  tc.beta2 = cfg.get_double("train.beta2");
  tc.weight_decay = cfg.get_double("train.weight_decay");
  tc.lr_period = static_cast<int>(cfg.get_int("train.lr_period"));
  tc.patience = static_cast<int>(cfg.get_int("train.patience"));
  tc.loss.alpha = cfg.get_double("train.alpha");
  tc.loss.beta = cfg.get_double("train.beta");
  tc.loss.m = cfg.get_double("train.margin");
  tc.loss.lambda = cfg.get_double("train.lambda");
  tc.loss.margin_mode = parse_enum(parse_margin_mode(cfg.get("train.margin_mode")), "margin mode", cfg.get("train.margin_mode"));
  tc.loss.sim_mode = parse_enum(parse_sim_mode(cfg.get("train.sim_mode")), "similarity mode", cfg.get("train.sim_mode"));
  tc.jobs = c.jobs;
  tc.on_epoch = [](const EpochReport& e) {
    std::cout << "epoch " << e.epoch << " lr " << fmt(e.lr) << " loss " << fmt(e.train_loss) << " val_racc "
              << fmt(e.val_racc) << std::endl;
  };

  const TrainReport report = train(model, train_pairs, val_pairs, tc);
  model.save(make_parent(out));
  std::ofstream csv(out + ".train.csv", std::ios::binary);
  csv << "epoch,lr,train_loss,val_racc\n";
  for (const auto& e : report.epochs) csv << e.epoch << "," << fmt(e.lr) << "," << fmt(e.train_loss) << "," << fmt(e.val_racc) << "\n";
  std::cout << "best_epoch " << report.best_epoch << " val_racc " << fmt(report.best_val_racc) << "\n";
  write_manifest(parent_dir(out), "train", c.seed, cfg);
  return 0;
}

int run_score(const Common& c, const RunConfig& cfg, const std::string& model_path, const std::string& doc_path,
              const std::string& out) {
  const Scorer model = Scorer::load(model_path);
  const std::string line = fmt(score(model, read_document(doc_path)));
  std::cout << line << "\n";
  if (!out.empty()) {
    std::ofstream(make_parent(out), std::ios::binary) << line << "\n";
    write_manifest(parent_dir(out), "score", c.seed, cfg);
  }
  return 0;
}

int run_refine(const Common& c, const RunConfig& cfg, const std::string& model_path, const std::string& doc_path,
               const std::string& mode, long target, const std::string& out, const std::string& render,
               const std::string& trace) {
  const Scorer model = Scorer::load(model_path);
  const DesignDocument doc = read_document(doc_path);
  const GaConfig ga = ga_config(cfg, c);
  RefineResult r;
  if (mode == "text") {
    std::size_t t = 0;
    if (target >= 0) {
      t = static_cast<std::size_t>(target);
    } else {
      while (t < doc.elements.size() && doc.elements[t].kind != ElementKind::Text) ++t;
    }
    r = refine_text(model, doc, t, ga);
  } else {
    r = refine_all(model, doc, ga);
  }
  write_document(make_parent(out), r.refined);
  if (!render.empty()) write_png(make_parent(render), render_rendition(r.refined, r.refined.canvas_h, r.refined.canvas_w));
  if (!trace.empty()) {
    std::ofstream csv(make_parent(trace), std::ios::binary);
    csv << "generation,best_score\n";
    for (std::size_t g = 0; g < r.run.trace.size(); ++g) csv << g << "," << fmt(r.run.trace[g]) << "\n";
  }
  std::cout << "initial " << fmt(r.initial_score) << " refined " << fmt(r.refined_score) << " evaluations "
            << r.run.evaluations << "\n";
  write_manifest(parent_dir(out), "refine", c.seed, cfg);
  return 0;
}

int run_eval(const Common& c, const RunConfig& cfg, const std::vector<std::string>& gt, const std::vector<std::string>& pred,
             const std::string& targets, const std::string& out) {
  const auto gf = doc_files(gt), pf = doc_files(pred);
  if (gf.size() != pf.size()) throw std::runtime_error("eval: " + std::to_string(gf.size()) + " ground-truth files but " +
                                                       std::to_string(pf.size()) + " predictions");
  std::vector<EvalRecord> records(gf.size());
  parallel_for(gf.size(), c.jobs, [&](std::size_t i) { records[i] = {read_document(gf[i]), read_document(pf[i])}; });
  const auto idx = parse_index_list(targets);
  char buf[160];
  std::snprintf(buf, sizeof buf, "miou=%.6f mbde=%.6f tmiou=%.6f n=%zu", mean_iou(records, idx), mean_bde(records, idx),
                type_mean_iou(records), records.size());
  std::cout << buf << "\n";
  if (!out.empty()) {
    std::ofstream(make_parent(out), std::ios::binary) << buf << "\n";
    write_manifest(parent_dir(out), "eval", c.seed, cfg);
  }
  return 0;
}

int run_sensitivity(const Common& c, const RunConfig& cfg, const std::string& model_path, const std::string& doc_path,
                    const std::string& out, const std::string& values) {
  const Scorer model = Scorer::load(model_path);
  SensitivityConfig sc;
  sc.window = scaled_pixels(cfg.get_double("eval.window"), model.input_size());
  sc.stride = scaled_pixels(cfg.get_double("eval.stride"), model.input_size());
  sc.jobs = c.jobs;
  const auto map = sensitivity_map(model, read_document(doc_path), sc);
  write_png(make_parent(out), colorize(map));
  if (!values.empty()) {
    std::ofstream csv(make_parent(values), std::ios::binary);
    for (int y = 0; y < map.grid_h; ++y) {
      for (int x = 0; x < map.grid_w; ++x) csv << (x ? "," : "") << fmt(map.grid[static_cast<std::size_t>(y) * map.grid_w + x]);
      csv << "\n";
    }
  }
  write_manifest(parent_dir(out), "sensitivity", c.seed, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design scoring and layout refinement"};
  app.require_subcommand(1);
  Common common;
  Overrides ov;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Settings file ([section] key = value)");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
  };

  std::string out, data, model, doc, mode = "all", render, trace, targets, values;
  long target = -1;
  std::vector<std::string> gt, pred;

  auto* gen = app.add_subcommand("dataset-gen", "Generate synthetic good/bad design pairs");
  add_common(gen);
  ov.add(gen, "--n", "data.n", "Number of good documents");
  ov.add(gen, "--setting", "data.setting", "biased, color or crossmatch");
  ov.add(gen, "--max-elems", "data.max_elems", "Maximum elements per document");
  gen->add_option("--out", out, "Dataset root")->required();

  auto* tr = app.add_subcommand("train", "Train the scorer");
  add_common(tr);
  tr->add_option("--data", data, "Dataset root with train/ and val/")->required();
  ov.add(tr, "--epochs", "train.epochs", "Epochs");
  ov.add(tr, "--batch", "train.batch", "Pairs per step");
  ov.add(tr, "--alpha", "train.alpha", "Ranking loss weight");
  ov.add(tr, "--beta", "train.beta", "Similarity loss weight");
  ov.add(tr, "--margin", "train.margin", "Hard margin");
  ov.add(tr, "--margin-mode", "train.margin_mode", "hard, transform or adaptive");
  ov.add(tr, "--sim-mode", "train.sim_mode", "deviance, exponential or square");
  ov.add(tr, "--patience", "train.patience", "Early-stopping patience in epochs (0 = off)");
  ov.add(tr, "--input", "model.input", "both, rendition or layout");
  ov.add(tr, "--norm", "model.norm", "group, batch, layer or instance");
  ov.add(tr, "--input-size", "model.input_size", "Raster side in pixels (multiple of 16)");
  tr->add_option("--out", out, "Checkpoint path")->required();

  auto* sc = app.add_subcommand("score", "Score one document");
  add_common(sc);
  sc->add_option("--model", model, "Checkpoint")->required();
  sc->add_option("--doc", doc, "Document")->required();
  sc->add_option("--out", out, "Also write the score to this file");

  auto* rf = app.add_subcommand("refine", "Refine element placement with the genetic algorithm");
  add_common(rf);
  rf->add_option("--model", model, "Checkpoint")->required();
  rf->add_option("--doc", doc, "Document")->required();
  rf->add_option("--mode", mode, "text or all")->check(CLI::IsMember({"text", "all"}));
  rf->add_option("--target", target, "Element index of the text to refine (mode text)");
  ov.add(rf, "--pop", "ga.pop", "Population size");
  ov.add(rf, "--trials", "ga.trials", "Fitness evaluation budget");
  ov.add(rf, "--p", "ga.p", "Probability of taking an element from parent 2");
  rf->add_option("--out", out, "Refined document")->required();
  rf->add_option("--render", render, "Rendition PNG of the refined document");
  rf->add_option("--trace", trace, "CSV of best score per generation");

  auto* ev = app.add_subcommand("eval", "Compare predicted documents with ground truth");
  add_common(ev);
  ev->add_option("--gt", gt, "Ground-truth documents or directories")->required();
  ev->add_option("--pred", pred, "Predicted documents or directories, same order")->required();
  ev->add_option("--targets", targets, "Comma-separated element indices (default: all foreground)");
  ev->add_option("--out", out, "Also write the report to this file");

  auto* sn = app.add_subcommand("sensitivity", "Occlusion sensitivity map");
  add_common(sn);
  sn->add_option("--model", model, "Checkpoint")->required();
  sn->add_option("--doc", doc, "Document")->required();
  ov.add(sn, "--window", "eval.window", "Occluding window side (pixels at 256)");
  ov.add(sn, "--stride", "eval.stride", "Window stride (pixels at 256)");
  sn->add_option("--out", out, "PNG path")->required();
  sn->add_option("--values", values, "CSV of the raw grid values");

  auto* chk = app.add_subcommand("selfcheck", "Gradient and oracle consistency checks");
  int seeds = 5;
  chk->add_option("--seeds", seeds, "Seeds for the gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = load_config(common, ov);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return run_dataset_gen(common, cfg, out);
    if (tr->parsed()) return run_train(common, cfg, data, out);
    if (sc->parsed()) return run_score(common, cfg, model, doc, out);
    if (rf->parsed()) return run_refine(common, cfg, model, doc, mode, target, out, render, trace);
    if (ev->parsed()) return run_eval(common, cfg, gt, pred, targets, out);
    if (sn->parsed()) return run_sensitivity(common, cfg, model, doc, out, values);
    if (chk->parsed()) return testing::run_selfcheck(std::cout, seeds) ? 0 : kExitFailure;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
