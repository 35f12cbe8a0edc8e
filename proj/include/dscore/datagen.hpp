// Synthetic good designs, the good-design filter, and good/bad pair
// construction for the biased, color and cross-match settings.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscore/color.hpp"
#include "dscore/design.hpp"
#include "dscore/document_io.hpp"
#include "dscore/parallel.hpp"
#include "dscore/perturbation.hpp"
#include "dscore/random.hpp"

namespace dscore {

inline constexpr std::size_t kMaxGoodElements = 10;
/// Intersections below this area are treated as touching, not overlapping.
inline constexpr double kOverlapAreaTol = 1e-12;

inline bool is_good_design(const DesignDocument& doc) {
  if (doc.elements.size() > kMaxGoodElements) return false;
  for (const Element& t : doc.elements) {
    if (t.kind != ElementKind::Text) continue;
    const Rect rt = element_rect(t);
    for (const Element& g : doc.elements)
      if (is_graphic(g.kind) && intersection_area(rt, element_rect(g)) > kOverlapAreaTol) return false;
  }
  return true;
}

namespace detail {

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  auto q = [m](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255)); };
  return {q(r), q(g), q(b)};
}

struct Row {
  std::vector<ElementKind> kinds;  // one element, or two graphics side by side
  int height = 1;                  // grid units
};

inline int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

}  // namespace detail

/// One grid-snapped synthetic design with a background and up to
/// max_elems - 1 foreground elements on a 12 x 12 grid with a one-cell margin.
inline DesignDocument generate_design(Rng& rng, int max_elems) {
  if (max_elems < 2 || max_elems > 10) throw std::invalid_argument("generate_design: max_elems must be in [2, 10]");
  using detail::uniform_int;
  constexpr int kGrid = 12;
  constexpr int kUsable = kGrid - 2;

  std::vector<ElementKind> items;
  if (max_elems == 2) {
    items.push_back(bernoulli(rng, 0.5) ? ElementKind::Text : ElementKind::Image);
  } else {
    const int n_img = uniform_int(rng, 1, std::min(3, max_elems - 2));
    const int n_txt = uniform_int(rng, 1, std::min(4, max_elems - 1 - n_img));
    for (int i = 0; i < n_img; ++i) items.push_back(bernoulli(rng, 0.7) ? ElementKind::Image : ElementKind::Svg);
    for (int i = 0; i < n_txt; ++i) items.push_back(ElementKind::Text);
    std::shuffle(items.begin(), items.end(), rng);
  }
  for (auto& k : items)
    if (k == ElementKind::Svg && max_elems == 2) k = ElementKind::Image;

  std::vector<detail::Row> rows;
  bool first_text = true;
  for (std::size_t i = 0; i < items.size(); ++i) {
    detail::Row row;
    row.kinds.push_back(items[i]);
    if (is_graphic(items[i])) {
      if (i + 1 < items.size() && is_graphic(items[i + 1]) && bernoulli(rng, 0.5)) {
        row.kinds.push_back(items[++i]);
      }
      row.height = uniform_int(rng, 2, 4);
    } else {
      row.height = first_text && bernoulli(rng, 0.4) ? 2 : 1;
      first_text = false;
    }
    rows.push_back(row);
  }
  auto total = [&] {
    int s = 0;
    for (const auto& r : rows) s += r.height;
    return s;
  };
  while (total() > kUsable) {
    auto tallest = std::max_element(rows.begin(), rows.end(),
                                    [](const auto& a, const auto& b) { return a.height < b.height; });
    if (tallest->height <= 1) break;
    --tallest->height;
  }
  const int spare = kUsable - total();
  const int slots = static_cast<int>(rows.size()) + 1;
  const int align = uniform_int(rng, 0, 2);  // 0 left, 1 center, 2 right

  const double hue = uniform(rng, 0, 360);
  DesignDocument doc;
  doc.canvas_w = 256;
  doc.canvas_h = 256;
  doc.elements.push_back(make_background(detail::hsv_to_rgb(hue, uniform(rng, 0.05, 0.2), uniform(rng, 0.92, 1.0)), 0));
  const Rgb text_color = detail::hsv_to_rgb(hue + 180, uniform(rng, 0.2, 0.6), uniform(rng, 0.1, 0.3));

  std::vector<Element> fg;
  int y = 1;
  int text_no = 0, img_no = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int gap = (static_cast<int>(r) + 1) * spare / slots - static_cast<int>(r) * spare / slots;
    y += gap;
    const auto& row = rows[r];
    std::vector<int> widths;
    int gutter = 0;
    if (row.kinds.size() == 2) {
      const int wi = uniform_int(rng, 3, 5);
      widths = {wi, wi};
      gutter = uniform_int(rng, 0, 1) * 2;  // even, so centered pairs stay on the grid
      if (2 * wi + gutter > kUsable) gutter = 0;
    } else if (row.kinds[0] == ElementKind::Text) {
      widths = {uniform_int(rng, 3, 10)};
    } else {
      widths = {uniform_int(rng, 4, 10)};
    }
    int span = gutter;
    for (int wv : widths) span += wv;
    if (align == 1 && (kGrid - span) % 2 != 0) {
      // keep centered content on whole grid cells
      if (widths.size() == 1) {
        widths[0] += widths[0] < kUsable ? 1 : -1;
      } else {
        gutter += gutter > 0 ? -1 : 1;
      }
      span = gutter;
      for (int wv : widths) span += wv;
    }
    int x = align == 0 ? 1 : align == 1 ? (kGrid - span) / 2 : kGrid - 1 - span;
    for (std::size_t j = 0; j < row.kinds.size(); ++j) {
      Element e;
      e.kind = row.kinds[j];
      const double x0 = static_cast<double>(x) / kGrid, x1 = static_cast<double>(x + widths[j]) / kGrid;
      const double y0 = static_cast<double>(y) / kGrid, y1 = static_cast<double>(y + row.height) / kGrid;
      e.cx = (x0 + x1) / 2;
      e.cy = (y0 + y1) / 2;
      e.w = x1 - x0;
      e.h = y1 - y0;
      if (e.kind == ElementKind::Text) {
        e.color = text_color;
        e.content_tag = "text-" + std::to_string(text_no++);
      } else {
        e.color = detail::hsv_to_rgb(hue + uniform(rng, -40, 40), uniform(rng, 0.4, 0.8), uniform(rng, 0.5, 0.85));
        e.content_tag = (e.kind == ElementKind::Svg ? "svg-" : "image-") + std::to_string(img_no++);
      }
      fg.push_back(std::move(e));
      x += widths[j] + gutter;
    }
    y += row.height;
  }
  std::vector<int> zs(fg.size());
  std::iota(zs.begin(), zs.end(), 1);
  std::shuffle(zs.begin(), zs.end(), rng);
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i].z = zs[i];
  for (auto& e : fg) doc.elements.push_back(std::move(e));
  sort_by_z(doc);
  return doc;
}

inline std::vector<DesignDocument> generate_synthetic(std::uint64_t seed, std::size_t n, int max_elems, int jobs = 1) {
  if (max_elems < 2 || max_elems > 10) throw std::invalid_argument("generate_synthetic: max_elems must be in [2, 10]");
  std::vector<DesignDocument> docs(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    Rng rng = make_rng(seed, i);
    docs[i] = generate_design(rng, max_elems);
  });
  return docs;
}

class NoOverlapPair : public std::runtime_error {
 public:
  NoOverlapPair() : std::runtime_error("recolor_bad: no text element overlaps an image, svg or background") {}
};

/// (text, underlying) index pairs where a text rect lies on top of a graphic
/// or background rect with positive overlap.
inline std::vector<std::pair<std::size_t, std::size_t>> recolor_candidates(const DesignDocument& doc) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t t = 0; t < doc.elements.size(); ++t) {
    if (doc.elements[t].kind != ElementKind::Text) continue;
    const Rect rt = element_rect(doc.elements[t]);
    for (std::size_t u = 0; u < doc.elements.size(); ++u) {
      const Element& eu = doc.elements[u];
      if (eu.kind == ElementKind::Text || eu.z >= doc.elements[t].z) continue;
      if (intersection_area(rt, element_rect(eu)) > kOverlapAreaTol) out.emplace_back(t, u);
    }
  }
  return out;
}

inline constexpr double kRecolorMinDeltaE = 2.0;
inline constexpr double kRecolorMaxDeltaE = 3.0;

/// Recolors one member of an overlapping text/graphic pair so the two colors
/// are within CIE76 distance (2, 3) of each other.
inline DesignDocument recolor_bad(const DesignDocument& doc, Rng& rng) {
  const auto pairs = recolor_candidates(doc);
  if (pairs.empty()) throw NoOverlapPair();
  const auto [t, u] = pairs[uniform_index(rng, pairs.size())];
  const bool recolor_text = bernoulli(rng, 0.5);
  const std::size_t target = recolor_text ? t : u;
  const Rgb anchor = doc.elements[recolor_text ? u : t].color;
  const Lab anchor_lab = rgb_to_lab(anchor);
  std::vector<Rgb> cands;
  for (int radius = 12; cands.empty() && radius <= 48; radius *= 2) {
    for (int dr = -radius; dr <= radius; ++dr)
      for (int dg = -radius; dg <= radius; ++dg)
        for (int db = -radius; db <= radius; ++db) {
          const int r = anchor.r + dr, g = anchor.g + dg, b = anchor.b + db;
          if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) continue;
          const Rgb c{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
          const double de = delta_e76(anchor_lab, rgb_to_lab(c));
          if (de > kRecolorMinDeltaE && de < kRecolorMaxDeltaE) cands.push_back(c);
        }
  }
  if (cands.empty()) throw std::runtime_error("recolor_bad: no color at the requested distance");
  DesignDocument out = doc;
  out.elements[target].color = cands[uniform_index(rng, cands.size())];
  return out;
}

inline DesignDocument recolor_bad(const DesignDocument& doc, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xc010);
  return recolor_bad(doc, rng);
}

enum class PairSetting { Biased, Color, CrossMatch };
enum class PairSource { Perturbation, ColorRecolor, CrossMatch };

inline std::string_view to_string(PairSetting s) {
  switch (s) {
    case PairSetting::Biased: return "biased";
    case PairSetting::Color: return "color";
    case PairSetting::CrossMatch: return "crossmatch";
  }
  return "?";
}

inline std::optional<PairSetting> parse_setting(std::string_view s) {
  for (auto v : {PairSetting::Biased, PairSetting::Color, PairSetting::CrossMatch})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline std::string_view to_string(PairSource s) {
  switch (s) {
    case PairSource::Perturbation: return "perturbation";
    case PairSource::ColorRecolor: return "color_recolor";
    case PairSource::CrossMatch: return "crossmatch";
  }
  return "?";
}

struct DesignPair {
  DesignDocument good;
  DesignDocument bad;
  PairSource source = PairSource::Perturbation;
  /// Perturbation that produced `bad` (Perturbation and CrossMatch sources).
  PerturbationKind kind = PerturbationKind::PosNoise005;
  std::uint64_t seed = 0;
  std::size_t good_index = 0;
  std::size_t bad_index = 0;
};

/// Builds good/bad pairs. Biased: one uniformly sampled perturbation per
/// document. Color: recolored pairs for documents that qualify. CrossMatch:
/// good x paired with the biased bad version of some y != x.
inline std::vector<DesignPair> build_pairs(const std::vector<DesignDocument>& docs, PairSetting setting,
                                           std::uint64_t seed, int jobs = 1) {
  for (const auto& d : docs)
    if (!is_good_design(d)) throw std::invalid_argument("build_pairs: input contains a document that fails the good-design filter");
  if (setting == PairSetting::CrossMatch && docs.size() < 2)
    throw std::invalid_argument("build_pairs: cross-match needs at least 2 documents");

  if (setting == PairSetting::Color) {
    std::vector<std::optional<DesignPair>> slots(docs.size());
    parallel_for(docs.size(), jobs, [&](std::size_t i) {
      if (recolor_candidates(docs[i]).empty()) return;
      DesignPair p;
      p.good = docs[i];
      p.seed = mix_seed(seed, i);
      p.bad = recolor_bad(docs[i], p.seed);
      p.source = PairSource::ColorRecolor;
      p.good_index = p.bad_index = i;
      slots[i] = std::move(p);
    });
    std::vector<DesignPair> out;
    for (auto& s : slots)
      if (s) out.push_back(std::move(*s));
    return out;
  }

  std::vector<DesignPair> biased(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    DesignPair& p = biased[i];
    p.seed = mix_seed(seed, i);
    Rng pick = make_rng(p.seed, 1);
    p.kind = perturbation_from_index(uniform_index(pick, kPerturbationCount));
    p.good = docs[i];
    p.bad = perturb(docs[i], p.kind, p.seed);
    p.good_index = p.bad_index = i;
  });
  if (setting == PairSetting::Biased) return biased;

  Rng rng = make_rng(seed, 0xc805);
  std::vector<DesignPair> out(docs.size());
  for (std::size_t x = 0; x < docs.size(); ++x) {
    const std::size_t y = (x + 1 + uniform_index(rng, docs.size() - 1)) % docs.size();
    DesignPair& p = out[x];
    p.good = docs[x];
    p.bad = biased[y].bad;
    p.kind = biased[y].kind;
    p.seed = biased[y].seed;
    p.source = PairSource::CrossMatch;
    p.good_index = x;
    p.bad_index = y;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory: <root>/<split>/<pair_id>/{good.doc, bad.doc, meta.txt}

inline std::string pair_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

inline std::string pair_meta(const DesignPair& p) {
  std::string s = "source " + std::string(to_string(p.source)) + "\n";
  if (p.source != PairSource::ColorRecolor) s += "perturbation " + std::string(to_string(p.kind)) + "\n";
  s += "seed " + std::to_string(p.seed) + "\n";
  s += "good_index " + std::to_string(p.good_index) + "\n";
  s += "bad_index " + std::to_string(p.bad_index) + "\n";
  return s;
}

inline void write_split(const std::filesystem::path& dir, const std::vector<DesignPair>& pairs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const fs::path pd = dir / pair_id(i);
    fs::create_directories(pd);
    write_document(pd / "good.doc", pairs[i].good);
    write_document(pd / "bad.doc", pairs[i].bad);
    std::ofstream(pd / "meta.txt", std::ios::binary) << pair_meta(pairs[i]);
  }
}

inline std::vector<DesignPair> read_split(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("missing split directory " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& ent : fs::directory_iterator(dir))
    if (ent.is_directory()) subdirs.push_back(ent.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<DesignPair> out;
  for (const auto& pd : subdirs) {
    DesignPair p;
    p.good = read_document(pd / "good.doc");
    p.bad = read_document(pd / "bad.doc");
    std::ifstream meta(pd / "meta.txt");
    std::string key, value;
    while (meta >> key >> value) {
      if (key == "source") {
        if (value == "color_recolor") p.source = PairSource::ColorRecolor;
        else if (value == "crossmatch") p.source = PairSource::CrossMatch;
        else p.source = PairSource::Perturbation;
      } else if (key == "perturbation") {
        if (auto k = parse_perturbation(value)) p.kind = *k;
      } else if (key == "seed") {
        p.seed = std::stoull(value);
      } else if (key == "good_index") {
        p.good_index = std::stoull(value);
      } else if (key == "bad_index") {
        p.bad_index = std::stoull(value);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dscore
