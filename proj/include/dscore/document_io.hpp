// Plain-text document format.
//
//   # comment
//   canvas <w> <h>
//   elem <kind> <cx> <cy> <w> <h> <z> <r> <g> <b> <opacity> <content_tag>
//
// Floats are written in shortest round-trip form. The content tag is a single
// token: whitespace, '%', '#' and control bytes are percent-encoded and the
// empty tag is written as "-".
#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dscore/design.hpp"

namespace dscore {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline bool needs_escape(unsigned char c) {
  return c <= 0x20 || c == 0x7f || c == '%' || c == '#';
}

inline std::string encode_tag(std::string_view tag) {
  if (tag.empty()) return "-";
  if (tag == "-") return "%2D";
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(tag.size());
  for (unsigned char c : tag) {
    if (needs_escape(c)) {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

inline bool decode_tag(std::string_view s, std::string& out) {
  out.clear();
  if (s == "-") return true;
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) return false;
    const int hi = nib(s[i + 1]), lo = nib(s[i + 2]);
    if (hi < 0 || lo < 0) return false;
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return true;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, int line, const char* field) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(line, field, "cannot parse '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline std::string save_document(const DesignDocument& doc) {
  std::string out = "canvas " + std::to_string(doc.canvas_w) + " " + std::to_string(doc.canvas_h) + "\n";
  for (const Element& e : doc.elements) {
    out += "elem ";
    out += to_string(e.kind);
    for (double v : {e.cx, e.cy, e.w, e.h}) {
      out += ' ';
      out += detail::format_double(v);
    }
    out += ' ' + std::to_string(e.z);
    out += ' ' + std::to_string(e.color.r) + ' ' + std::to_string(e.color.g) + ' ' +
           std::to_string(e.color.b);
    out += ' ' + detail::format_double(e.opacity);
    out += ' ' + detail::encode_tag(e.content_tag);
    out += '\n';
  }
  return out;
}

/// Parses and validates a document; elements are sorted by z on load.
inline DesignDocument load_document(std::string_view text) {
  using detail::parse_number;
  DesignDocument doc;
  bool have_canvas = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0].front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    if (tok[0] == "canvas") {
      if (have_canvas) throw ParseError(line_no, "canvas", "duplicate canvas line");
      if (tok.size() != 3) throw ParseError(line_no, "canvas", "expected 'canvas <w> <h>'");
      doc.canvas_w = parse_number<int>(tok[1], line_no, "canvas_w");
      doc.canvas_h = parse_number<int>(tok[2], line_no, "canvas_h");
      have_canvas = true;
    } else if (tok[0] == "elem") {
      static constexpr const char* names[] = {"kind", "cx", "cy", "w", "h", "z",
                                              "r", "g", "b", "opacity", "content_tag"};
      if (tok.size() != 12) {
        const std::size_t missing = tok.size() < 12 ? tok.size() - 1 : 11;
        throw ParseError(line_no, missing < 11 ? names[missing] : "content_tag",
                         "expected 11 fields after 'elem', got " + std::to_string(tok.size() - 1));
      }
      Element e;
      if (!parse_kind(tok[1], e.kind)) throw ParseError(line_no, "kind", "unknown kind '" + std::string(tok[1]) + "'");
      e.cx = parse_number<double>(tok[2], line_no, "cx");
      e.cy = parse_number<double>(tok[3], line_no, "cy");
      e.w = parse_number<double>(tok[4], line_no, "w");
      e.h = parse_number<double>(tok[5], line_no, "h");
      e.z = parse_number<int>(tok[6], line_no, "z");
      const char* ch[] = {"r", "g", "b"};
      int rgb[3];
      for (int c = 0; c < 3; ++c) {
        rgb[c] = parse_number<int>(tok[7 + c], line_no, ch[c]);
        if (rgb[c] < 0 || rgb[c] > 255) throw ParseError(line_no, ch[c], "color out of range");
      }
      e.color = {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                 static_cast<std::uint8_t>(rgb[2])};
      e.opacity = parse_number<double>(tok[10], line_no, "opacity");
      if (!detail::decode_tag(tok[11], e.content_tag))
        throw ParseError(line_no, "content_tag", "bad percent escape");
      doc.elements.push_back(std::move(e));
    } else {
      throw ParseError(line_no, "record", "unknown record '" + std::string(tok[0]) + "'");
    }
    if (nl == text.size()) break;
  }
  if (!have_canvas) throw ParseError(line_no, "canvas", "missing canvas line");
  sort_by_z(doc);
  validate(doc);
  return doc;
}

inline DesignDocument read_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_document(ss.str());
}

inline void write_document(const std::filesystem::path& path, const DesignDocument& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << save_document(doc);
}

}  // namespace dscore
