#pragma once

// Frozen subset of PEP 8 layout rules (rule set version 1). Counts are not
// comparable with an external formatter's output.

#include <string>
#include <string_view>
#include <vector>

#include "promptcause/io.hpp"
#include "promptcause/pysyntax.hpp"

namespace promptcause {

inline constexpr int kStyleRulesVersion = 1;

struct StyleViolation {
  std::string rule;  // line-length, tab-indent, trailing-whitespace, blank-lines-before-def,
                     // blank-lines-after-def, assign-spacing, comma-spacing
  int line = 0;

  bool operator==(const StyleViolation&) const = default;
};

namespace detail {

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

inline bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\f\r") == std::string_view::npos; }

inline bool is_comment_line(std::string_view s) {
  const auto p = s.find_first_not_of(" \t\f");
  return p != std::string_view::npos && s[p] == '#';
}

// Blank lines directly above `line` (1-based), looking through comment lines.
// Returns -1 when no code precedes it.
inline int blank_lines_above(const std::vector<std::string>& lines, int line) {
  int blanks = 0;
  for (int i = line - 2; i >= 0; --i) {
    const auto& l = lines[static_cast<std::size_t>(i)];
    if (is_blank(l)) {
      ++blanks;
    } else if (!is_comment_line(l)) {
      return blanks;
    }
  }
  return -1;
}

}  // namespace detail

inline std::vector<StyleViolation> style_violations_detail(std::string_view src) {
  std::vector<StyleViolation> out;
  const auto lines = io::split_lines(src);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const int ln = static_cast<int>(i + 1);
    if (detail::utf8_length(l) > 79) out.push_back({"line-length", ln});
    const auto indent_end = l.find_first_not_of(" \t");
    if (l.substr(0, indent_end == std::string::npos ? l.size() : indent_end).find('\t') != std::string::npos)
      out.push_back({"tab-indent", ln});
    if (!l.empty() && (l.back() == ' ' || l.back() == '\t')) out.push_back({"trailing-whitespace", ln});
  }

  const auto toks = py::tokenize(src);
  int depth = 0;         // bracket depth
  int block_level = 0;   // INDENT nesting
  bool line_start = true;
  bool prev_was_decorator = false;
  bool after_top_level_def = false;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.kind == py::TokKind::indent) {
      ++block_level;
      continue;
    }
    if (t.kind == py::TokKind::dedent) {
      --block_level;
      continue;
    }
    if (t.kind == py::TokKind::newline) {
      line_start = true;
      continue;
    }
    if (t.kind == py::TokKind::end) break;

    if (line_start && block_level == 0) {
      const bool is_def = t.kind == py::TokKind::name &&
                          (t.text == "def" || t.text == "class" ||
                           (t.text == "async" && i + 1 < toks.size() && toks[i + 1].text == "def"));
      const bool is_decorator = t.kind == py::TokKind::op && t.text == "@";
      if ((is_def || is_decorator) && !prev_was_decorator) {
        const int blanks = detail::blank_lines_above(lines, t.line);
        if (blanks >= 0 && blanks < 2) out.push_back({"blank-lines-before-def", t.line});
      } else if (!is_def && !is_decorator && after_top_level_def) {
        const int blanks = detail::blank_lines_above(lines, t.line);
        if (blanks >= 0 && blanks < 2) out.push_back({"blank-lines-after-def", t.line});
      }
      after_top_level_def = is_def || is_decorator;
      prev_was_decorator = is_decorator;
    }
    line_start = false;

    if (t.kind != py::TokKind::op) continue;
    if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
    if ((t.text == ")" || t.text == "]" || t.text == "}") && depth > 0) --depth;

    const py::PyToken* prev = i > 0 ? &toks[i - 1] : nullptr;
    const py::PyToken* next = i + 1 < toks.size() ? &toks[i + 1] : nullptr;
    const bool prev_tight = prev && prev->line == t.line && prev->kind != py::TokKind::indent &&
                            prev->kind != py::TokKind::dedent && prev->kind != py::TokKind::newline && prev->end_col == t.col;
    const bool next_tight = next && next->line == t.line && next->kind != py::TokKind::newline &&
                            next->kind != py::TokKind::end && next->col == t.end_col;

    static const std::vector<std::string_view> assign_ops{"=",   "+=", "-=", "*=", "/=",  "//=", "%=",
                                                          "**=", ">>=", "<<=", "&=", "|=", "^=", "@="};
    if (depth == 0 && std::find(assign_ops.begin(), assign_ops.end(), t.text) != assign_ops.end()) {
      if (prev_tight || next_tight) out.push_back({"assign-spacing", t.line});
    } else if (t.text == ",") {
      const bool space_before = prev && prev->line == t.line && prev->kind != py::TokKind::newline && prev->end_col < t.col &&
                                prev->kind != py::TokKind::indent;
      const bool closes = next && next->kind == py::TokKind::op && (next->text == ")" || next->text == "]" || next->text == "}");
      if (space_before || (next_tight && !closes)) out.push_back({"comma-spacing", t.line});
    }
  }
  return out;
}

inline std::size_t style_violations(std::string_view src) { return style_violations_detail(src).size(); }

}  // namespace promptcause
