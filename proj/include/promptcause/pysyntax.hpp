#pragma once

// Python 3 tokenizer and error-recovering recursive-descent parser.
//
// The parser builds a light AST of node-type labels (identifier text and
// literal values are not kept, so renaming does not change a tree). Parse
// errors are recovered at statement granularity: the offending logical line
// is skipped, an `ERROR` node is emitted and any indented block that
// followed it is absorbed into the same error region.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace promptcause::py {

enum class TokKind { name, number, string, op, newline, indent, dedent, end, error };

struct PyToken {
  TokKind kind = TokKind::end;
  std::string text;
  int line = 0;  // 1-based
  int col = 0;   // 0-based byte column
  int end_col = 0;
};

inline const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> k{
      "False", "None",   "True",    "and",      "as",       "assert", "async", "await", "break",
      "class", "continue", "def",   "del",      "elif",     "else",   "except", "finally", "for",
      "from",  "global", "if",      "import",   "in",       "is",     "lambda", "nonlocal", "not",
      "or",    "pass",   "raise",   "return",   "try",      "while",  "with",  "yield"};
  return k;
}

namespace detail {

inline bool name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
inline bool name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

inline bool is_string_prefix(std::string_view s) {
  if (s.size() > 2) return false;
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return l == "r" || l == "u" || l == "b" || l == "f" || l == "br" || l == "rb" || l == "fr" || l == "rf";
}

}  // namespace detail

// Never throws; malformed input yields `error` tokens.
inline std::vector<PyToken> tokenize(std::string_view src) {
  static constexpr std::string_view ops3[] = {"**=", "//=", ">>=", "<<=", "..."};
  static constexpr std::string_view ops2[] = {"->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=",
                                              "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@="};
  static constexpr std::string_view ops1 = "+-*/%@&|^~<>()[]{},:.;=";

  std::vector<PyToken> out;
  std::vector<int> indents{0};
  int depth = 0;
  int line = 1;
  std::size_t line_start = 0;
  std::size_t i = 0;
  bool at_line_start = true;
  bool line_has_tokens = false;

  auto push = [&](TokKind k, std::size_t begin, std::size_t end) {
    out.push_back({k, std::string(src.substr(begin, end - begin)), line, static_cast<int>(begin - line_start),
                   static_cast<int>(end - line_start)});
    line_has_tokens = true;
  };
  auto newline_at = [&](std::size_t pos) {
    ++line;
    line_start = pos + 1;
  };

  while (i <= src.size()) {
    if (at_line_start && depth == 0) {
      // Measure indentation; blank and comment-only lines produce nothing.
      int width = 0;
      std::size_t j = i;
      while (j < src.size() && (src[j] == ' ' || src[j] == '\t' || src[j] == '\f')) {
        width = src[j] == '\t' ? (width / 8 + 1) * 8 : src[j] == ' ' ? width + 1 : 0;
        ++j;
      }
      if (j >= src.size()) {
        i = j;
        break;
      }
      if (src[j] == '#' || src[j] == '\n' || src[j] == '\r') {
        while (j < src.size() && src[j] != '\n') ++j;
        if (j < src.size()) newline_at(j);
        i = j + 1;
        continue;
      }
      if (src[j] == '\\' && j + 1 < src.size() && src[j + 1] == '\n') {
        newline_at(j + 1);
        i = j + 2;
        continue;
      }
      at_line_start = false;
      line_has_tokens = false;
      if (width > indents.back()) {
        indents.push_back(width);
        out.push_back({TokKind::indent, "", line, 0, static_cast<int>(j - line_start)});
      } else {
        while (width < indents.back()) {
          indents.pop_back();
          out.push_back({TokKind::dedent, "", line, 0, 0});
        }
        if (width != indents.back()) out.push_back({TokKind::error, "<inconsistent dedent>", line, 0, 0});
      }
      i = j;
      continue;
    }
    if (i >= src.size()) break;
    const unsigned char c = static_cast<unsigned char>(src[i]);
    if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\\') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] == '\r') ++j;
      if (j < src.size() && src[j] == '\n') {
        newline_at(j);
        i = j + 1;
        continue;
      }
      push(TokKind::error, i, i + 1);
      ++i;
      continue;
    }
    if (c == '\n') {
      if (depth == 0 && line_has_tokens) {
        out.push_back({TokKind::newline, "", line, static_cast<int>(i - line_start), static_cast<int>(i - line_start)});
        line_has_tokens = false;
      }
      newline_at(i);
      ++i;
      if (depth == 0) at_line_start = true;
      continue;
    }

    const std::size_t start = i;
    // String, possibly prefixed.
    std::size_t quote_pos = std::string_view::npos;
    if (c == '"' || c == '\'') {
      quote_pos = i;
    } else if (detail::name_start(c)) {
      std::size_t j = i;
      while (j < src.size() && detail::name_char(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && (src[j] == '"' || src[j] == '\'') && detail::is_string_prefix(src.substr(i, j - i))) {
        quote_pos = j;
      } else {
        push(TokKind::name, i, j);
        i = j;
        continue;
      }
    }
    if (quote_pos != std::string_view::npos) {
      const char q = src[quote_pos];
      const bool triple = quote_pos + 2 < src.size() && src[quote_pos + 1] == q && src[quote_pos + 2] == q;
      std::size_t j = quote_pos + (triple ? 3 : 1);
      bool closed = false;
      const int start_line = line;
      const std::size_t start_line_start = line_start;
      while (j < src.size()) {
        const char d = src[j];
        if (d == '\\') {
          if (j + 1 < src.size() && src[j + 1] == '\n') newline_at(j + 1);
          j += 2;
          continue;
        }
        if (d == '\n') {
          if (!triple) break;
          newline_at(j);
          ++j;
          continue;
        }
        if (d == q) {
          if (!triple) {
            ++j;
            closed = true;
            break;
          }
          if (j + 2 < src.size() && src[j + 1] == q && src[j + 2] == q) {
            j += 3;
            closed = true;
            break;
          }
        }
        ++j;
      }
      j = std::min(j, src.size());
      out.push_back({closed ? TokKind::string : TokKind::error, std::string(src.substr(start, j - start)), start_line,
                     static_cast<int>(start - start_line_start), static_cast<int>(j - line_start)});
      line_has_tokens = true;
      i = j;
      continue;
    }
    // Number.
    if (std::isdigit(c) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      if (c == '0' && j + 1 < src.size() && std::string_view("xXoObB").find(src[j + 1]) != std::string_view::npos) {
        j += 2;
        while (j < src.size() && (std::isxdigit(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      } else {
        while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
        if (j < src.size() && src[j] == '.') {
          ++j;
          while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
        }
        if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
          if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
            j = k;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
          }
        }
        if (j < src.size() && (src[j] == 'j' || src[j] == 'J')) ++j;
      }
      // A name glued to a number ("1abc") is malformed.
      if (j < src.size() && detail::name_start(static_cast<unsigned char>(src[j]))) {
        while (j < src.size() && detail::name_char(static_cast<unsigned char>(src[j]))) ++j;
        push(TokKind::error, i, j);
      } else {
        push(TokKind::number, i, j);
      }
      i = j;
      continue;
    }
    // Operators.
    std::size_t len = 0;
    for (auto op : ops3)
      if (src.substr(i, 3) == op) len = 3;
    if (!len)
      for (auto op : ops2)
        if (src.substr(i, 2) == op) len = 2;
    if (!len && ops1.find(static_cast<char>(c)) != std::string_view::npos) len = 1;
    if (!len) {
      std::size_t j = i + 1;
      push(TokKind::error, i, j);
      i = j;
      continue;
    }
    if (len == 1) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    }
    push(TokKind::op, i, i + len);
    i += len;
  }
  if (depth > 0) out.push_back({TokKind::error, "<unclosed bracket>", line, 0, 0});
  if (line_has_tokens) out.push_back({TokKind::newline, "", line, 0, 0});
  while (indents.size() > 1) {
    indents.pop_back();
    out.push_back({TokKind::dedent, "", line, 0, 0});
  }
  out.push_back({TokKind::end, "", line, 0, 0});
  return out;
}

// Surface tokens for n-gram metrics: everything except layout tokens.
inline std::vector<std::string> code_tokens(std::string_view src) {
  std::vector<std::string> out;
  for (auto& t : tokenize(src))
    if (t.kind != TokKind::newline && t.kind != TokKind::indent && t.kind != TokKind::dedent && t.kind != TokKind::end &&
        !t.text.empty())
      out.push_back(std::move(t.text));
  return out;
}

// ---------------------------------------------------------------------------
// AST

struct AstNode {
  std::string type;
  std::vector<AstNode> children;

  bool leaf() const { return children.empty(); }
};

struct ParseResult {
  AstNode root;
  std::size_t error_count = 0;
  std::vector<int> error_lines;

  bool ok() const { return error_count == 0; }
};

namespace detail {

struct ParseError {
  int line;
};

class Parser {
 public:
  explicit Parser(std::vector<PyToken> toks) : t_(std::move(toks)) {}

  ParseResult parse_module() {
    ParseResult res;
    res.root.type = "module";
    while (!at(TokKind::end)) statement_or_recover(res.root.children, false);
    res.error_count = errors_;
    res.error_lines = std::move(error_lines_);
    return res;
  }

 private:
  static constexpr int kMaxDepth = 400;

  // ---- token helpers ----
  const PyToken& cur() const { return t_[pos_]; }
  const PyToken& peek(std::size_t k = 1) const { return t_[std::min(pos_ + k, t_.size() - 1)]; }
  bool at(TokKind k) const { return cur().kind == k; }
  bool at_op(std::string_view s) const { return cur().kind == TokKind::op && cur().text == s; }
  bool at_kw(std::string_view s) const { return cur().kind == TokKind::name && cur().text == s; }
  bool at_name() const { return cur().kind == TokKind::name && !keywords().count(cur().text); }
  void advance() {
    if (pos_ + 1 < t_.size()) ++pos_;
  }
  [[noreturn]] void fail() const { throw ParseError{cur().line}; }
  void expect_op(std::string_view s) {
    if (!at_op(s)) fail();
    advance();
  }
  void expect_kw(std::string_view s) {
    if (!at_kw(s)) fail();
    advance();
  }
  void expect(TokKind k) {
    if (!at(k)) fail();
    advance();
  }
  bool accept_op(std::string_view s) {
    if (!at_op(s)) return false;
    advance();
    return true;
  }
  bool accept_kw(std::string_view s) {
    if (!at_kw(s)) return false;
    advance();
    return true;
  }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p_(p) {
      if (++p_.depth_ > kMaxDepth) p_.fail();
    }
    ~DepthGuard() { --p_.depth_; }
    Parser& p_;
  };

  static AstNode node(std::string type, std::vector<AstNode> kids = {}) { return {std::move(type), std::move(kids)}; }

  AstNode name_leaf() {
    if (!at_name()) fail();
    advance();
    return node("identifier");
  }

  // ---- statements ----
  void statement_or_recover(std::vector<AstNode>& into, bool in_block) {
    if (at(TokKind::newline)) {
      advance();
      return;
    }
    if (at(TokKind::indent)) {
      record_error(cur().line);
      into.push_back(absorb_block(node("ERROR")));
      return;
    }
    const std::size_t start = pos_;
    try {
      statement(into);
    } catch (const ParseError& e) {
      record_error(e.line);
      AstNode err = node("ERROR");
      while (!at(TokKind::newline) && !at(TokKind::end) && !at(TokKind::dedent)) advance();
      if (at(TokKind::newline)) advance();
      if (pos_ == start && !at(TokKind::end) && !(in_block && at(TokKind::dedent))) advance();
      if (at(TokKind::indent)) err = absorb_block(std::move(err));
      into.push_back(std::move(err));
    }
  }

  void record_error(int line) {
    ++errors_;
    error_lines_.push_back(line);
  }

  // Consumes INDENT ... DEDENT, parsing (and recovering) the nested statements.
  AstNode absorb_block(AstNode err) {
    expect(TokKind::indent);
    while (!at(TokKind::dedent) && !at(TokKind::end)) statement_or_recover(err.children, true);
    if (at(TokKind::dedent)) advance();
    return err;
  }

  void statement(std::vector<AstNode>& into) {
    if (at_kw("if")) return into.push_back(if_stmt());
    if (at_kw("while")) return into.push_back(while_stmt());
    if (at_kw("for")) return into.push_back(for_stmt());
    if (at_kw("try")) return into.push_back(try_stmt());
    if (at_kw("with")) return into.push_back(with_stmt());
    if (at_kw("def")) return into.push_back(funcdef());
    if (at_kw("class")) return into.push_back(classdef());
    if (at_op("@")) return into.push_back(decorated());
    if (at_kw("async")) {
      advance();
      if (at_kw("def")) return into.push_back(node("async_function", {funcdef()}));
      if (at_kw("with")) return into.push_back(node("async_with", {with_stmt()}));
      if (at_kw("for")) return into.push_back(node("async_for", {for_stmt()}));
      fail();
    }
    if (at_kw("match") && peek().kind != TokKind::newline) {
      const std::size_t save = pos_;
      try {
        return into.push_back(match_stmt());
      } catch (const ParseError&) {
        if (committed_match_ == save) throw;
        pos_ = save;
      }
    }
    simple_stmts(into);
  }

  void simple_stmts(std::vector<AstNode>& into) {
    into.push_back(small_stmt());
    while (accept_op(";")) {
      if (at(TokKind::newline)) break;
      into.push_back(small_stmt());
    }
    expect(TokKind::newline);
  }

  AstNode small_stmt() {
    if (accept_kw("pass")) return node("pass_statement");
    if (accept_kw("break")) return node("break_statement");
    if (accept_kw("continue")) return node("continue_statement");
    if (accept_kw("return")) {
      AstNode n = node("return_statement");
      if (!stmt_end()) n.children.push_back(testlist_star());
      return n;
    }
    if (accept_kw("raise")) {
      AstNode n = node("raise_statement");
      if (!stmt_end()) {
        n.children.push_back(test());
        if (accept_kw("from")) n.children.push_back(test());
      }
      return n;
    }
    if (at_kw("global") || at_kw("nonlocal")) {
      AstNode n = node(cur().text + "_statement");
      advance();
      n.children.push_back(name_leaf());
      while (accept_op(",")) n.children.push_back(name_leaf());
      return n;
    }
    if (accept_kw("del")) return node("delete_statement", {exprlist()});
    if (accept_kw("assert")) {
      AstNode n = node("assert_statement", {test()});
      if (accept_op(",")) n.children.push_back(test());
      return n;
    }
    if (accept_kw("import")) {
      AstNode n = node("import_statement");
      do n.children.push_back(dotted_as_name());
      while (accept_op(","));
      return n;
    }
    if (accept_kw("from")) return import_from();
    return expr_stmt();
  }

  bool stmt_end() const { return at(TokKind::newline) || at_op(";") || at(TokKind::end); }

  AstNode dotted_name() {
    AstNode n = node("dotted_name", {name_leaf()});
    while (accept_op(".")) n.children.push_back(name_leaf());
    return n;
  }

  AstNode dotted_as_name() {
    AstNode d = dotted_name();
    if (accept_kw("as")) return node("aliased_import", {std::move(d), name_leaf()});
    return d;
  }

  AstNode import_from() {
    AstNode n = node("import_from_statement");
    bool dots = false;
    while (at_op(".") || at_op("...")) {
      advance();
      dots = true;
    }
    if (at_name()) {
      n.children.push_back(dotted_name());
    } else if (!dots) {
      fail();
    }
    expect_kw("import");
    if (accept_op("*")) {
      n.children.push_back(node("wildcard_import"));
      return n;
    }
    const bool paren = accept_op("(");
    auto item = [&] {
      AstNode name = name_leaf();
      if (accept_kw("as")) return node("aliased_import", {std::move(name), name_leaf()});
      return node("dotted_name", {std::move(name)});
    };
    n.children.push_back(item());
    while (accept_op(",")) {
      if (paren && at_op(")")) break;
      n.children.push_back(item());
    }
    if (paren) expect_op(")");
    return n;
  }

  AstNode expr_stmt() {
    AstNode lhs = at_kw("yield") ? yield_expr() : testlist_star();
    if (at_op(":")) {
      advance();
      AstNode n = node("assignment", {std::move(lhs), node("type", {test()})});
      if (accept_op("=")) n.children.push_back(at_kw("yield") ? yield_expr() : testlist_star());
      return n;
    }
    static const std::unordered_set<std::string_view> aug{"+=", "-=", "*=", "/=", "//=", "%=", "**=",
                                                          ">>=", "<<=", "&=", "|=", "^=", "@="};
    if (cur().kind == TokKind::op && aug.count(cur().text)) {
      advance();
      return node("augmented_assignment", {std::move(lhs), at_kw("yield") ? yield_expr() : testlist()});
    }
    if (at_op("=")) {
      AstNode n = node("assignment", {std::move(lhs)});
      while (accept_op("=")) n.children.push_back(at_kw("yield") ? yield_expr() : testlist_star());
      return n;
    }
    return node("expression_statement", {std::move(lhs)});
  }

  // Suite after ':': an indented block, or simple statements on the same line.
  AstNode suite() {
    AstNode block = node("block");
    if (at(TokKind::newline)) {
      advance();
      expect(TokKind::indent);
      while (!at(TokKind::dedent) && !at(TokKind::end)) statement_or_recover(block.children, true);
      if (at(TokKind::dedent)) advance();
    } else {
      simple_stmts(block.children);
    }
    return block;
  }

  AstNode if_stmt() {
    expect_kw("if");
    AstNode n = node("if_statement", {namedexpr_test()});
    expect_op(":");
    n.children.push_back(suite());
    while (at_kw("elif")) {
      advance();
      AstNode e = node("elif_clause", {namedexpr_test()});
      expect_op(":");
      e.children.push_back(suite());
      n.children.push_back(std::move(e));
    }
    if (at_kw("else")) n.children.push_back(else_clause());
    return n;
  }

  AstNode else_clause() {
    expect_kw("else");
    expect_op(":");
    return node("else_clause", {suite()});
  }

  AstNode while_stmt() {
    expect_kw("while");
    AstNode n = node("while_statement", {namedexpr_test()});
    expect_op(":");
    n.children.push_back(suite());
    if (at_kw("else")) n.children.push_back(else_clause());
    return n;
  }

  AstNode for_stmt() {
    expect_kw("for");
    AstNode n = node("for_statement", {exprlist()});
    expect_kw("in");
    n.children.push_back(testlist());
    expect_op(":");
    n.children.push_back(suite());
    if (at_kw("else")) n.children.push_back(else_clause());
    return n;
  }

  AstNode try_stmt() {
    expect_kw("try");
    expect_op(":");
    AstNode n = node("try_statement", {suite()});
    bool handlers = false;
    while (at_kw("except")) {
      advance();
      handlers = true;
      AstNode e = node("except_clause");
      accept_op("*");
      if (!at_op(":")) {
        e.children.push_back(test());
        if (accept_kw("as")) e.children.push_back(name_leaf());
      }
      expect_op(":");
      e.children.push_back(suite());
      n.children.push_back(std::move(e));
    }
    if (handlers && at_kw("else")) n.children.push_back(else_clause());
    if (at_kw("finally")) {
      advance();
      expect_op(":");
      n.children.push_back(node("finally_clause", {suite()}));
    } else if (!handlers) {
      fail();
    }
    return n;
  }

  AstNode with_item() {
    AstNode n = node("with_item", {test()});
    if (accept_kw("as")) n.children.push_back(star_or_expr_target());
    return n;
  }

  AstNode star_or_expr_target() { return at_op("*") ? star_expr() : expr(); }

  AstNode with_stmt() {
    expect_kw("with");
    AstNode n = node("with_statement");
    if (at_op("(")) {
      const std::size_t save = pos_;
      try {
        advance();
        AstNode clause = node("with_clause", {with_item()});
        while (accept_op(",")) {
          if (at_op(")")) break;
          clause.children.push_back(with_item());
        }
        expect_op(")");
        expect_op(":");
        n.children.push_back(std::move(clause));
        n.children.push_back(suite());
        return n;
      } catch (const ParseError&) {
        pos_ = save;
      }
    }
    AstNode clause = node("with_clause", {with_item()});
    while (accept_op(",")) clause.children.push_back(with_item());
    expect_op(":");
    n.children.push_back(std::move(clause));
    n.children.push_back(suite());
    return n;
  }

  AstNode funcdef() {
    expect_kw("def");
    AstNode n = node("function_definition", {name_leaf()});
    expect_op("(");
    n.children.push_back(parameters(")", true));
    expect_op(")");
    if (accept_op("->")) n.children.push_back(node("type", {test()}));
    expect_op(":");
    n.children.push_back(suite());
    return n;
  }

  // Parameter list up to (not including) `close`.
  AstNode parameters(std::string_view close, bool annotations) {
    AstNode n = node(annotations ? "parameters" : "lambda_parameters");
    while (!at_op(close)) {
      if (accept_op("/")) {
        n.children.push_back(node("positional_separator"));
      } else if (accept_op("**")) {
        n.children.push_back(node("dictionary_splat_pattern", {param(annotations)}));
      } else if (accept_op("*")) {
        if (at_op(",") || at_op(close)) {
          n.children.push_back(node("keyword_separator"));
        } else {
          n.children.push_back(node("list_splat_pattern", {param(annotations)}));
        }
      } else {
        AstNode p = param(annotations);
        if (accept_op("=")) p = node("default_parameter", {std::move(p), test()});
        n.children.push_back(std::move(p));
      }
      if (!accept_op(",")) break;
    }
    return n;
  }

  AstNode param(bool annotations) {
    AstNode name = name_leaf();
    if (annotations && accept_op(":")) return node("typed_parameter", {std::move(name), node("type", {test()})});
    return name;
  }

  AstNode classdef() {
    expect_kw("class");
    AstNode n = node("class_definition", {name_leaf()});
    if (accept_op("(")) {
      n.children.push_back(arglist(")"));
      expect_op(")");
    }
    expect_op(":");
    n.children.push_back(suite());
    return n;
  }

  AstNode decorated() {
    AstNode n = node("decorated_definition");
    while (accept_op("@")) {
      n.children.push_back(node("decorator", {namedexpr_test()}));
      expect(TokKind::newline);
    }
    if (at_kw("def")) {
      n.children.push_back(funcdef());
    } else if (at_kw("class")) {
      n.children.push_back(classdef());
    } else if (accept_kw("async")) {
      n.children.push_back(node("async_function", {funcdef()}));
    } else {
      fail();
    }
    return n;
  }

  AstNode match_stmt() {
    const std::size_t start = pos_;
    expect_kw("match");
    AstNode n = node("match_statement", {testlist_star()});
    expect_op(":");
    expect(TokKind::newline);
    expect(TokKind::indent);
    if (!at_kw("case")) fail();
    committed_match_ = start;
    AstNode body = node("block");
    while (at_kw("case")) {
      advance();
      AstNode c = node("case_clause", {pattern()});
      if (accept_kw("if")) c.children.push_back(node("if_clause", {namedexpr_test()}));
      expect_op(":");
      c.children.push_back(suite());
      body.children.push_back(std::move(c));
      while (at(TokKind::newline)) advance();
    }
    expect(TokKind::dedent);
    n.children.push_back(std::move(body));
    return n;
  }

  AstNode pattern() {
    auto item = [&] {
      AstNode p = at_op("*") ? star_expr() : test();
      if (accept_kw("as")) p = node("as_pattern", {std::move(p), name_leaf()});
      return p;
    };
    AstNode first = item();
    if (!at_op(",")) return node("case_pattern", {std::move(first)});
    AstNode n = node("case_pattern", {std::move(first)});
    while (accept_op(",")) {
      if (at_op(":") || at_kw("if")) break;
      n.children.push_back(item());
    }
    return n;
  }

  // ---- expressions ----
  AstNode testlist_star() {
    AstNode first = at_op("*") ? star_expr() : namedexpr_test();
    if (!at_op(",")) return first;
    AstNode n = node("expression_list", {std::move(first)});
    while (accept_op(",")) {
      if (!starts_expression()) break;
      n.children.push_back(at_op("*") ? star_expr() : namedexpr_test());
    }
    return n;
  }

  AstNode testlist() {
    AstNode first = test();
    if (!at_op(",")) return first;
    AstNode n = node("expression_list", {std::move(first)});
    while (accept_op(",")) {
      if (!starts_expression()) break;
      n.children.push_back(test());
    }
    return n;
  }

  AstNode exprlist() {
    AstNode first = star_or_expr_target();
    if (!at_op(",")) return first;
    AstNode n = node("pattern_list", {std::move(first)});
    while (accept_op(",")) {
      if (!starts_expression()) break;
      n.children.push_back(star_or_expr_target());
    }
    return n;
  }

  bool starts_expression() const {
    const auto& tk = cur();
    switch (tk.kind) {
      case TokKind::name:
        return !keywords().count(tk.text) || tk.text == "None" || tk.text == "True" || tk.text == "False" ||
               tk.text == "not" || tk.text == "lambda" || tk.text == "await" || tk.text == "yield";
      case TokKind::number:
      case TokKind::string: return true;
      case TokKind::op:
        return tk.text == "(" || tk.text == "[" || tk.text == "{" || tk.text == "-" || tk.text == "+" || tk.text == "~" ||
               tk.text == "*" || tk.text == "..." || tk.text == "**";
      default: return false;
    }
  }

  AstNode yield_expr() {
    expect_kw("yield");
    AstNode n = node("yield");
    if (accept_kw("from")) {
      n.children.push_back(test());
    } else if (starts_expression()) {
      n.children.push_back(testlist_star());
    }
    return n;
  }

  AstNode star_expr() {
    expect_op("*");
    return node("list_splat", {expr()});
  }

  AstNode namedexpr_test() {
    AstNode t = test();
    if (at_op(":=")) {
      if (t.type != "identifier") fail();
      advance();
      return node("named_expression", {std::move(t), test()});
    }
    return t;
  }

  AstNode test() {
    DepthGuard g(*this);
    if (at_kw("lambda")) return lambdef(true);
    AstNode body = or_test();
    if (accept_kw("if")) {
      AstNode cond = or_test();
      expect_kw("else");
      return node("conditional_expression", {std::move(body), std::move(cond), test()});
    }
    return body;
  }

  AstNode test_nocond() {
    if (at_kw("lambda")) return lambdef(false);
    return or_test();
  }

  AstNode lambdef(bool allow_cond) {
    expect_kw("lambda");
    AstNode n = node("lambda", {parameters(":", false)});
    expect_op(":");
    n.children.push_back(allow_cond ? test() : test_nocond());
    return n;
  }

  AstNode or_test() {
    AstNode left = and_test();
    while (accept_kw("or")) left = node("boolean_operator", {std::move(left), and_test()});
    return left;
  }

  AstNode and_test() {
    AstNode left = not_test();
    while (accept_kw("and")) left = node("boolean_operator", {std::move(left), not_test()});
    return left;
  }

  AstNode not_test() {
    DepthGuard g(*this);
    if (accept_kw("not")) return node("not_operator", {not_test()});
    return comparison();
  }

  bool at_comp_op() const {
    if (cur().kind == TokKind::op) {
      const auto& s = cur().text;
      return s == "<" || s == ">" || s == "==" || s == ">=" || s == "<=" || s == "!=";
    }
    if (at_kw("in") || at_kw("is")) return true;
    return at_kw("not") && peek().kind == TokKind::name && peek().text == "in";
  }

  AstNode comparison() {
    AstNode left = expr();
    if (!at_comp_op()) return left;
    AstNode n = node("comparison_operator", {std::move(left)});
    while (at_comp_op()) {
      if (accept_kw("not")) {
        expect_kw("in");
      } else if (accept_kw("is")) {
        accept_kw("not");
      } else {
        advance();
      }
      n.children.push_back(expr());
    }
    return n;
  }

  template <typename Next>
  AstNode binary_level(std::initializer_list<std::string_view> ops, Next next) {
    AstNode left = (this->*next)();
    for (;;) {
      bool matched = false;
      for (auto op : ops)
        if (at_op(op)) matched = true;
      if (!matched) return left;
      advance();
      left = node("binary_operator", {std::move(left), (this->*next)()});
    }
  }

  AstNode expr() { return binary_level({"|"}, &Parser::xor_expr); }
  AstNode xor_expr() { return binary_level({"^"}, &Parser::and_expr); }
  AstNode and_expr() { return binary_level({"&"}, &Parser::shift_expr); }
  AstNode shift_expr() { return binary_level({"<<", ">>"}, &Parser::arith_expr); }
  AstNode arith_expr() { return binary_level({"+", "-"}, &Parser::term); }
  AstNode term() { return binary_level({"*", "/", "%", "//", "@"}, &Parser::factor); }

  AstNode factor() {
    DepthGuard g(*this);
    if (at_op("+") || at_op("-") || at_op("~")) {
      advance();
      return node("unary_operator", {factor()});
    }
    return power();
  }

  AstNode power() {
    AstNode base = await_primary();
    if (accept_op("**")) return node("binary_operator", {std::move(base), factor()});
    return base;
  }

  AstNode await_primary() {
    if (accept_kw("await")) return node("await", {primary()});
    return primary();
  }

  AstNode primary() {
    AstNode n = atom();
    for (;;) {
      if (accept_op("(")) {
        n = node("call", {std::move(n), arglist(")")});
        expect_op(")");
      } else if (accept_op("[")) {
        n = node("subscript", {std::move(n), subscripts()});
        expect_op("]");
      } else if (at_op(".")) {
        advance();
        n = node("attribute", {std::move(n), name_leaf()});
      } else {
        return n;
      }
    }
  }

  AstNode subscripts() {
    AstNode first = subscript_item();
    if (!at_op(",")) return first;
    AstNode n = node("expression_list", {std::move(first)});
    while (accept_op(",")) {
      if (at_op("]")) break;
      n.children.push_back(subscript_item());
    }
    return n;
  }

  AstNode subscript_item() {
    if (at_op("*")) return star_expr();
    AstNode n = node("slice");
    bool is_slice = false;
    if (!at_op(":")) {
      AstNode lo = namedexpr_test();
      if (!at_op(":")) return lo;
      n.children.push_back(std::move(lo));
    }
    while (at_op(":")) {
      advance();
      is_slice = true;
      if (!at_op(":") && !at_op("]") && !at_op(",")) n.children.push_back(test());
    }
    (void)is_slice;
    return n;
  }

  AstNode arglist(std::string_view close) {
    AstNode n = node("argument_list");
    while (!at_op(close)) {
      if (accept_op("**")) {
        n.children.push_back(node("dictionary_splat", {test()}));
      } else if (accept_op("*")) {
        n.children.push_back(node("list_splat", {test()}));
      } else {
        AstNode a = test();
        if (at_op("=")) {
          if (a.type != "identifier") fail();
          advance();
          a = node("keyword_argument", {std::move(a), test()});
        } else if (at_op(":=")) {
          if (a.type != "identifier") fail();
          advance();
          a = node("named_expression", {std::move(a), test()});
        } else if (at_kw("for") || at_kw("async")) {
          a = node("generator_expression", {std::move(a), comp_for()});
        }
        n.children.push_back(std::move(a));
      }
      if (!accept_op(",")) break;
    }
    return n;
  }

  AstNode comp_for() {
    AstNode clauses = node("comprehension_clauses");
    while (at_kw("for") || at_kw("async") || at_kw("if")) {
      if (accept_kw("if")) {
        clauses.children.push_back(node("if_clause", {test_nocond()}));
        continue;
      }
      accept_kw("async");
      expect_kw("for");
      AstNode f = node("for_in_clause", {exprlist()});
      expect_kw("in");
      f.children.push_back(or_test());
      clauses.children.push_back(std::move(f));
    }
    return clauses;
  }

  AstNode atom() {
    DepthGuard g(*this);
    const auto& tk = cur();
    switch (tk.kind) {
      case TokKind::number:
        advance();
        return node(tk.text.find_first_of(".eEjJ") != std::string::npos && tk.text.find_first_of("xX") == std::string::npos
                        ? "float"
                        : "integer");
      case TokKind::string: {
        advance();
        if (!at(TokKind::string)) return node("string");
        AstNode n = node("concatenated_string", {node("string")});
        while (at(TokKind::string)) {
          advance();
          n.children.push_back(node("string"));
        }
        return n;
      }
      case TokKind::name:
        if (tk.text == "None") return advance(), node("none");
        if (tk.text == "True") return advance(), node("true");
        if (tk.text == "False") return advance(), node("false");
        return name_leaf();
      case TokKind::op:
        if (tk.text == "...") return advance(), node("ellipsis");
        if (tk.text == "(") return paren_atom();
        if (tk.text == "[") return list_atom();
        if (tk.text == "{") return brace_atom();
        fail();
      default: break;
    }
    fail();
  }

  AstNode paren_atom() {
    expect_op("(");
    if (accept_op(")")) return node("tuple");
    if (at_kw("yield")) {
      AstNode y = yield_expr();
      expect_op(")");
      return node("parenthesized_expression", {std::move(y)});
    }
    AstNode first = at_op("*") ? star_expr() : namedexpr_test();
    if (at_kw("for") || at_kw("async")) {
      AstNode g = node("generator_expression", {std::move(first), comp_for()});
      expect_op(")");
      return g;
    }
    if (accept_op(")")) return node("parenthesized_expression", {std::move(first)});
    AstNode t = node("tuple", {std::move(first)});
    while (accept_op(",")) {
      if (at_op(")")) break;
      t.children.push_back(at_op("*") ? star_expr() : namedexpr_test());
    }
    expect_op(")");
    return t;
  }

  AstNode list_atom() {
    expect_op("[");
    if (accept_op("]")) return node("list");
    AstNode first = at_op("*") ? star_expr() : namedexpr_test();
    if (at_kw("for") || at_kw("async")) {
      AstNode c = node("list_comprehension", {std::move(first), comp_for()});
      expect_op("]");
      return c;
    }
    AstNode l = node("list", {std::move(first)});
    while (accept_op(",")) {
      if (at_op("]")) break;
      l.children.push_back(at_op("*") ? star_expr() : namedexpr_test());
    }
    expect_op("]");
    return l;
  }

  AstNode dict_item() {
    if (accept_op("**")) return node("dictionary_splat", {expr()});
    AstNode k = test();
    expect_op(":");
    return node("pair", {std::move(k), test()});
  }

  AstNode brace_atom() {
    expect_op("{");
    if (accept_op("}")) return node("dictionary");
    const bool is_dict_splat = at_op("**");
    AstNode first;
    bool dict = is_dict_splat;
    if (is_dict_splat) {
      first = dict_item();
    } else {
      AstNode k = at_op("*") ? star_expr() : namedexpr_test();
      if (accept_op(":")) {
        dict = true;
        first = node("pair", {std::move(k), test()});
      } else {
        first = std::move(k);
      }
    }
    if (at_kw("for") || at_kw("async")) {
      AstNode c = node(dict ? "dictionary_comprehension" : "set_comprehension", {std::move(first), comp_for()});
      expect_op("}");
      return c;
    }
    AstNode n = node(dict ? "dictionary" : "set", {std::move(first)});
    while (accept_op(",")) {
      if (at_op("}")) break;
      if (dict) {
        n.children.push_back(dict_item());
      } else {
        n.children.push_back(at_op("*") ? star_expr() : namedexpr_test());
      }
    }
    expect_op("}");
    return n;
  }

  std::vector<PyToken> t_;
  std::size_t pos_ = 0;
  int depth_ = 0;
  std::size_t errors_ = 0;
  std::vector<int> error_lines_;
  std::size_t committed_match_ = static_cast<std::size_t>(-1);
};

}  // namespace detail

inline ParseResult parse(std::string_view src) { return detail::Parser(tokenize(src)).parse_module(); }

// 0 iff the program parses cleanly; otherwise the number of recovered error regions.
inline std::size_t count_syntax_errors(std::string_view src) { return parse(src).error_count; }

// S-expression of node types, e.g. "(call (identifier) (argument_list (integer)))".
inline std::string sexp(const AstNode& n) {
  std::string s = "(" + n.type;
  for (const auto& c : n.children) {
    s += ' ';
    s += sexp(c);
  }
  s += ')';
  return s;
}

// S-expressions of every subtree rooted at an inner node.
inline std::vector<std::string> subtrees(const AstNode& root) {
  std::vector<std::string> out;
  std::vector<const AstNode*> stack{&root};
  while (!stack.empty()) {
    const AstNode* n = stack.back();
    stack.pop_back();
    if (n->leaf()) continue;
    out.push_back(sexp(*n));
    for (const auto& c : n->children) stack.push_back(&c);
  }
  return out;
}

}  // namespace promptcause::py
