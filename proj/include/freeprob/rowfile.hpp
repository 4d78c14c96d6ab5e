#pragma once

// Text format for named measures and one row:
//
//   # comment
//   measure coin: atoms=[-1, 1] weights=[0.5, 0.5]
//   row example: members=[coin x 67108864] scale=1/sqrt(k) center=false
//
// Member counts may be written `name x 16`, `name*16` or `name×16`, and as
// integers or powers `2^26`. The scale expression accepts numbers, `k` (the
// row length), `sqrt(...)`, parentheses, `+`, `-`, `*` and `/`.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "freeprob/errors.hpp"
#include "freeprob/freeconv.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/transform.hpp"

namespace freeprob {

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& msg)
      : ValidationError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }
  [[nodiscard]] std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct MeasureDecl {
  std::string name;
  std::vector<double> atoms;
  std::vector<double> weights;
  std::size_t line = 0;
  bool operator==(const MeasureDecl& o) const { return name == o.name && atoms == o.atoms && weights == o.weights; }
};

struct MemberDecl {
  std::string measure;
  std::uint64_t count = 1;
  bool operator==(const MemberDecl&) const = default;
};

struct RowDecl {
  std::string name = "row";
  std::vector<MemberDecl> members;
  std::string scale = "1";  ///< whitespace-free expression text
  bool center = false;
  std::size_t line = 0;
  bool operator==(const RowDecl& o) const {
    return name == o.name && members == o.members && scale == o.scale && center == o.center;
  }
};

struct RowFile {
  std::vector<MeasureDecl> measures;
  std::optional<RowDecl> row;
  bool operator==(const RowFile&) const = default;
};

namespace detail {

class Cursor {
 public:
  Cursor(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  [[nodiscard]] bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  [[nodiscard]] char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  /// Like accept, but the token must not run on into a longer word.
  bool keyword(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) != tok) return false;
    const std::size_t after = pos_ + tok.size();
    if (after < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[after])) || s_[after] == '_')) return false;
    pos_ = after;
    return true;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.'))
      ++pos_;
    if (pos_ == start) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }
  double number() {
    skip_ws();
    const std::string rest(s_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("expected a number");
    if (!std::isfinite(v)) fail("number is not finite");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return v;
  }
  std::uint64_t count() {
    skip_ws();
    const std::size_t start = pos_;
    auto digits = [&]() -> std::uint64_t {
      const std::size_t s = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ == s) fail("expected a member count");
      if (pos_ - s > 18) fail("member count too large");
      return std::stoull(std::string(s_.substr(s, pos_ - s)));
    };
    std::uint64_t base = digits();
    if (pos_ < s_.size() && s_[pos_] == '^') {
      ++pos_;
      const std::uint64_t e = digits();
      std::uint64_t v = 1;
      for (std::uint64_t i = 0; i < e; ++i) {
        if (v > (std::uint64_t{1} << 62) / std::max<std::uint64_t>(base, 1)) {
          pos_ = start;
          fail("member count too large");
        }
        v *= base;
      }
      base = v;
    }
    if (base == 0) {
      pos_ = start;
      fail("member count must be positive");
    }
    return base;
  }
  std::vector<double> number_list() {
    expect("[");
    std::vector<double> out;
    if (accept("]")) return out;
    do out.push_back(number());
    while (accept(","));
    expect("]");
    return out;
  }
  /// Raw text up to the next whitespace, for the scale expression.
  std::string word() {
    skip_ws();
    const std::size_t start = pos_;
    int depth = 0;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if ((c == ' ' || c == '\t') && depth <= 0) break;
      ++pos_;
    }
    std::string out;
    for (char c : s_.substr(start, pos_ - start))
      if (c != ' ' && c != '\t') out.push_back(c);
    return out;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, pos_ + 1, msg); }
  [[nodiscard]] std::size_t column() const noexcept { return pos_ + 1; }
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Recursive descent over the scale grammar; `column0` maps expression offsets
// back to the file.
class ScaleParser {
 public:
  ScaleParser(std::string_view text, double k, std::size_t line, std::size_t column0)
      : s_(text), k_(k), line_(line), col0_(column0) {}

  double parse() {
    const double v = expr();
    if (pos_ != s_.size()) fail("unexpected character in scale expression");
    return v;
  }

 private:
  double expr() {
    double v = term();
    while (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
      const char op = s_[pos_++];
      const double r = term();
      v = op == '+' ? v + r : v - r;
    }
    return v;
  }
  double term() {
    double v = factor();
    while (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
      const char op = s_[pos_++];
      const double r = factor();
      if (op == '/' && r == 0.0) fail("division by zero in scale expression");
      v = op == '*' ? v * r : v / r;
    }
    return v;
  }
  double factor() {
    if (pos_ >= s_.size()) fail("scale expression ends early");
    if (s_[pos_] == '-') {
      ++pos_;
      return -factor();
    }
    if (s_[pos_] == '(') {
      ++pos_;
      const double v = expr();
      close();
      return v;
    }
    if (s_.substr(pos_, 5) == "sqrt(") {
      pos_ += 5;
      const std::size_t at = pos_;
      const double v = expr();
      close();
      if (v < 0.0) {
        pos_ = at;
        fail("sqrt of a negative number");
      }
      return std::sqrt(v);
    }
    if (s_[pos_] == 'k') {
      ++pos_;
      return k_;
    }
    const std::string rest(s_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("expected a number, k, sqrt(...) or '('");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return v;
  }
  void close() {
    if (pos_ >= s_.size() || s_[pos_] != ')') fail("expected ')'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, col0_ + pos_, msg); }

  std::string_view s_;
  double k_;
  std::size_t line_;
  std::size_t col0_;
  std::size_t pos_ = 0;
};

inline void parse_members(Cursor& c, RowDecl& row) {
  c.expect("[");
  do {
    MemberDecl m;
    m.measure = c.identifier();
    if (!(c.accept("x") || c.accept("*") || c.accept("\xC3\x97"))) c.fail("expected 'x', '*' or '\xC3\x97' after member name");
    m.count = c.count();
    row.members.push_back(std::move(m));
  } while (c.accept(","));
  c.expect("]");
}

}  // namespace detail

/// Value of a scale expression with k bound to the row length.
inline double eval_scale(const std::string& expr, double k, std::size_t line = 0, std::size_t column = 1) {
  return detail::ScaleParser(expr, k, line, column).parse();
}

inline RowFile parse_row_file(std::string_view text) {
  RowFile file;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    detail::Cursor c(line, line_no);
    if (c.done()) {
      if (end == text.size()) break;
      continue;
    }

    if (c.keyword("measure")) {
      MeasureDecl m;
      m.line = line_no;
      m.name = c.identifier();
      c.expect(":");
      bool have_atoms = false;
      bool have_weights = false;
      while (!c.done()) {
        const std::size_t col = c.column();
        const std::string key = c.identifier();
        c.expect("=");
        if (key == "atoms") {
          m.atoms = c.number_list();
          have_atoms = true;
        } else if (key == "weights") {
          m.weights = c.number_list();
          have_weights = true;
        } else {
          throw ParseError(line_no, col, "unknown measure field '" + key + "'");
        }
      }
      if (!have_atoms || !have_weights) c.fail("measure needs both atoms=[...] and weights=[...]");
      for (const MeasureDecl& other : file.measures)
        if (other.name == m.name) throw ParseError(line_no, 9, "measure '" + m.name + "' defined twice");
      try {
        (void)AtomicMeasure(m.atoms, m.weights);
      } catch (const ValidationError& e) {
        throw ParseError(line_no, 1, std::string("invalid measure: ") + e.what());
      }
      file.measures.push_back(std::move(m));
    } else if (c.keyword("row")) {
      if (file.row) c.fail("only one row per file");
      RowDecl r;
      r.line = line_no;
      if (c.peek() != ':') r.name = c.identifier();
      c.expect(":");
      bool have_members = false;
      while (!c.done()) {
        const std::size_t col = c.column();
        const std::string key = c.identifier();
        c.expect("=");
        if (key == "members") {
          detail::parse_members(c, r);
          have_members = true;
        } else if (key == "scale") {
          const std::size_t scol = c.column();
          r.scale = c.word();
          if (r.scale.empty()) c.fail("empty scale expression");
          (void)eval_scale(r.scale, 1.0, line_no, scol);
        } else if (key == "center") {
          if (c.keyword("true")) r.center = true;
          else if (c.keyword("false")) r.center = false;
          else c.fail("center expects true or false");
        } else {
          throw ParseError(line_no, col, "unknown row field '" + key + "'");
        }
      }
      if (!have_members) c.fail("row needs members=[...]");
      file.row = std::move(r);
    } else {
      c.fail("expected 'measure' or 'row'");
    }
    if (end == text.size()) break;
  }
  if (file.row)
    for (const MemberDecl& m : file.row->members) {
      bool found = false;
      for (const MeasureDecl& d : file.measures) found = found || d.name == m.measure;
      if (!found) throw ParseError(file.row->line, 1, "row refers to undefined measure '" + m.measure + "'");
    }
  return file;
}

/// Canonical text: one declaration per line, numbers at 17 significant digits.
inline std::string print_row_file(const RowFile& f) {
  std::ostringstream os;
  auto list = [&](const std::vector<double>& v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << format_double(v[i]);
    os << ']';
  };
  for (const MeasureDecl& m : f.measures) {
    os << "measure " << m.name << ": atoms=";
    list(m.atoms);
    os << " weights=";
    list(m.weights);
    os << '\n';
  }
  if (f.row) {
    os << "row " << f.row->name << ": members=[";
    for (std::size_t i = 0; i < f.row->members.size(); ++i)
      os << (i ? ", " : "") << f.row->members[i].measure << " x " << f.row->members[i].count;
    os << "] scale=" << f.row->scale << " center=" << (f.row->center ? "true" : "false") << '\n';
  }
  return os.str();
}

inline AtomicMeasure find_measure(const RowFile& f, const std::string& name) {
  for (const MeasureDecl& m : f.measures)
    if (m.name == name) return AtomicMeasure(m.atoms, m.weights);
  throw ValidationError("undefined measure '" + name + "'");
}

/// The row as a RowSpec: each member entry becomes one group holding the
/// (optionally centered) measure dilated by the scale, so equal entries cost
/// one K evaluation regardless of their count.
inline RowSpec build_row(const RowFile& f) {
  if (!f.row) throw ValidationError("file defines no row");
  const RowDecl& r = *f.row;
  std::uint64_t k = 0;
  for (const MemberDecl& m : r.members) k += m.count;
  const double scale = eval_scale(r.scale, static_cast<double>(k), r.line);
  if (!(scale != 0.0) || !std::isfinite(scale)) throw ValidationError("row scale must be finite and nonzero");
  std::map<std::string, std::uint64_t> counts;
  std::vector<std::string> order;
  for (const MemberDecl& m : r.members) {
    if (!counts.contains(m.measure)) order.push_back(m.measure);
    counts[m.measure] += m.count;
  }
  std::vector<RowGroup> groups;
  for (const std::string& name : order) {
    AtomicMeasure base = find_measure(f, name);
    if (r.center) base = center(base);
    groups.push_back(RowGroup{dilate(base, scale), counts[name], RowGroup::Dilation{base, scale}});
  }
  return RowSpec(std::move(groups), r.name);
}

}  // namespace freeprob
