#pragma once

// Plain-text problem files.  INI-style sections hold the plant, the cost,
// the horizon parameters, and optional diagonal state scaling:
//
//   [meta]          name, n, m, T
//   [dynamics]      poly f0 = e1 ; ... ; en     (components split on ';')
//                   nonpoly f1 = ...            (pieces with the same tag+name add)
//   [cost]          poly c0 = ..., nonpoly c0 = ..., ... over x1..xn and t
//   [terminal]      poly g = ..., nonpoly g = ... over x1..xn
//   [mpc]           T_I, T_h, d, k, R, delta, dt, h
//   [init]          x0 = v1 v2 ... vn
//   [scaling]       L = s1 ... sn, cost_coords = scaled | original  (optional)
//
// '#' starts a comment.  poly-tagged expressions must actually be
// polynomial; nonpoly pieces may use sin/cos/exp and are Taylor-expanded per
// window at run time (polynomial content on a nonpoly line joins the exact
// part instead).  delta is either "constants LO HI" or "offset W".

#include <Eigen/Dense>

#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sosmpc/expr.hpp"
#include "sosmpc/mpc.hpp"
#include "sosmpc/polynomial.hpp"

namespace sosmpc {

struct ProblemParseError : std::runtime_error {
  int line;
  ProblemParseError(const std::string& msg, int line_number)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + msg),
        line(line_number) {}
};

/// A problem file's content: the plant as written (unscaled), the horizon
/// configuration, and the optional scaling request the runner applies.
struct LoadedProblem {
  std::string name;
  ProblemDefinition problem;
  MPCConfig config;
  Eigen::VectorXd scale;  // empty: no scaling requested
  CostCoords cost_coords = CostCoords::Scaled;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline double parse_number(const std::string& s, int line) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ProblemParseError("expected a number, got '" + s + "'", line);
  }
}

inline int parse_int(const std::string& s, int line) {
  const double v = parse_number(s, line);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ProblemParseError("expected an integer, got '" + s + "'", line);
  return i;
}

struct RawLine {
  std::string key, value;
  int line = 0;
};

/// Formats a polynomial the parser reads back verbatim.
inline std::string format_polynomial(const Polynomial& p,
                                     const std::vector<std::string>& names) {
  if (p.terms().empty()) return "0";
  std::string out;
  char buf[40];
  for (const auto& [mono, coeff] : p.terms()) {
    std::snprintf(buf, sizeof buf, "%.17g", coeff < 0 && !out.empty() ? -coeff : coeff);
    if (!out.empty()) out += coeff < 0 ? " - " : " + ";
    std::string factors;
    for (int v = 0; v < mono.nvars(); ++v) {
      if (mono.exps[v] == 0) continue;
      if (!factors.empty()) factors += "*";
      factors += names[v];
      if (mono.exps[v] > 1) factors += "^" + std::to_string(mono.exps[v]);
    }
    if (factors.empty()) {
      out += buf;
    } else if (coeff == 1.0 || (coeff == -1.0 && !out.empty())) {
      out += factors;
    } else {
      out += std::string(buf) + "*" + factors;
    }
  }
  return out;
}

}  // namespace detail

/// Parses problem-file text.  Errors carry the offending line number.
inline LoadedProblem parse_problem_file(const std::string& text) {
  using detail::RawLine;

  std::map<std::string, std::vector<RawLine>> sections;
  {
    static const char* known[] = {"meta", "dynamics", "cost", "terminal",
                                  "mpc",  "init",     "scaling"};
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string line = detail::trim(raw);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ProblemParseError("unterminated section header", line_no);
        section = detail::trim(line.substr(1, line.size() - 2));
        bool ok = false;
        for (const char* k : known) ok = ok || section == k;
        if (!ok) throw ProblemParseError("unknown section [" + section + "]", line_no);
        continue;
      }
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ProblemParseError("expected 'key = value'", line_no);
      if (section.empty())
        throw ProblemParseError("content before the first section header", line_no);
      sections[section].push_back(
          {detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), line_no});
    }
  }

  const auto section_lines = [&](const std::string& name) -> const std::vector<RawLine>& {
    static const std::vector<RawLine> empty;
    const auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  };

  // --- [meta] --------------------------------------------------------------
  LoadedProblem lp;
  int n = -1, m = -1;
  double T = 0.0;
  for (const RawLine& rl : section_lines("meta")) {
    if (rl.key == "name")
      lp.name = rl.value;
    else if (rl.key == "n")
      n = detail::parse_int(rl.value, rl.line);
    else if (rl.key == "m")
      m = detail::parse_int(rl.value, rl.line);
    else if (rl.key == "T")
      T = detail::parse_number(rl.value, rl.line);
    else
      throw ProblemParseError("unknown [meta] key '" + rl.key + "'", rl.line);
  }
  if (n < 1) throw ProblemParseError("[meta] must declare n >= 1", 0);
  if (m < 0) throw ProblemParseError("[meta] must declare m >= 0", 0);
  if (!(T > 0.0)) throw ProblemParseError("[meta] must declare T > 0", 0);

  const std::vector<std::string> state_names = state_time_names(n, false);
  const std::vector<std::string> statetime_names = state_time_names(n, true);

  const auto parse_checked = [](const std::string& text_in,
                                const std::vector<std::string>& names, int line) {
    try {
      return parse_expr(text_in, names);
    } catch (const ExprParseError& e) {
      throw ProblemParseError(e.what(), line);
    }
  };

  // Splits a tagged piece line "poly f0" / "nonpoly c1" / "poly g".
  struct Tagged {
    bool is_poly;
    std::string piece;
  };
  const auto split_tag = [](const RawLine& rl) -> Tagged {
    const auto toks = detail::split_ws(rl.key);
    if (toks.size() != 2 || (toks[0] != "poly" && toks[0] != "nonpoly"))
      throw ProblemParseError("expected 'poly <piece>' or 'nonpoly <piece>', got '" +
                                  rl.key + "'",
                              rl.line);
    return {toks[0] == "poly", toks[1]};
  };
  const auto piece_index = [m](const std::string& piece, char prefix, const RawLine& rl) {
    if (piece.size() < 2 || piece[0] != prefix)
      throw ProblemParseError("expected piece name '" + std::string(1, prefix) +
                                  "0'..'" + std::string(1, prefix) + std::to_string(m) +
                                  "', got '" + piece + "'",
                              rl.line);
    int idx = -1;
    try {
      size_t used = 0;
      idx = std::stoi(piece.substr(1), &used);
      if (used + 1 != piece.size()) idx = -1;
    } catch (const std::exception&) {
    }
    if (idx < 0 || idx > m)
      throw ProblemParseError("piece index out of range in '" + piece + "'", rl.line);
    return idx;
  };

  // --- [dynamics] ------------------------------------------------------------
  ProblemDefinition& prob = lp.problem;
  prob.n = n;
  prob.m = m;
  prob.cost.assign(m + 1, ScalarPiece(Polynomial(n + 1)));
  prob.dynamics.assign(m + 1, std::vector<ScalarPiece>(n, ScalarPiece(Polynomial(n))));
  prob.terminal = ScalarPiece(Polynomial(n));

  for (const RawLine& rl : section_lines("dynamics")) {
    const Tagged tag = split_tag(rl);
    const int idx = piece_index(tag.piece, 'f', rl);
    std::vector<std::string> comps;
    {
      std::string cur;
      std::istringstream in(rl.value);
      while (std::getline(in, cur, ';')) comps.push_back(detail::trim(cur));
    }
    if (static_cast<int>(comps.size()) != n)
      throw ProblemParseError("dynamics piece needs " + std::to_string(n) +
                                  " ';'-separated components, got " +
                                  std::to_string(comps.size()),
                              rl.line);
    for (int s = 0; s < n; ++s) {
      const Expr e = parse_checked(comps[s], state_names, rl.line);
      if (tag.is_poly) {
        const auto p = try_to_polynomial(e, n);
        if (!p)
          throw ProblemParseError("piece tagged 'poly' is not polynomial", rl.line);
        prob.dynamics[idx][s].poly += *p;
      } else if (const auto p = try_to_polynomial(e, n)) {
        // Polynomial content on a nonpoly line (zero placeholders in
        // multi-component rows, most commonly) joins the exact part rather
        // than pretending to need expansion.
        prob.dynamics[idx][s].poly += *p;
      } else {
        prob.dynamics[idx][s].extra.push_back(e);
      }
    }
  }

  // --- [cost] ---------------------------------------------------------------
  for (const RawLine& rl : section_lines("cost")) {
    const Tagged tag = split_tag(rl);
    const int idx = piece_index(tag.piece, 'c', rl);
    const Expr e = parse_checked(rl.value, statetime_names, rl.line);
    if (tag.is_poly) {
      const auto p = try_to_polynomial(e, n + 1);
      if (!p) throw ProblemParseError("piece tagged 'poly' is not polynomial", rl.line);
      prob.cost[idx].poly += *p;
    } else if (const auto p = try_to_polynomial(e, n + 1)) {
      prob.cost[idx].poly += *p;
    } else {
      prob.cost[idx].extra.push_back(e);
    }
  }

  // --- [terminal] -------------------------------------------------------------
  for (const RawLine& rl : section_lines("terminal")) {
    const Tagged tag = split_tag(rl);
    if (tag.piece != "g")
      throw ProblemParseError("terminal piece must be named 'g'", rl.line);
    const Expr e = parse_checked(rl.value, state_names, rl.line);
    if (tag.is_poly) {
      const auto p = try_to_polynomial(e, n);
      if (!p) throw ProblemParseError("piece tagged 'poly' is not polynomial", rl.line);
      prob.terminal.poly += *p;
    } else if (const auto p = try_to_polynomial(e, n)) {
      prob.terminal.poly += *p;
    } else {
      prob.terminal.extra.push_back(e);
    }
  }

  // --- [mpc] ----------------------------------------------------------------
  MPCConfig& cfg = lp.config;
  cfg.T = T;
  bool have_TI = false, have_Th = false, have_d = false, have_k = false, have_R = false,
       have_delta = false;
  for (const RawLine& rl : section_lines("mpc")) {
    if (rl.key == "T_I") {
      cfg.T_I = detail::parse_number(rl.value, rl.line);
      have_TI = true;
    } else if (rl.key == "T_h") {
      cfg.T_h = detail::parse_number(rl.value, rl.line);
      have_Th = true;
    } else if (rl.key == "d") {
      cfg.d = detail::parse_int(rl.value, rl.line);
      have_d = true;
    } else if (rl.key == "k") {
      cfg.k = detail::parse_int(rl.value, rl.line);
      have_k = true;
    } else if (rl.key == "R") {
      cfg.R = detail::parse_number(rl.value, rl.line);
      have_R = true;
    } else if (rl.key == "dt") {
      cfg.dt = detail::parse_number(rl.value, rl.line);
    } else if (rl.key == "h") {
      cfg.h = detail::parse_number(rl.value, rl.line);
    } else if (rl.key == "delta") {
      const auto toks = detail::split_ws(rl.value);
      if (toks.size() == 3 && toks[0] == "constants") {
        cfg.region = RegionRule::constants(detail::parse_number(toks[1], rl.line),
                                           detail::parse_number(toks[2], rl.line));
      } else if (toks.size() == 2 && toks[0] == "offset") {
        cfg.region = RegionRule::offset(detail::parse_number(toks[1], rl.line));
      } else {
        throw ProblemParseError("delta must be 'constants LO HI' or 'offset W'", rl.line);
      }
      have_delta = true;
    } else {
      throw ProblemParseError("unknown [mpc] key '" + rl.key + "'", rl.line);
    }
  }
  if (!have_TI || !have_Th || !have_d || !have_k || !have_R || !have_delta)
    throw ProblemParseError("[mpc] must set T_I, T_h, d, k, R, and delta", 0);

  // --- [init] ---------------------------------------------------------------
  bool have_x0 = false;
  for (const RawLine& rl : section_lines("init")) {
    if (rl.key != "x0")
      throw ProblemParseError("unknown [init] key '" + rl.key + "'", rl.line);
    const auto toks = detail::split_ws(rl.value);
    if (static_cast<int>(toks.size()) != n)
      throw ProblemParseError("x0 needs " + std::to_string(n) + " values", rl.line);
    prob.x0.resize(n);
    for (int i = 0; i < n; ++i) prob.x0(i) = detail::parse_number(toks[i], rl.line);
    have_x0 = true;
  }
  if (!have_x0) throw ProblemParseError("[init] must set x0", 0);

  // --- [scaling] --------------------------------------------------------------
  for (const RawLine& rl : section_lines("scaling")) {
    if (rl.key == "L") {
      const auto toks = detail::split_ws(rl.value);
      if (static_cast<int>(toks.size()) != n)
        throw ProblemParseError("L needs " + std::to_string(n) + " values", rl.line);
      lp.scale.resize(n);
      for (int i = 0; i < n; ++i) {
        lp.scale(i) = detail::parse_number(toks[i], rl.line);
        if (!(lp.scale(i) > 0.0))
          throw ProblemParseError("scale entries must be positive", rl.line);
      }
    } else if (rl.key == "cost_coords") {
      if (rl.value == "scaled")
        lp.cost_coords = CostCoords::Scaled;
      else if (rl.value == "original")
        lp.cost_coords = CostCoords::Original;
      else
        throw ProblemParseError("cost_coords must be 'scaled' or 'original'", rl.line);
    } else {
      throw ProblemParseError("unknown [scaling] key '" + rl.key + "'", rl.line);
    }
  }

  try {
    prob.validate();
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ProblemParseError(e.what(), 0);
  }
  return lp;
}

/// Writes a problem back out; parse_problem_file(write_problem_file(lp))
/// reproduces the problem (numerically identical coefficients).
inline std::string write_problem_file(const LoadedProblem& lp) {
  const int n = lp.problem.n, m = lp.problem.m;
  const std::vector<std::string> xs = state_time_names(n, false);
  const std::vector<std::string> xt = state_time_names(n, true);
  char buf[40];
  const auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };

  std::string out;
  out += "[meta]\n";
  if (!lp.name.empty()) out += "name = " + lp.name + "\n";
  out += "n = " + std::to_string(n) + "\n";
  out += "m = " + std::to_string(m) + "\n";
  out += "T = " + num(lp.config.T) + "\n";

  out += "\n[dynamics]\n";
  for (int i = 0; i <= m; ++i) {
    const auto& row = lp.problem.dynamics[i];
    bool any_poly = false;
    size_t max_extra = 0;
    for (const auto& piece : row) {
      any_poly = any_poly || !piece.poly.terms().empty();
      max_extra = std::max(max_extra, piece.extra.size());
    }
    if (any_poly || max_extra == 0) {
      out += "poly f" + std::to_string(i) + " = ";
      for (int s = 0; s < n; ++s)
        out += (s ? " ; " : "") + detail::format_polynomial(row[s].poly, xs);
      out += "\n";
    }
    for (size_t j = 0; j < max_extra; ++j) {
      out += "nonpoly f" + std::to_string(i) + " = ";
      for (int s = 0; s < n; ++s)
        out += (s ? " ; " : "") +
               (j < row[s].extra.size() ? print_expr(row[s].extra[j], xs) : std::string("0"));
      out += "\n";
    }
  }

  out += "\n[cost]\n";
  for (int i = 0; i <= m; ++i) {
    const auto& piece = lp.problem.cost[i];
    if (!piece.poly.terms().empty() || piece.extra.empty())
      out += "poly c" + std::to_string(i) + " = " +
             detail::format_polynomial(piece.poly, xt) + "\n";
    for (const auto& e : piece.extra)
      out += "nonpoly c" + std::to_string(i) + " = " + print_expr(e, xt) + "\n";
  }

  out += "\n[terminal]\n";
  if (!lp.problem.terminal.poly.terms().empty() || lp.problem.terminal.extra.empty())
    out += "poly g = " + detail::format_polynomial(lp.problem.terminal.poly, xs) + "\n";
  for (const auto& e : lp.problem.terminal.extra)
    out += "nonpoly g = " + print_expr(e, xs) + "\n";

  out += "\n[mpc]\n";
  out += "T_I = " + num(lp.config.T_I) + "\n";
  out += "T_h = " + num(lp.config.T_h) + "\n";
  out += "d = " + std::to_string(lp.config.d) + "\n";
  out += "k = " + std::to_string(lp.config.k) + "\n";
  out += "R = " + num(lp.config.R) + "\n";
  if (lp.config.region.kind == RegionRule::Kind::Constants)
    out += "delta = constants " + num(lp.config.region.lo) + " " +
           num(lp.config.region.hi) + "\n";
  else
    out += "delta = offset " + num(lp.config.region.width) + "\n";
  out += "dt = " + num(lp.config.dt) + "\n";
  out += "h = " + num(lp.config.h) + "\n";

  out += "\n[init]\n";
  out += "x0 =";
  for (int i = 0; i < n; ++i) out += " " + num(lp.problem.x0(i));
  out += "\n";

  if (lp.scale.size() != 0) {
    out += "\n[scaling]\n";
    out += "L =";
    for (int i = 0; i < n; ++i) out += " " + num(lp.scale(i));
    out += "\n";
    out += std::string("cost_coords = ") +
           (lp.cost_coords == CostCoords::Original ? "original" : "scaled") + "\n";
  }
  return out;
}

}  // namespace sosmpc
