#include "equiflex/conic/program.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "equiflex/error.hpp"

namespace equiflex::conic {

namespace {

bool has_space(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::vector<Term> merge_terms(std::vector<Term> terms) {
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return a.var.id < b.var.id; });
  std::vector<Term> out;
  for (const auto& t : terms) {
    if (!out.empty() && out.back().var == t.var) {
      out.back().coef += t.coef;
    } else {
      out.push_back(t);
    }
  }
  std::erase_if(out, [](const Term& t) { return t.coef == 0.0; });
  return out;
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok) {
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError("conic text: bad number '" + tok + "'");
  }
  return v;
}

const char* sense_code(Sense s) {
  switch (s) {
    case Sense::equal: return "E";
    case Sense::less_equal: return "L";
    case Sense::greater_equal: return "G";
  }
  return "E";
}

}  // namespace

double evaluate(const AffineExpr& e, std::span<const double> x) {
  double v = e.constant;
  for (const auto& t : e.terms) v += t.coef * x[t.var.id];
  return v;
}

void ConicProgram::check_open() const {
  if (sealed_) throw ModelError("program is sealed");
}

void ConicProgram::check_var(VariableRef v) const {
  if (v.id >= variables_.size()) {
    throw ModelError("undeclared variable id " + std::to_string(v.id));
  }
}

VariableRef ConicProgram::add_variable(std::string name, VarKind kind, double lower, double upper) {
  check_open();
  if (name.empty() || has_space(name)) throw ModelError("invalid variable name '" + name + "'");
  if (var_index_.contains(name)) throw ModelError("duplicate variable name '" + name + "'");
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw ModelError("inverted bounds for variable '" + name + "'");
  }
  if (kind == VarKind::binary && (lower < 0.0 || upper > 1.0)) {
    throw ModelError("binary variable '" + name + "' bounds outside [0,1]");
  }
  VariableRef ref{variables_.size()};
  var_index_.emplace(name, ref.id);
  variables_.push_back({std::move(name), kind, lower, upper});
  objective_.push_back(0.0);
  return ref;
}

ConstraintRef ConicProgram::add_constraint(std::vector<Term> terms, Sense sense, double rhs,
                                           std::string tag) {
  check_open();
  if (tag.empty() || has_space(tag)) throw ModelError("invalid constraint tag '" + tag + "'");
  if (row_index_.contains(tag)) throw ModelError("duplicate constraint tag '" + tag + "'");
  for (const auto& t : terms) check_var(t.var);
  terms = merge_terms(std::move(terms));
  if (terms.empty()) throw ModelError("constraint '" + tag + "' has no nonzero coefficient");
  ConstraintRef ref{constraints_.size()};
  row_index_.emplace(tag, ref.id);
  constraints_.push_back({std::move(terms), sense, rhs, std::move(tag)});
  return ref;
}

ConeRef ConicProgram::add_cone(ConeKind kind, std::vector<AffineExpr> members, std::string tag,
                               bool relaxation) {
  check_open();
  if (tag.empty() || has_space(tag)) throw ModelError("invalid cone tag '" + tag + "'");
  const std::size_t min_dim = kind == ConeKind::rotated_second_order ? 3 : 2;
  if (members.size() < min_dim) throw ModelError("cone '" + tag + "' dimension too small");
  for (auto& m : members) {
    for (const auto& t : m.terms) check_var(t.var);
    m.terms = merge_terms(std::move(m.terms));
  }
  ConeRef ref{cones_.size()};
  cones_.push_back({kind, std::move(members), std::move(tag), relaxation});
  return ref;
}

void ConicProgram::add_objective(VariableRef v, double coef) {
  check_open();
  check_var(v);
  objective_[v.id] += coef;
}

void ConicProgram::clear_objective() {
  check_open();
  std::fill(objective_.begin(), objective_.end(), 0.0);
  objective_constant_ = 0.0;
}

void ConicProgram::set_bounds(VariableRef v, double lower, double upper) {
  check_open();
  check_var(v);
  auto& var = variables_[v.id];
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw ModelError("inverted bounds for variable '" + var.name + "'");
  }
  var.lower = lower;
  var.upper = upper;
}

void ConicProgram::set_rhs(ConstraintRef r, double rhs) {
  check_open();
  if (r.id >= constraints_.size()) throw ModelError("undeclared constraint id " + std::to_string(r.id));
  constraints_[r.id].rhs = rhs;
}

void ConicProgram::link_indicator(VariableRef binary, VariableRef gated) {
  check_open();
  check_var(binary);
  check_var(gated);
  if (variables_[binary.id].kind != VarKind::binary) {
    throw ModelError("indicator link on non-binary '" + variables_[binary.id].name + "'");
  }
  links_.push_back({binary, gated});
}

ConicProgram ConicProgram::with_fixed_binaries(
    std::span<const std::pair<VariableRef, double>> assignment) const {
  ConicProgram copy = *this;
  for (const auto& [v, value] : assignment) {
    check_var(v);
    auto& var = copy.variables_[v.id];
    if (var.kind != VarKind::binary) {
      throw ModelError("cannot fix non-binary variable '" + var.name + "'");
    }
    const double fixed = value >= 0.5 ? 1.0 : 0.0;
    var.lower = fixed;
    var.upper = fixed;
  }
  return copy;
}

std::optional<VariableRef> ConicProgram::find_variable(const std::string& name) const {
  auto it = var_index_.find(name);
  if (it == var_index_.end()) return std::nullopt;
  return VariableRef{it->second};
}

std::optional<ConstraintRef> ConicProgram::find_constraint(const std::string& tag) const {
  auto it = row_index_.find(tag);
  if (it == row_index_.end()) return std::nullopt;
  return ConstraintRef{it->second};
}

std::vector<VariableRef> ConicProgram::binaries() const {
  std::vector<VariableRef> out;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].kind == VarKind::binary) out.push_back({i});
  }
  return out;
}

double ConicProgram::evaluate_objective(std::span<const double> x) const {
  double v = objective_constant_;
  for (std::size_t i = 0; i < objective_.size(); ++i) v += objective_[i] * x[i];
  return v;
}

// Format:
//   CONIC 1
//   VARS <n>            then n lines: <name> <C|B> <lower> <upper> <objective>
//   CONSTANT <c>
//   ROWS <m>            then m lines: <tag> <E|L|G> <rhs> <nnz> (<var-id> <coef>)*
//   CONES <k>           then per cone: <tag> <SOC|RSOC> <relaxed 0|1> <dim>
//                       followed by dim lines: <constant> <nnz> (<var-id> <coef>)*
//   LINKS <j>           then j lines: <binary-id> <gated-id>
//   END
void ConicProgram::write_text(std::ostream& out) const {
  out << "CONIC 1\n";
  out << "VARS " << variables_.size() << '\n';
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    const auto& v = variables_[i];
    out << v.name << ' ' << (v.kind == VarKind::binary ? 'B' : 'C') << ' ' << fmt_double(v.lower)
        << ' ' << fmt_double(v.upper) << ' ' << fmt_double(objective_[i]) << '\n';
  }
  out << "CONSTANT " << fmt_double(objective_constant_) << '\n';
  out << "ROWS " << constraints_.size() << '\n';
  for (const auto& r : constraints_) {
    out << r.tag << ' ' << sense_code(r.sense) << ' ' << fmt_double(r.rhs) << ' '
        << r.terms.size();
    for (const auto& t : r.terms) out << ' ' << t.var.id << ' ' << fmt_double(t.coef);
    out << '\n';
  }
  out << "CONES " << cones_.size() << '\n';
  for (const auto& c : cones_) {
    out << c.tag << ' ' << (c.kind == ConeKind::second_order ? "SOC" : "RSOC") << ' '
        << (c.relaxation ? 1 : 0) << ' ' << c.members.size() << '\n';
    for (const auto& m : c.members) {
      out << fmt_double(m.constant) << ' ' << m.terms.size();
      for (const auto& t : m.terms) out << ' ' << t.var.id << ' ' << fmt_double(t.coef);
      out << '\n';
    }
  }
  out << "LINKS " << links_.size() << '\n';
  for (const auto& l : links_) out << l.binary.id << ' ' << l.gated.id << '\n';
  out << "END\n";
}

namespace {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string tok;
    if (!(in_ >> tok)) throw ParseError("conic text: unexpected end of input");
    return tok;
  }
  void expect(const std::string& kw) {
    auto tok = word();
    if (tok != kw) throw ParseError("conic text: expected '" + kw + "', got '" + tok + "'");
  }
  std::size_t count() {
    auto tok = word();
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw ParseError("conic text: bad count '" + tok + "'");
    }
    return v;
  }
  double number() { return parse_double(word()); }

 private:
  std::istream& in_;
};

std::vector<Term> read_terms(TokenReader& rd, std::size_t nvars) {
  const std::size_t nnz = rd.count();
  std::vector<Term> terms;
  terms.reserve(nnz);
  for (std::size_t k = 0; k < nnz; ++k) {
    const std::size_t id = rd.count();
    if (id >= nvars) throw ParseError("conic text: variable id out of range");
    terms.push_back({VariableRef{id}, rd.number()});
  }
  return terms;
}

}  // namespace

ConicProgram ConicProgram::read_text(std::istream& in) {
  TokenReader rd(in);
  rd.expect("CONIC");
  if (rd.count() != 1) throw ParseError("conic text: unsupported version");
  ConicProgram p;
  rd.expect("VARS");
  const std::size_t n = rd.count();
  for (std::size_t i = 0; i < n; ++i) {
    auto name = rd.word();
    auto kind = rd.word();
    if (kind != "B" && kind != "C") throw ParseError("conic text: bad variable kind '" + kind + "'");
    const double lo = rd.number();
    const double hi = rd.number();
    const double obj = rd.number();
    auto v = p.add_variable(std::move(name), kind == "B" ? VarKind::binary : VarKind::continuous,
                            lo, hi);
    p.objective_[v.id] = obj;
  }
  rd.expect("CONSTANT");
  p.objective_constant_ = rd.number();
  rd.expect("ROWS");
  const std::size_t m = rd.count();
  for (std::size_t i = 0; i < m; ++i) {
    auto tag = rd.word();
    auto s = rd.word();
    Sense sense = Sense::equal;
    if (s == "L") {
      sense = Sense::less_equal;
    } else if (s == "G") {
      sense = Sense::greater_equal;
    } else if (s != "E") {
      throw ParseError("conic text: bad sense '" + s + "'");
    }
    const double rhs = rd.number();
    p.add_constraint(read_terms(rd, n), sense, rhs, std::move(tag));
  }
  rd.expect("CONES");
  const std::size_t k = rd.count();
  for (std::size_t i = 0; i < k; ++i) {
    auto tag = rd.word();
    auto kind = rd.word();
    if (kind != "SOC" && kind != "RSOC") throw ParseError("conic text: bad cone kind '" + kind + "'");
    const bool relaxed = rd.count() != 0;
    const std::size_t dim = rd.count();
    std::vector<AffineExpr> members(dim);
    for (auto& mem : members) {
      mem.constant = rd.number();
      mem.terms = read_terms(rd, n);
    }
    p.add_cone(kind == "SOC" ? ConeKind::second_order : ConeKind::rotated_second_order,
               std::move(members), std::move(tag), relaxed);
  }
  rd.expect("LINKS");
  const std::size_t nl = rd.count();
  for (std::size_t i = 0; i < nl; ++i) {
    const std::size_t b = rd.count();
    const std::size_t g = rd.count();
    if (b >= n || g >= n) throw ParseError("conic text: link id out of range");
    p.link_indicator(VariableRef{b}, VariableRef{g});
  }
  rd.expect("END");
  return p;
}

}  // namespace equiflex::conic
