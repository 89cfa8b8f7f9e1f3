#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace equiflex::conic {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { continuous, binary };
enum class Sense { equal, less_equal, greater_equal };

/// second_order: (t; x1..xk) with t >= ||x||.
/// rotated_second_order: (u, v; x1..xk) with 2uv >= ||x||^2, u, v >= 0.
enum class ConeKind { second_order, rotated_second_order };

struct VariableRef {
  std::size_t id = 0;
  auto operator<=>(const VariableRef&) const = default;
};

struct ConstraintRef {
  std::size_t id = 0;
  auto operator<=>(const ConstraintRef&) const = default;
};

struct ConeRef {
  std::size_t id = 0;
  auto operator<=>(const ConeRef&) const = default;
};

struct Term {
  VariableRef var;
  double coef = 0.0;
};

/// sum(coef * var) + constant
struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  AffineExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)
  AffineExpr(VariableRef v, double coef = 1.0) : terms{{v, coef}} {}  // NOLINT

  AffineExpr& add(VariableRef v, double coef) {
    terms.push_back({v, coef});
    return *this;
  }
};

struct Variable {
  std::string name;
  VarKind kind = VarKind::continuous;
  double lower = -kInf;
  double upper = kInf;
};

struct LinearConstraint {
  std::vector<Term> terms;
  Sense sense = Sense::equal;
  double rhs = 0.0;
  std::string tag;
};

struct Cone {
  ConeKind kind = ConeKind::second_order;
  std::vector<AffineExpr> members;
  std::string tag;
  // Cone that relaxes an equality (branch-flow current definition); checked by
  // soc_exactness. Genuine capacity cones leave this false.
  bool relaxation = false;
};

/// A binary paired with the continuous variable it gates. Used by the
/// branch-and-bound rounding heuristic: the binary is rounded to one when the
/// gated variable is active.
struct IndicatorLink {
  VariableRef binary;
  VariableRef gated;
};

/// Mixed-integer second-order-cone program: minimize a linear objective over
/// linear rows, cones and variable boxes. Variables, rows and cones are
/// append-only; ids are dense indices in insertion order.
class ConicProgram {
 public:
  VariableRef add_variable(std::string name, VarKind kind, double lower, double upper);
  VariableRef add_continuous(std::string name, double lower = -kInf, double upper = kInf) {
    return add_variable(std::move(name), VarKind::continuous, lower, upper);
  }
  VariableRef add_binary(std::string name) {
    return add_variable(std::move(name), VarKind::binary, 0.0, 1.0);
  }

  /// Duplicate variables in `terms` are merged; zero coefficients dropped.
  ConstraintRef add_constraint(std::vector<Term> terms, Sense sense, double rhs, std::string tag);
  ConeRef add_cone(ConeKind kind, std::vector<AffineExpr> members, std::string tag,
                   bool relaxation = false);

  void add_objective(VariableRef v, double coef);
  void add_objective_constant(double c) { objective_constant_ += c; }
  void clear_objective();

  void set_bounds(VariableRef v, double lower, double upper);
  void set_rhs(ConstraintRef r, double rhs);
  void link_indicator(VariableRef binary, VariableRef gated);

  /// Freeze the program; later mutation throws ModelError.
  void seal() { sealed_ = true; }
  [[nodiscard]] bool sealed() const { return sealed_; }

  /// Copy with every listed binary fixed to its value (rounded to 0/1).
  [[nodiscard]] ConicProgram with_fixed_binaries(
      std::span<const std::pair<VariableRef, double>> assignment) const;

  [[nodiscard]] const std::vector<Variable>& variables() const { return variables_; }
  [[nodiscard]] const std::vector<LinearConstraint>& constraints() const { return constraints_; }
  [[nodiscard]] const std::vector<Cone>& cones() const { return cones_; }
  [[nodiscard]] const std::vector<double>& objective() const { return objective_; }
  [[nodiscard]] double objective_constant() const { return objective_constant_; }
  [[nodiscard]] const std::vector<IndicatorLink>& indicator_links() const { return links_; }

  [[nodiscard]] const Variable& variable(VariableRef v) const { return variables_.at(v.id); }
  [[nodiscard]] std::optional<VariableRef> find_variable(const std::string& name) const;
  [[nodiscard]] std::optional<ConstraintRef> find_constraint(const std::string& tag) const;
  [[nodiscard]] std::vector<VariableRef> binaries() const;
  [[nodiscard]] std::size_t num_variables() const { return variables_.size(); }

  /// Value of the objective at a primal point (constant included).
  [[nodiscard]] double evaluate_objective(std::span<const double> x) const;

  /// Plain-text dump that round-trips losslessly through read_text.
  void write_text(std::ostream& out) const;
  static ConicProgram read_text(std::istream& in);

 private:
  void check_open() const;
  void check_var(VariableRef v) const;

  std::vector<Variable> variables_;
  std::vector<LinearConstraint> constraints_;
  std::vector<Cone> cones_;
  std::vector<double> objective_;
  double objective_constant_ = 0.0;
  std::vector<IndicatorLink> links_;
  std::unordered_map<std::string, std::size_t> var_index_;
  std::unordered_map<std::string, std::size_t> row_index_;
  bool sealed_ = false;
};

double evaluate(const AffineExpr& e, std::span<const double> x);

}  // namespace equiflex::conic
