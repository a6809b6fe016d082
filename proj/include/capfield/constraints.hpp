#pragma once

#include <memory>
#include <string>
#include <vector>

#include "capfield/common.hpp"

namespace capfield {

// Expression tree for one constraint left-hand side g(x). Nodes are
// immutable after construction; trees are shared via shared_ptr so a
// ConstraintSet can be copied cheaply.
struct ConstraintExpr;
using ExprPtr = std::shared_ptr<const ConstraintExpr>;

struct ConstraintExpr {
  enum class Op {
    constant,  // value
    var,       // x[index]
    add,       // a + b
    sub,       // a - b
    mul,       // a * b
    div,       // a / b
    neg,       // -a
    max,       // max(a, b)
    min,       // min(a, b)
    dot,       // coeffs . x
  };

  Op op = Op::constant;
  double value = 0.0;      // constant
  Index index = 0;         // var
  std::vector<double> coeffs;  // dot
  ExprPtr a, b;

  static ExprPtr make_constant(double v);
  static ExprPtr make_var(Index i);
  static ExprPtr make_binary(Op op, ExprPtr a, ExprPtr b);
  static ExprPtr make_neg(ExprPtr a);
  static ExprPtr make_dot(std::vector<double> coeffs);
};

// A conjunction of constraints g_j(x) <= b_j, j = 0..q-1.
struct ConstraintSet {
  std::vector<ExprPtr> exprs;
  Vector bounds;

  Index size() const { return static_cast<Index>(exprs.size()); }
};

// Parses constraint text, one constraint per line. Grammar:
//
//   constraint := expr "<=" expr
//   expr       := term (("+" | "-") term)*
//   term       := factor (("*" | "/") factor)*
//   factor     := NUMBER | VAR | "-" factor | "(" expr ")"
//               | "max" "(" expr "," expr ")" | "min" "(" expr "," expr ")"
//               | "dot" "(" "[" NUMBER ("," NUMBER)* "]" "," VAR_X ")"
//   VAR        := "x" INDEX
//
// '#' starts a comment that runs to end of line; blank lines are skipped.
// A constant right-hand side becomes the bound; any non-constant right-hand
// side r is folded into the left as g - r <= 0.
// Syntax errors carry line and column. When expected_dim >= 0, any variable
// index at or above it is rejected at parse time.
ConstraintSet parse_constraints(const std::string& text, Index expected_dim = -1);
ConstraintSet load_constraints(const std::string& path, Index expected_dim = -1);

// Largest var index referenced anywhere in the set, plus one; 0 for an
// empty or variable-free set.
Index min_dimension(const ConstraintSet& set);

// Renders the set back to parseable text, one constraint per line.
std::string print_constraints(const ConstraintSet& set);

double eval_expr(const ConstraintExpr& e, const Vector& x, Index constraint_index);
Vector grad_expr(const ConstraintExpr& e, const Vector& x, Index constraint_index);

// Values g_j(x) for all j. Division by zero raises EvalDomainError naming
// the offending constraint index.
Vector eval_constraints(const ConstraintSet& set, const Vector& x);

// Gradient of g_j at x. At a max/min tie the first argument is selected.
Vector grad_constraint(const ConstraintSet& set, Index j, const Vector& x);

// True iff g_j(x) <= b_j for every j.
bool satisfied(const ConstraintSet& set, const Vector& x);

// ---------------------------------------------------------------------------
// Constraint learning from the right null space of normal-class data.

// One learned direction c (unit norm) with threshold derived from the
// training inner products: threshold = mean + one standard deviation.
struct LearnedConstraint {
  Vector direction;
  double threshold = 0.0;
  double ip_mean = 0.0;
  double ip_std = 0.0;
};

// Point on the rank/nullity curve produced while growing the sample prefix.
struct RankNullityPoint {
  Index sample_count = 0;
  Index rank = 0;
  Index nullity = 0;
};

// Learns one constraint per (approximate) right null-space direction of the
// matrix whose rows are normal-class feature vectors. A singular value is
// treated as zero when it is at most tol times the largest singular value.
std::vector<LearnedConstraint> learn_nullspace_constraints(const Matrix& normals,
                                                           double tol = 1e-10);

// Converts a learned constraint into an expression-tree constraint
// c . x <= threshold.
void append_learned(ConstraintSet& set, const LearnedConstraint& lc);
ExprPtr learned_to_expr(const LearnedConstraint& lc);

// Variant that also enforces the mirrored lower bound -threshold <= c.x,
// emitted as the additional constraint -(c.x) <= threshold.
void append_learned_mirrored(ConstraintSet& set, const LearnedConstraint& lc);

// Aggregate direction: normalized sum of all learned directions, with the
// threshold recomputed from the training data. Returns false when the sum
// is numerically zero.
bool aggregate_learned(const std::vector<LearnedConstraint>& lcs, const Matrix& normals,
                       LearnedConstraint& out);

// Numerical rank and nullity of growing row prefixes of the normal-class
// matrix: prefix sizes step, 2*step, ... up to all rows (the final partial
// prefix is included).
std::vector<RankNullityPoint> rank_nullity_curve(const Matrix& normals, Index step,
                                                 double tol = 1e-10);

}  // namespace capfield
