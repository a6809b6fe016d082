#include "capfield/constraints.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace capfield {

ExprPtr ConstraintExpr::make_constant(double v) {
  auto e = std::make_shared<ConstraintExpr>();
  e->op = Op::constant;
  e->value = v;
  return e;
}

ExprPtr ConstraintExpr::make_var(Index i) {
  auto e = std::make_shared<ConstraintExpr>();
  e->op = Op::var;
  e->index = i;
  return e;
}

ExprPtr ConstraintExpr::make_binary(Op op, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<ConstraintExpr>();
  e->op = op;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

ExprPtr ConstraintExpr::make_neg(ExprPtr a) {
  auto e = std::make_shared<ConstraintExpr>();
  e->op = Op::neg;
  e->a = std::move(a);
  return e;
}

ExprPtr ConstraintExpr::make_dot(std::vector<double> coeffs) {
  auto e = std::make_shared<ConstraintExpr>();
  e->op = Op::dot;
  e->coeffs = std::move(coeffs);
  return e;
}

namespace {

using Op = ConstraintExpr::Op;

// ---------------------------------------------------------------------------
// Lexer / parser

struct Token {
  enum class Kind { number, var, ident, punct, end };
  Kind kind = Kind::end;
  double number = 0.0;
  Index var_index = 0;
  std::string text;  // ident or punct spelling
  int line = 0, col = 0;
};

class Parser {
 public:
  Parser(const std::string& text, Index expected_dim)
      : src_(text), expected_dim_(expected_dim) {}

  ConstraintSet parse() {
    ConstraintSet set;
    std::vector<double> bounds;
    next_token();
    while (tok_.kind != Token::Kind::end) {
      if (at_punct("\n")) {
        next_token();
        continue;
      }
      ExprPtr lhs = parse_expr();
      expect_punct("<=");
      ExprPtr rhs = parse_expr();
      if (tok_.kind != Token::Kind::end && !at_punct("\n"))
        fail("expected end of line after constraint");
      if (rhs->op == Op::constant) {
        set.exprs.push_back(std::move(lhs));
        bounds.push_back(rhs->value);
      } else {
        // Fold a non-constant right-hand side into the left: g - rhs <= 0.
        set.exprs.push_back(
            ConstraintExpr::make_binary(Op::sub, std::move(lhs), std::move(rhs)));
        bounds.push_back(0.0);
      }
    }
    set.bounds = Eigen::Map<const Vector>(bounds.data(), static_cast<Index>(bounds.size()));
    return set;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("constraint syntax error at line " + std::to_string(tok_.line) +
                     ", column " + std::to_string(tok_.col) + ": " + msg);
  }

  bool at_punct(std::string_view p) const {
    return tok_.kind == Token::Kind::punct && tok_.text == p;
  }

  void expect_punct(std::string_view p) {
    if (!at_punct(p)) fail("expected \"" + std::string(p) + "\"");
    next_token();
  }

  ExprPtr parse_expr() {
    ExprPtr e = parse_term();
    while (at_punct("+") || at_punct("-")) {
      const Op op = at_punct("+") ? Op::add : Op::sub;
      next_token();
      e = ConstraintExpr::make_binary(op, std::move(e), parse_term());
    }
    return e;
  }

  ExprPtr parse_term() {
    ExprPtr e = parse_factor();
    while (at_punct("*") || at_punct("/")) {
      const Op op = at_punct("*") ? Op::mul : Op::div;
      next_token();
      e = ConstraintExpr::make_binary(op, std::move(e), parse_factor());
    }
    return e;
  }

  ExprPtr parse_factor() {
    if (tok_.kind == Token::Kind::number) {
      ExprPtr e = ConstraintExpr::make_constant(tok_.number);
      next_token();
      return e;
    }
    if (tok_.kind == Token::Kind::var) {
      if (expected_dim_ >= 0 && tok_.var_index >= expected_dim_)
        fail("variable x" + std::to_string(tok_.var_index) + " exceeds dimension " +
             std::to_string(expected_dim_));
      ExprPtr e = ConstraintExpr::make_var(tok_.var_index);
      next_token();
      return e;
    }
    if (at_punct("-")) {
      next_token();
      return ConstraintExpr::make_neg(parse_factor());
    }
    if (at_punct("(")) {
      next_token();
      ExprPtr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (tok_.kind == Token::Kind::ident) {
      const std::string name = tok_.text;
      if (name == "max" || name == "min") {
        next_token();
        expect_punct("(");
        ExprPtr a = parse_expr();
        expect_punct(",");
        ExprPtr b = parse_expr();
        expect_punct(")");
        return ConstraintExpr::make_binary(name == "max" ? Op::max : Op::min,
                                           std::move(a), std::move(b));
      }
      if (name == "dot") {
        next_token();
        expect_punct("(");
        expect_punct("[");
        std::vector<double> coeffs;
        coeffs.push_back(parse_number());
        while (at_punct(",")) {
          next_token();
          coeffs.push_back(parse_number());
        }
        expect_punct("]");
        expect_punct(",");
        if (tok_.kind != Token::Kind::ident || tok_.text != "x")
          fail("dot() expects the feature vector \"x\" as its second argument");
        next_token();
        expect_punct(")");
        if (expected_dim_ >= 0 && static_cast<Index>(coeffs.size()) != expected_dim_)
          fail("dot() coefficient count " + std::to_string(coeffs.size()) +
               " does not match dimension " + std::to_string(expected_dim_));
        return ConstraintExpr::make_dot(std::move(coeffs));
      }
      fail("unknown function \"" + name + "\"");
    }
    fail("expected a number, variable, or parenthesized expression");
  }

  double parse_number() {
    double sign = 1.0;
    if (at_punct("-")) {
      sign = -1.0;
      next_token();
    }
    if (tok_.kind != Token::Kind::number) fail("expected a number");
    const double v = sign * tok_.number;
    next_token();
    return v;
  }

  void next_token() {
    // Skip horizontal whitespace and comments; newlines are significant.
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
        ++col_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::Kind::end;
      return;
    }
    const char c = src_[pos_];
    if (c == '\n') {
      tok_.kind = Token::Kind::punct;
      tok_.text = "\n";
      ++pos_;
      ++line_;
      col_ = 1;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      size_t end = 0;
      double v = 0.0;
      try {
        v = std::stod(src_.substr(pos_), &end);
      } catch (const std::exception&) {
        fail("malformed number");
      }
      tok_.kind = Token::Kind::number;
      tok_.number = v;
      pos_ += end;
      col_ += static_cast<int>(end);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_'))
        ++end;
      std::string word = src_.substr(pos_, end - pos_);
      col_ += static_cast<int>(end - pos_);
      pos_ = end;
      // "x" followed by digits is a variable reference; bare "x" stays an
      // identifier so dot(..., x) can name the whole feature vector.
      if (word.size() > 1 && word[0] == 'x' &&
          std::all_of(word.begin() + 1, word.end(),
                      [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
        tok_.kind = Token::Kind::var;
        tok_.var_index = static_cast<Index>(std::stoll(word.substr(1)));
        return;
      }
      tok_.kind = Token::Kind::ident;
      tok_.text = std::move(word);
      return;
    }
    if (c == '<' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
      tok_.kind = Token::Kind::punct;
      tok_.text = "<=";
      pos_ += 2;
      col_ += 2;
      return;
    }
    if (std::string("+-*/(),[]").find(c) != std::string::npos) {
      tok_.kind = Token::Kind::punct;
      tok_.text = std::string(1, c);
      ++pos_;
      ++col_;
      return;
    }
    fail(std::string("unexpected character \"") + c + "\"");
  }

  const std::string& src_;
  Index expected_dim_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

void collect_max_index(const ConstraintExpr& e, Index& max_index) {
  switch (e.op) {
    case Op::var:
      max_index = std::max(max_index, e.index + 1);
      break;
    case Op::dot:
      max_index = std::max(max_index, static_cast<Index>(e.coeffs.size()));
      break;
    case Op::constant:
      break;
    default:
      if (e.a) collect_max_index(*e.a, max_index);
      if (e.b) collect_max_index(*e.b, max_index);
      break;
  }
}

void print_number(std::ostream& os, double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  os << ss.str();
}

// Parenthesizes children conservatively: correctness of the round-trip
// matters, minimal parentheses do not.
void print_expr(std::ostream& os, const ConstraintExpr& e) {
  switch (e.op) {
    case Op::constant:
      if (e.value < 0) {
        os << "(";
        print_number(os, e.value);
        os << ")";
      } else {
        print_number(os, e.value);
      }
      break;
    case Op::var:
      os << "x" << e.index;
      break;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      const char* sym = e.op == Op::add   ? " + "
                        : e.op == Op::sub ? " - "
                        : e.op == Op::mul ? " * "
                                          : " / ";
      os << "(";
      print_expr(os, *e.a);
      os << sym;
      print_expr(os, *e.b);
      os << ")";
      break;
    }
    case Op::neg:
      os << "(-";
      print_expr(os, *e.a);
      os << ")";
      break;
    case Op::max:
    case Op::min:
      os << (e.op == Op::max ? "max(" : "min(");
      print_expr(os, *e.a);
      os << ", ";
      print_expr(os, *e.b);
      os << ")";
      break;
    case Op::dot:
      os << "dot([";
      for (size_t i = 0; i < e.coeffs.size(); ++i) {
        if (i) os << ", ";
        print_number(os, e.coeffs[i]);
      }
      os << "], x)";
      break;
  }
}

[[noreturn]] void domain_fail(Index constraint_index) {
  throw EvalDomainError("division by zero while evaluating constraint " +
                        std::to_string(constraint_index));
}

double eval_node(const ConstraintExpr& e, const Vector& x, Index ci) {
  switch (e.op) {
    case Op::constant:
      return e.value;
    case Op::var:
      if (e.index >= x.size())
        throw InputError("constraint " + std::to_string(ci) + " references x" +
                         std::to_string(e.index) + " but the input has dimension " +
                         std::to_string(x.size()));
      return x(e.index);
    case Op::add:
      return eval_node(*e.a, x, ci) + eval_node(*e.b, x, ci);
    case Op::sub:
      return eval_node(*e.a, x, ci) - eval_node(*e.b, x, ci);
    case Op::mul:
      return eval_node(*e.a, x, ci) * eval_node(*e.b, x, ci);
    case Op::div: {
      const double num = eval_node(*e.a, x, ci);
      const double den = eval_node(*e.b, x, ci);
      if (den == 0.0) domain_fail(ci);
      return num / den;
    }
    case Op::neg:
      return -eval_node(*e.a, x, ci);
    case Op::max:
      return std::max(eval_node(*e.a, x, ci), eval_node(*e.b, x, ci));
    case Op::min:
      return std::min(eval_node(*e.a, x, ci), eval_node(*e.b, x, ci));
    case Op::dot: {
      if (static_cast<Index>(e.coeffs.size()) != x.size())
        throw InputError("constraint " + std::to_string(ci) + " dot() expects dimension " +
                         std::to_string(e.coeffs.size()) + " but the input has dimension " +
                         std::to_string(x.size()));
      double s = 0.0;
      for (size_t i = 0; i < e.coeffs.size(); ++i) s += e.coeffs[i] * x(static_cast<Index>(i));
      return s;
    }
  }
  throw Error("unreachable expression op");
}

// Accumulates scale * d(node)/dx into g. Ties in max/min select the first
// argument, matching eval's std::max/std::min behavior (a >= b picks a for
// max; a <= b picks a for min).
void grad_node(const ConstraintExpr& e, const Vector& x, Index ci, double scale, Vector& g) {
  switch (e.op) {
    case Op::constant:
      return;
    case Op::var:
      g(e.index) += scale;
      return;
    case Op::add:
      grad_node(*e.a, x, ci, scale, g);
      grad_node(*e.b, x, ci, scale, g);
      return;
    case Op::sub:
      grad_node(*e.a, x, ci, scale, g);
      grad_node(*e.b, x, ci, -scale, g);
      return;
    case Op::mul: {
      const double va = eval_node(*e.a, x, ci);
      const double vb = eval_node(*e.b, x, ci);
      grad_node(*e.a, x, ci, scale * vb, g);
      grad_node(*e.b, x, ci, scale * va, g);
      return;
    }
    case Op::div: {
      const double va = eval_node(*e.a, x, ci);
      const double vb = eval_node(*e.b, x, ci);
      if (vb == 0.0) domain_fail(ci);
      grad_node(*e.a, x, ci, scale / vb, g);
      grad_node(*e.b, x, ci, -scale * va / (vb * vb), g);
      return;
    }
    case Op::neg:
      grad_node(*e.a, x, ci, -scale, g);
      return;
    case Op::max: {
      const double va = eval_node(*e.a, x, ci);
      const double vb = eval_node(*e.b, x, ci);
      grad_node(va >= vb ? *e.a : *e.b, x, ci, scale, g);
      return;
    }
    case Op::min: {
      const double va = eval_node(*e.a, x, ci);
      const double vb = eval_node(*e.b, x, ci);
      grad_node(va <= vb ? *e.a : *e.b, x, ci, scale, g);
      return;
    }
    case Op::dot:
      for (size_t i = 0; i < e.coeffs.size(); ++i)
        g(static_cast<Index>(i)) += scale * e.coeffs[i];
      return;
  }
  throw Error("unreachable expression op");
}

}  // namespace

ConstraintSet parse_constraints(const std::string& text, Index expected_dim) {
  return Parser(text, expected_dim).parse();
}

ConstraintSet load_constraints(const std::string& path, Index expected_dim) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open constraints file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_constraints(buf.str(), expected_dim);
}

Index min_dimension(const ConstraintSet& set) {
  Index m = 0;
  for (const ExprPtr& e : set.exprs) collect_max_index(*e, m);
  return m;
}

std::string print_constraints(const ConstraintSet& set) {
  std::ostringstream os;
  for (Index j = 0; j < set.size(); ++j) {
    print_expr(os, *set.exprs[static_cast<size_t>(j)]);
    os << " <= ";
    print_number(os, set.bounds(j));
    os << "\n";
  }
  return os.str();
}

double eval_expr(const ConstraintExpr& e, const Vector& x, Index constraint_index) {
  return eval_node(e, x, constraint_index);
}

Vector grad_expr(const ConstraintExpr& e, const Vector& x, Index constraint_index) {
  Vector g = Vector::Zero(x.size());
  grad_node(e, x, constraint_index, 1.0, g);
  return g;
}

Vector eval_constraints(const ConstraintSet& set, const Vector& x) {
  Vector v(set.size());
  for (Index j = 0; j < set.size(); ++j)
    v(j) = eval_node(*set.exprs[static_cast<size_t>(j)], x, j);
  return v;
}

Vector grad_constraint(const ConstraintSet& set, Index j, const Vector& x) {
  if (j < 0 || j >= set.size())
    throw ConfigError("constraint index " + std::to_string(j) + " out of range [0, " +
                      std::to_string(set.size()) + ")");
  return grad_expr(*set.exprs[static_cast<size_t>(j)], x, j);
}

bool satisfied(const ConstraintSet& set, const Vector& x) {
  const Vector v = eval_constraints(set, x);
  return (v.array() <= set.bounds.array()).all();
}

// ---------------------------------------------------------------------------
// Null-space learning

std::vector<LearnedConstraint> learn_nullspace_constraints(const Matrix& normals, double tol) {
  if (normals.rows() < 1) throw ConfigError("null-space learning needs at least one sample");
  if (tol <= 0.0) throw ConfigError("null-space tolerance must be positive");

  Eigen::JacobiSVD<Matrix> svd(normals, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const Index d = normals.cols();

  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * smax && sv(i) > 0.0) ++rank;

  std::vector<LearnedConstraint> out;
  const Matrix& V = svd.matrixV();
  for (Index k = rank; k < d; ++k) {
    LearnedConstraint lc;
    lc.direction = V.col(k);
    lc.direction.normalize();
    const Vector ips = normals * lc.direction;
    lc.ip_mean = ips.mean();
    lc.ip_std = std::sqrt((ips.array() - lc.ip_mean).square().sum() /
                          static_cast<double>(ips.size()));
    lc.threshold = lc.ip_mean + lc.ip_std;
    out.push_back(std::move(lc));
  }
  return out;
}

ExprPtr learned_to_expr(const LearnedConstraint& lc) {
  std::vector<double> coeffs(lc.direction.data(), lc.direction.data() + lc.direction.size());
  return ConstraintExpr::make_dot(std::move(coeffs));
}

void append_learned(ConstraintSet& set, const LearnedConstraint& lc) {
  set.exprs.push_back(learned_to_expr(lc));
  Vector b(set.bounds.size() + 1);
  b.head(set.bounds.size()) = set.bounds;
  b(b.size() - 1) = lc.threshold;
  set.bounds = std::move(b);
}

void append_learned_mirrored(ConstraintSet& set, const LearnedConstraint& lc) {
  append_learned(set, lc);
  set.exprs.push_back(ConstraintExpr::make_neg(learned_to_expr(lc)));
  Vector b(set.bounds.size() + 1);
  b.head(set.bounds.size()) = set.bounds;
  b(b.size() - 1) = lc.threshold;
  set.bounds = std::move(b);
}

bool aggregate_learned(const std::vector<LearnedConstraint>& lcs, const Matrix& normals,
                       LearnedConstraint& out) {
  if (lcs.empty()) return false;
  Vector sum = Vector::Zero(lcs.front().direction.size());
  for (const LearnedConstraint& lc : lcs) sum += lc.direction;
  const double norm = sum.norm();
  if (norm <= 1e-14) return false;
  out.direction = sum / norm;
  const Vector ips = normals * out.direction;
  out.ip_mean = ips.mean();
  out.ip_std =
      std::sqrt((ips.array() - out.ip_mean).square().sum() / static_cast<double>(ips.size()));
  out.threshold = out.ip_mean + out.ip_std;
  return true;
}

std::vector<RankNullityPoint> rank_nullity_curve(const Matrix& normals, Index step, double tol) {
  if (step < 1) throw ConfigError("rank/nullity step must be >= 1");
  std::vector<RankNullityPoint> out;
  for (Index n = step; n < normals.rows() + step; n += step) {
    const Index take = std::min(n, normals.rows());
    Eigen::JacobiSVD<Matrix> svd(normals.topRows(take));
    const Vector& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
      if (sv(i) > tol * smax && sv(i) > 0.0) ++rank;
    out.push_back({take, rank, normals.cols() - rank});
    if (take == normals.rows()) break;
  }
  return out;
}

}  // namespace capfield
