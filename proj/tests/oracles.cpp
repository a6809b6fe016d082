#include "oracles.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace capfield::testing {

double explicit_slack_alf(const std::vector<Example>& X, const Classifier& clf,
                          const ConstraintSet& cs, const Vector& delta,
                          const DualPenaltyState& state, const SolverConfig& cfg) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  double L = 0.5 * delta.squaredNorm();
  for (Index i = 0; i < n; ++i) {
    const Vector z = X[static_cast<size_t>(i)].features + delta;
    const Vector g = eval_constraints(cs, z);
    for (Index j = 0; j < q; ++j) {
      const double res = g(j) - cs.bounds(j);
      const double phi = std::max(0.0, -state.lambda(i, j) / state.rho(i, j) - res);
      const double r = res + phi;
      L += state.lambda(i, j) * r + 0.5 * state.rho(i, j) * r * r;
    }
    const double yf = X[static_cast<size_t>(i)].label * classify_value(clf, z);
    const double res = yf - cfg.misclass_threshold;
    const double theta = std::max(0.0, -state.mu(i) / state.varrho(i) - res);
    const double r = res + theta;
    L += state.mu(i) * r + 0.5 * state.varrho(i) * r * r;
  }
  return L;
}

namespace {

// One constraint drawn from a small family exercising every node type.
// Divisors are built as 0.5 + x_k*x_k so they are smooth and bounded away
// from zero on all of R^d.
ExprPtr random_constraint_expr(Rng& rng, Index d) {
  using CE = ConstraintExpr;
  const auto var = [&](Index i) { return CE::make_var(i); };
  const Index i = static_cast<Index>(uniform01(rng) * d) % d;
  const Index j = static_cast<Index>(uniform01(rng) * d) % d;
  const Index k = static_cast<Index>(uniform01(rng) * d) % d;
  switch (static_cast<int>(uniform01(rng) * 5) % 5) {
    case 0: {  // random linear functional
      std::vector<double> coeffs(static_cast<size_t>(d));
      for (double& c : coeffs) c = uniform(rng, -2.0, 2.0);
      return CE::make_dot(std::move(coeffs));
    }
    case 1:  // safe ratio
      return CE::make_binary(
          CE::Op::div, var(i),
          CE::make_binary(CE::Op::add, CE::make_constant(0.5),
                          CE::make_binary(CE::Op::mul, var(j), var(j))));
    case 2:  // max of two coordinates
      return CE::make_binary(CE::Op::max, var(i), var(j));
    case 3:  // affine three-term combination
      return CE::make_binary(
          CE::Op::sub,
          CE::make_binary(CE::Op::add, var(i),
                          CE::make_binary(CE::Op::mul, CE::make_constant(2.0), var(j))),
          CE::make_neg(var(k)));
    default:  // min with a product
      return CE::make_binary(CE::Op::min, CE::make_binary(CE::Op::mul, var(i), var(j)),
                             var(k));
  }
}

// Smallest |a - b| over the arguments of every max/min node and smallest
// |divisor| over every div node, evaluated at x.
double tree_kink_margin(const ConstraintExpr& e, const Vector& x) {
  using Op = ConstraintExpr::Op;
  double m = std::numeric_limits<double>::infinity();
  if (e.a) m = std::min(m, tree_kink_margin(*e.a, x));
  if (e.b) m = std::min(m, tree_kink_margin(*e.b, x));
  if (e.op == Op::max || e.op == Op::min)
    m = std::min(m, std::abs(eval_expr(*e.a, x, 0) - eval_expr(*e.b, x, 0)));
  if (e.op == Op::div) m = std::min(m, std::abs(eval_expr(*e.b, x, 0)));
  return m;
}

// Smallest |pre-activation| across hidden layers at input x; infinity for
// linear models.
double relu_margin(const Classifier& clf, const Vector& x) {
  double m = std::numeric_limits<double>::infinity();
  Vector h = x;
  for (size_t l = 0; l + 1 < clf.layers.size(); ++l) {
    h = clf.layers[l].weights * h + clf.layers[l].bias;
    m = std::min(m, h.cwiseAbs().minCoeff());
    h = h.cwiseMax(0.0);
  }
  return m;
}

Classifier random_classifier(Rng& rng, Index d, bool feedforward) {
  if (!feedforward) {
    Vector w(d);
    for (Index i = 0; i < d; ++i) w(i) = uniform(rng, -2.0, 2.0);
    if (w.norm() < 0.3) w(0) += 1.0;
    return make_linear(w, uniform(rng, -1.0, 1.0));
  }
  const Index width = 4;
  std::vector<Layer> layers(2);
  layers[0].weights.resize(width, d);
  for (Index r = 0; r < width; ++r)
    for (Index c = 0; c < d; ++c) layers[0].weights(r, c) = uniform(rng, -1.5, 1.5);
  layers[0].bias.resize(width);
  for (Index r = 0; r < width; ++r) layers[0].bias(r) = uniform(rng, -0.5, 0.5);
  layers[1].weights.resize(1, width);
  for (Index c = 0; c < width; ++c) layers[1].weights(0, c) = uniform(rng, -1.5, 1.5);
  layers[1].bias = Vector::Constant(1, uniform(rng, -0.5, 0.5));
  return make_feedforward(std::move(layers));
}

}  // namespace

RandomState random_smooth_state(Rng& rng, const RandomStateOptions& opts) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    RandomState s;
    s.clf = random_classifier(rng, opts.d, opts.feedforward);

    s.cs.exprs.clear();
    s.cs.bounds.resize(opts.q);
    for (Index j = 0; j < opts.q; ++j) {
      s.cs.exprs.push_back(random_constraint_expr(rng, opts.d));
      s.cs.bounds(j) = uniform(rng, -1.0, 1.0);
    }

    s.X.clear();
    for (Index i = 0; i < opts.n; ++i) {
      Vector x(opts.d);
      for (Index k = 0; k < opts.d; ++k) x(k) = uniform(rng, -2.0, 2.0);
      s.X.push_back({std::move(x), uniform01(rng) < 0.5 ? +1 : -1});
    }

    s.delta.resize(opts.d);
    for (Index k = 0; k < opts.d; ++k) s.delta(k) = uniform(rng, -0.5, 0.5);

    s.state.lambda.resize(opts.n, opts.q);
    s.state.rho.resize(opts.n, opts.q);
    s.state.mu.resize(opts.n);
    s.state.varrho.resize(opts.n);
    const double dual_hi = opts.random_duals ? 2.0 : 1e-4;
    for (Index i = 0; i < opts.n; ++i) {
      for (Index j = 0; j < opts.q; ++j) {
        s.state.lambda(i, j) = uniform(rng, 0.0, dual_hi);
        s.state.rho(i, j) = uniform(rng, 1.0, 8.0);
      }
      s.state.mu(i) = uniform(rng, 0.0, dual_hi);
      s.state.varrho(i) = uniform(rng, 1.0, 8.0);
    }

    s.cfg.misclass_threshold = -uniform(rng, 1e-4, 0.5);

    // Reject states within the margin of any nondifferentiable switch.
    bool smooth = true;
    for (Index i = 0; i < opts.n && smooth; ++i) {
      const Vector z = s.X[static_cast<size_t>(i)].features + s.delta;
      if (relu_margin(s.clf, z) < opts.kink_margin) smooth = false;
      for (Index j = 0; j < opts.q && smooth; ++j) {
        const ConstraintExpr& e = *s.cs.exprs[static_cast<size_t>(j)];
        if (tree_kink_margin(e, z) < opts.kink_margin) smooth = false;
        const double res = eval_expr(e, z, j) - s.cs.bounds(j);
        const double clamp = -s.state.lambda(i, j) / s.state.rho(i, j);
        if (std::abs(res - clamp) < opts.kink_margin) smooth = false;
      }
      if (!smooth) break;
      const double yf = s.X[static_cast<size_t>(i)].label * classify_value(s.clf, z);
      const double res = yf - s.cfg.misclass_threshold;
      const double clamp = -s.state.mu(i) / s.state.varrho(i);
      if (std::abs(res - clamp) < opts.kink_margin) smooth = false;
    }
    if (smooth) return s;
  }
  throw Error("failed to draw a smooth random state in 1000 attempts");
}

std::optional<Vector> kkt_min_norm_2d(const Vector& w, double b, const Vector& x, double c,
                                      const Vector& a, double b1) {
  if (w.size() != 2 || x.size() != 2 || a.size() != 2)
    throw ConfigError("kkt oracle is two-dimensional");
  const double fx = w.dot(x) + b;
  if (fx <= c) return Vector::Zero(2);  // already past the threshold

  std::optional<Vector> best;
  const auto consider = [&](const Vector& delta) {
    if (w.dot(x + delta) + b > c + 1e-9) return;
    if (a.dot(x + delta) > b1 + 1e-9) return;
    if (!best || delta.norm() < best->norm()) best = delta;
  };

  // Active set {f}: projection onto the classifier boundary shifted to c.
  if (w.squaredNorm() > 0.0) consider(-(fx - c) / w.squaredNorm() * w);

  // Active set {f, g}: both constraints tight, multipliers must be >= 0.
  Matrix A(2, 2);
  A.row(0) = w.transpose();
  A.row(1) = a.transpose();
  const double det = A.determinant();
  if (std::abs(det) > 1e-12) {
    Vector rhs(2);
    rhs << c - fx, b1 - a.dot(x);
    const Vector delta = A.partialPivLu().solve(rhs);
    Matrix G(2, 2);
    G.col(0) = w;
    G.col(1) = a;
    const Vector nu = G.partialPivLu().solve(-delta);
    if (nu(0) >= -1e-9 && nu(1) >= -1e-9) consider(delta);
  }
  return best;
}

double grid_min_norm_2d(const Vector& w, double b, const Vector& x, double c, const Vector& a,
                        double b1, double reach, int points_per_axis) {
  double best = std::numeric_limits<double>::infinity();
  const double step = 2.0 * reach / (points_per_axis - 1);
  Vector delta(2);
  for (int i = 0; i < points_per_axis; ++i) {
    delta(0) = -reach + step * i;
    for (int j = 0; j < points_per_axis; ++j) {
      delta(1) = -reach + step * j;
      if (w.dot(x + delta) + b > c) continue;
      if (a.dot(x + delta) > b1) continue;
      best = std::min(best, delta.norm());
    }
  }
  return best;
}

double principal_angle(const Matrix& A, const Matrix& B) {
  if (A.cols() != B.cols() || A.rows() != B.rows())
    throw ConfigError("principal angle needs equal shapes");
  if (A.cols() == 0) return 0.0;
  const Matrix Qa = Eigen::HouseholderQR<Matrix>(A).householderQ() *
                    Matrix::Identity(A.rows(), A.cols());
  const Matrix Qb = Eigen::HouseholderQR<Matrix>(B).householderQ() *
                    Matrix::Identity(B.rows(), B.cols());
  Eigen::JacobiSVD<Matrix> svd(Qa.transpose() * Qb);
  const double smin = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smin, -1.0, 1.0));
}

}  // namespace capfield::testing
