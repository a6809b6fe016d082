#include <doctest.h>

#include <cmath>
#include <string>

#include "capfield/classifier.hpp"
#include "capfield/constraints.hpp"
#include "capfield/rng.hpp"

using namespace capfield;

namespace {

// Rows spanning a 3-dimensional subspace of R^5; the learner must find the
// 2-dimensional orthogonal complement.
Matrix subspace_samples(Index n, Rng& rng) {
  Matrix basis(5, 3);
  for (Index r = 0; r < 5; ++r)
    for (Index c = 0; c < 3; ++c) basis(r, c) = normal01(rng);
  Matrix X(n, 5);
  for (Index i = 0; i < n; ++i) {
    Vector u(3);
    for (Index k = 0; k < 3; ++k) u(k) = normal01(rng);
    X.row(i) = (basis * u).transpose();
  }
  return X;
}

Matrix rank1_rows() {
  Matrix X(3, 2);
  X << 1, -1, 2, -2, 3, -3;
  return X;
}

}  // namespace

TEST_CASE("parsing splits bound and folds non-constant right sides") {
  const ConstraintSet a = parse_constraints("x0 + 2*x1 <= 3");
  REQUIRE(a.size() == 1);
  CHECK(a.bounds(0) == 3.0);
  CHECK(eval_constraints(a, (Vector(2) << 1, 1).finished())(0) == 3.0);

  const ConstraintSet b = parse_constraints("x0/x1 <= x2");
  REQUIRE(b.size() == 1);
  CHECK(b.bounds(0) == 0.0);
  CHECK(eval_constraints(b, (Vector(3) << 4, 2, 1).finished())(0) == 1.0);

  const ConstraintSet c = parse_constraints("max(x0, x1) <= 1");
  REQUIRE(c.size() == 1);
  CHECK(c.bounds(0) == 1.0);

  const ConstraintSet multi = parse_constraints(
      "# comment line\n"
      "x0 + x1 <= 0\n"
      "\n"
      "min(x0, 2) - x1 <= 5  # trailing comment\n");
  CHECK(multi.size() == 2);
}

TEST_CASE("evaluation follows plain arithmetic") {
  const ConstraintSet sum = parse_constraints("x0 + x1 <= 0");
  CHECK(eval_constraints(sum, (Vector(2) << 1, -1).finished())(0) == 0.0);

  const ConstraintSet ratio = parse_constraints("x0/x1 <= 10");
  CHECK(eval_constraints(ratio, (Vector(2) << 4, 2).finished())(0) == 2.0);

  const ConstraintSet mx = parse_constraints("max(x0, x1) <= 10");
  CHECK(eval_constraints(mx, (Vector(2) << 3, 1).finished())(0) == 3.0);
}

TEST_CASE("gradients follow hand calculus with first-argument ties") {
  const ConstraintSet ratio = parse_constraints("x0/x1 <= 10");
  const Vector g = grad_constraint(ratio, 0, (Vector(2) << 4, 2).finished());
  CHECK(g(0) == 0.5);
  CHECK(g(1) == -1.0);

  const ConstraintSet mx = parse_constraints("max(x0, x1) <= 10");
  const Vector ga = grad_constraint(mx, 0, (Vector(2) << 3, 1).finished());
  CHECK(ga(0) == 1.0);
  CHECK(ga(1) == 0.0);
  const Vector tie = grad_constraint(mx, 0, (Vector(2) << 2, 2).finished());
  CHECK(tie(0) == 1.0);
  CHECK(tie(1) == 0.0);

  const ConstraintSet mn = parse_constraints("min(x0, x1) <= 10");
  const Vector mtie = grad_constraint(mn, 0, (Vector(2) << 2, 2).finished());
  CHECK(mtie(0) == 1.0);
  CHECK(mtie(1) == 0.0);
}

TEST_CASE("division by zero is a domain error naming the constraint") {
  const ConstraintSet set = parse_constraints("x0 <= 1\nx0/x1 <= 1");
  CHECK_THROWS_WITH_AS(eval_constraints(set, (Vector(2) << 4, 0).finished()),
                       "division by zero while evaluating constraint 1", EvalDomainError);
  CHECK_THROWS_AS(grad_constraint(set, 1, (Vector(2) << 4, 0).finished()), EvalDomainError);
}

TEST_CASE("syntax errors carry line and column") {
  try {
    parse_constraints("x0 <= 1\nx0 + <= 2\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("column") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_constraints("x0 < 1"), ParseError);
  CHECK_THROWS_AS(parse_constraints("max(x0 x1) <= 1"), ParseError);
}

TEST_CASE("declared dimension rejects out-of-range variables at parse time") {
  CHECK_THROWS_AS(parse_constraints("x5 <= 1", 3), InputError);
  CHECK_THROWS_AS(parse_constraints("dot([1, 2], x) <= 1", 3), InputError);
  CHECK_NOTHROW(parse_constraints("x2 <= 1", 3));
}

TEST_CASE("printing and re-parsing preserves evaluation exactly") {
  const ConstraintSet set = parse_constraints(
      "x0 + 2*x1 - (x2 - 0.5) <= 3\n"
      "x0/x1 <= x2\n"
      "max(x0, min(x1, x2)) <= 1\n"
      "-x0 * -0.25 <= 0.5\n"
      "dot([0.5, -1.5, 2], x) <= 0.125\n");
  const ConstraintSet back = parse_constraints(print_constraints(set));
  REQUIRE(back.size() == set.size());
  CHECK(back.bounds == set.bounds);
  Rng rng(51);
  for (int t = 0; t < 100; ++t) {
    Vector x(3);
    for (Index i = 0; i < 3; ++i) x(i) = uniform(rng, -4, 4);
    if (std::abs(x(1)) < 1e-9) continue;  // keep the division defined
    CHECK(eval_constraints(back, x) == eval_constraints(set, x));
  }
}

TEST_CASE("constraint gradients match finite differences away from kinks") {
  const ConstraintSet set = parse_constraints(
      "x0 + 2*x1 - x2*x2 <= 3\n"
      "x0/x1 <= x2\n"
      "max(x0, min(x1, x2)) <= 1\n"
      "dot([0.5, -1.5, 2], x) <= 0\n");
  Rng rng(52);
  int checked = 0;
  while (checked < 100) {
    Vector x(3);
    for (Index i = 0; i < 3; ++i) x(i) = uniform(rng, -4, 4);
    // Stay clear of the div pole and the max/min ties.
    if (std::abs(x(1)) < 1e-2) continue;
    if (std::abs(x(0) - std::min(x(1), x(2))) < 1e-4 || std::abs(x(1) - x(2)) < 1e-4) continue;
    const Index j = static_cast<Index>(checked % set.size());
    const Vector analytic = grad_constraint(set, j, x);
    const Vector fd = finite_diff_grad(
        [&](const Vector& z) { return eval_constraints(set, z)(j); }, x);
    const double rel = (analytic - fd).lpNorm<Eigen::Infinity>() /
                       std::max(analytic.lpNorm<Eigen::Infinity>(), 1e-6);
    CHECK(rel <= 1e-4);
    ++checked;
  }
}

TEST_CASE("rank-deficient rows yield the forced null direction") {
  const auto lcs = learn_nullspace_constraints(rank1_rows());
  REQUIRE(lcs.size() == 1);
  const Vector& c = lcs[0].direction;
  CHECK(std::abs(c.norm() - 1.0) <= 1e-12);
  const double align = std::abs(c.dot((Vector(2) << 1, 1).finished()) / std::sqrt(2.0));
  CHECK(align == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((rank1_rows() * c).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(lcs[0].ip_mean) <= 1e-12);
  CHECK(lcs[0].threshold == lcs[0].ip_mean + lcs[0].ip_std);
}

TEST_CASE("full-rank rows yield no constraints") {
  CHECK(learn_nullspace_constraints(Matrix::Identity(2, 2)).empty());
}

TEST_CASE("samples on a subspace yield one constraint per null direction") {
  Rng rng(77);
  const Matrix X = subspace_samples(50, rng);
  const auto lcs = learn_nullspace_constraints(X);
  REQUIRE(lcs.size() == 2);
  const double xmax = X.cwiseAbs().maxCoeff();
  for (const LearnedConstraint& lc : lcs) {
    CHECK(std::abs(lc.direction.norm() - 1.0) <= 1e-12);
    CHECK((X * lc.direction).cwiseAbs().maxCoeff() <= 1e-8 * xmax);
    CHECK(lc.threshold == lc.ip_mean + lc.ip_std);
  }
  CHECK(std::abs(lcs[0].direction.dot(lcs[1].direction)) <= 1e-10);
}

TEST_CASE("learned constraints become dot-expression rows") {
  LearnedConstraint lc;
  lc.direction = (Vector(2) << 1, 0).finished();
  lc.ip_mean = 0.01;
  lc.ip_std = 0.02;
  lc.threshold = lc.ip_mean + lc.ip_std;
  ConstraintSet set{{}, Vector(0)};
  append_learned(set, lc);
  REQUIRE(set.size() == 1);
  CHECK(set.bounds(0) == lc.threshold);
  CHECK(eval_constraints(set, (Vector(2) << 0.5, 9).finished())(0) == 0.5);
  CHECK(satisfied(set, (Vector(2) << 0.02, 0).finished()));
  CHECK(!satisfied(set, (Vector(2) << 0.04, 0).finished()));

  LearnedConstraint zero;
  zero.direction = (Vector(2) << 0.6, 0.8).finished();
  ConstraintSet zset{{}, Vector(0)};
  append_learned(zset, zero);
  CHECK(zset.bounds(0) == 0.0);
  CHECK(eval_constraints(zset, (Vector(2) << 1, 1).finished())(0) ==
        doctest::Approx(1.4).epsilon(1e-15));
}

TEST_CASE("a shifted anomaly scores far above the learned threshold") {
  const auto lcs = learn_nullspace_constraints(rank1_rows());
  REQUIRE(lcs.size() == 1);
  const Vector anomaly = (Vector(2) << 1, 1).finished();
  CHECK(std::abs(anomaly.dot(lcs[0].direction)) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(anomaly.dot(lcs[0].direction)) > 100.0 * std::abs(lcs[0].threshold));
}

TEST_CASE("mirrored emission adds the negated row with the same bound") {
  LearnedConstraint lc;
  lc.direction = (Vector(2) << 1, 0).finished();
  lc.ip_mean = 0.1;
  lc.ip_std = 0.05;
  lc.threshold = 0.15;
  ConstraintSet set{{}, Vector(0)};
  append_learned_mirrored(set, lc);
  REQUIRE(set.size() == 2);
  const Vector vals = eval_constraints(set, (Vector(2) << 0.4, 2).finished());
  CHECK(vals(0) == 0.4);
  CHECK(vals(1) == -0.4);
  CHECK(set.bounds(0) == 0.15);
  CHECK(set.bounds(1) == 0.15);
  CHECK(!satisfied(set, (Vector(2) << -0.2, 0).finished()));  // lower bound now binds
  CHECK(satisfied(set, (Vector(2) << 0.1, 0).finished()));
}

TEST_CASE("aggregate direction is the normalized basis sum") {
  Rng rng(78);
  const Matrix X = subspace_samples(40, rng);
  const auto lcs = learn_nullspace_constraints(X);
  REQUIRE(lcs.size() == 2);
  LearnedConstraint agg;
  REQUIRE(aggregate_learned(lcs, X, agg));
  CHECK(std::abs(agg.direction.norm() - 1.0) <= 1e-12);
  const Vector expected =
      (lcs[0].direction + lcs[1].direction).normalized();
  CHECK((agg.direction - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(agg.threshold == agg.ip_mean + agg.ip_std);

  // Directions canceling to zero leave nothing to aggregate.
  LearnedConstraint a, b;
  a.direction = (Vector(2) << 1, 0).finished();
  b.direction = (Vector(2) << -1, 0).finished();
  LearnedConstraint out;
  CHECK(!aggregate_learned({a, b}, Matrix::Identity(2, 2), out));
}

TEST_CASE("rank and nullity track growing sample prefixes") {
  Rng rng(79);
  const auto curve = rank_nullity_curve(subspace_samples(50, rng), 3);
  REQUIRE(!curve.empty());
  CHECK(curve.back().sample_count == 50);
  for (const RankNullityPoint& p : curve) {
    CHECK(p.rank + p.nullity == 5);
    CHECK(p.nullity == 2);  // three or more generic samples pin the rank at 3
  }

  const auto id = rank_nullity_curve(Matrix::Identity(2, 2), 1);
  REQUIRE(id.size() == 2);
  CHECK(id[0].nullity == 1);
  CHECK(id[1].sample_count == 2);
  CHECK(id[1].nullity == 0);

  Matrix single(1, 3);
  single << 1, 0, 0;
  const auto one = rank_nullity_curve(single, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].rank == 1);
  CHECK(one[0].nullity == 2);
}

TEST_CASE("min_dimension reports the highest referenced variable") {
  CHECK(min_dimension(parse_constraints("x3 <= 1")) == 4);
  CHECK(min_dimension(parse_constraints("dot([1, 2, 3], x) <= 0")) == 3);
  CHECK(min_dimension(parse_constraints("1 <= 2")) == 0);
  CHECK(min_dimension(ConstraintSet{{}, Vector(0)}) == 0);
}

TEST_CASE("learning rejects degenerate inputs") {
  CHECK_THROWS_AS(learn_nullspace_constraints(Matrix(0, 3)), ConfigError);
  CHECK_THROWS_AS(learn_nullspace_constraints(Matrix::Identity(2, 2), 0.0), ConfigError);
  CHECK_THROWS_AS(rank_nullity_curve(Matrix::Identity(2, 2), 0), ConfigError);
}
