#pragma once

// Independent reference implementations used to verify the library: the
// explicit-slack form of the augmented Lagrangian, a small-QP KKT solver
// with a grid cross-check, a principal-angle metric, and a generator of
// random solver states kept away from nondifferentiable kinks.

#include <optional>
#include <vector>

#include "capfield/classifier.hpp"
#include "capfield/common.hpp"
#include "capfield/constraints.hpp"
#include "capfield/rng.hpp"
#include "capfield/solver.hpp"

namespace capfield::testing {

// Augmented Lagrangian with explicit non-negative slack variables:
//
//   L = 0.5*|delta|^2
//     + sum_ij lambda_ij * (g_j(x_i+delta) + phi_ij - b_j)
//     + sum_i  mu_i      * (y_i*f(x_i+delta) + theta_i - c)
//     + 0.5 * sum_ij rho_ij    * (g_j(x_i+delta) + phi_ij - b_j)^2
//     + 0.5 * sum_i  varrho_i  * (y_i*f(x_i+delta) + theta_i - c)^2
//
// evaluated at the slack minimizers
//   phi_ij  = max{0, -lambda_ij/rho_ij - (g_j(x_i+delta) - b_j)}
//   theta_i = max{0, -mu_i/varrho_i  - (y_i*f(x_i+delta) - c)}.
double explicit_slack_alf(const std::vector<Example>& X, const Classifier& clf,
                          const ConstraintSet& cs, const Vector& delta,
                          const DualPenaltyState& state, const SolverConfig& cfg);

// One randomly drawn solver state for oracle comparisons.
struct RandomState {
  std::vector<Example> X;
  Classifier clf;
  ConstraintSet cs;
  Vector delta;
  DualPenaltyState state;
  SolverConfig cfg;
};

struct RandomStateOptions {
  Index q = 1;                  // number of feature constraints (0, 1, or 3)
  bool feedforward = false;     // linear otherwise
  Index n = 2;                  // samples
  Index d = 4;                  // feature dimension
  double kink_margin = 1e-3;    // minimum distance from any max/ReLU switch
  bool random_duals = true;     // duals in [0, 2]; false keeps them in [0, 1e-4]
};

// Draws states until every clamp argument pair, ReLU pre-activation,
// max/min argument pair, and divisor clears the kink margin, so both the
// state and its neighborhood are smooth for finite differencing.
RandomState random_smooth_state(Rng& rng, const RandomStateOptions& opts);

// Minimum-norm solution of
//   min 0.5*|delta|^2  s.t.  w.(x+delta) + b <= c,  a.(x+delta) <= b1
// in two dimensions, by enumerating the active sets {f} and {f, g} with
// multiplier sign checks. nullopt when no candidate is valid.
std::optional<Vector> kkt_min_norm_2d(const Vector& w, double b, const Vector& x, double c,
                                      const Vector& a, double b1);

// Brute-force cross-check: the smallest-norm feasible point on a regular
// grid over [-reach, reach]^2 (in delta space). Returns the grid minimizer
// norm, or infinity when no grid point is feasible.
double grid_min_norm_2d(const Vector& w, double b, const Vector& x, double c, const Vector& a,
                        double b1, double reach, int points_per_axis);

// Largest principal angle (radians) between the column spans of A and B.
// Requires equal column counts; columns need not be orthonormal.
double principal_angle(const Matrix& A, const Matrix& B);

}  // namespace capfield::testing
