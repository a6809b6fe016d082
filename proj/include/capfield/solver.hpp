#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capfield/classifier.hpp"
#include "capfield/common.hpp"
#include "capfield/constraints.hpp"

namespace capfield {

enum class Optimizer { plain_gd, adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SolverConfig {
  int max_iter = 600;
  double learning_rate = 0.01;
  double penalty_scale = 2.0;       // tau, multiplicative growth on violation
  int penalty_update_every = 10;    // r, iterations between penalty updates
  double penalty_cap = 1e4;
  double misclass_threshold = -1e-4;  // c, must stay negative
  Optimizer optimizer = Optimizer::adam;
  AdamParams adam;
  std::optional<double> projection_radius;  // epsilon; unset disables projection
  std::uint64_t seed = 0;
  bool ungated_penalty_update = false;  // scale all penalties, ignoring violation gates
  int workers = 1;                      // 0 selects hardware concurrency

  // Throws ConfigError on violated bounds; the max_iter message is relied
  // on by the CLI contract.
  void validate() const;
};

// Multipliers and penalties for the n-sample, q-constraint problem. The
// individual attack is the n = 1 case of the same state.
struct DualPenaltyState {
  Matrix lambda;  // n x q multipliers for the feature constraints
  Vector mu;      // n multipliers for the misclassification constraint
  Matrix rho;     // n x q penalties, in [1, cap], non-decreasing
  Vector varrho;  // n penalties, same regime
};

struct SampleStatus {
  bool misclassified = false;
  bool constraints_ok = false;
};

struct AttackResult {
  Vector delta_best;
  std::vector<std::pair<int, double>> asr_trace;  // (iteration, asr), iteration 0 included
  int best_iteration = 0;
  double delta_norm = 0.0;
  std::vector<SampleStatus> per_sample_status;  // evaluated at delta_best
  double wall_time_seconds = 0.0;
  std::vector<std::string> warnings;
};

// Clamped residual of one feature constraint: max{g(x+delta) - b, -lambda/rho}.
double zeta(double g_val_minus_b, double lambda, double rho);

// Clamped residual of the misclassification constraint:
// max{y*f(x+delta) - c, -mu/varrho}.
double xi(double yf_minus_c, double mu, double varrho);

// Fresh state: multipliers drawn uniformly from [0, 1e-4] (lambda row by
// row, then mu), penalties at 1.
DualPenaltyState init_state(Index n, Index q, std::uint64_t seed);

// Slack-eliminated augmented Lagrangian:
//   0.5*|delta|^2 + sum lambda*zeta + sum mu*xi
//   + 0.5*sum rho*zeta^2 + 0.5*sum varrho*xi^2.
double alf_value(const std::vector<Example>& X, const Classifier& clf,
                 const ConstraintSet& cs, const Vector& delta,
                 const DualPenaltyState& state, const SolverConfig& cfg);

// Closed-form gradient of alf_value in delta. Terms whose clamp selected
// the multiplier branch contribute nothing (their coefficient lambda +
// rho*zeta vanishes at the switch, so the choice at a tie is immaterial).
Vector alf_primal_grad(const std::vector<Example>& X, const Classifier& clf,
                       const ConstraintSet& cs, const Vector& delta,
                       const DualPenaltyState& state, const SolverConfig& cfg);

// Gradients of alf_value in the multipliers: exactly the zeta matrix and
// xi vector at the current point.
std::pair<Matrix, Vector> dual_grads(const std::vector<Example>& X, const Classifier& clf,
                                     const ConstraintSet& cs, const Vector& delta,
                                     const DualPenaltyState& state, const SolverConfig& cfg);

// Ascent step on the multipliers: lambda += rho*zeta, mu += varrho*xi,
// clamped at zero so rounding never leaves a negative multiplier.
DualPenaltyState dual_update(const DualPenaltyState& state, const Matrix& zeta_mat,
                             const Vector& xi_vec);

// Scales penalties of still-violated constraints (and still-classified
// samples) by tau, capped. With cfg.ungated_penalty_update every entry
// scales unconditionally.
DualPenaltyState penalty_update(const DualPenaltyState& state, const std::vector<Example>& X,
                                const Classifier& clf, const ConstraintSet& cs,
                                const Vector& delta, const SolverConfig& cfg);

// Euclidean projection onto the ball of radius eps. Reporting-only: solver
// state is never projected.
Vector project_l2(const Vector& delta, double eps);

// Fraction of samples both strictly misclassified (y*f < 0) and feasible.
// Total: a constraint domain error marks that sample failed.
double asr(const Vector& delta, const std::vector<Example>& X, const Classifier& clf,
           const ConstraintSet& cs);

// Diagnostic hook invoked once after initialization (k = 0) and once at
// the end of every iteration, after the dual and penalty updates. Observers
// must not mutate anything the solve reads.
using IterationObserver =
    std::function<void(int k, const Vector& delta, const DualPenaltyState& state)>;

// Universal attack: one perturbation against all of X (shared label).
AttackResult capx_universal(const std::vector<Example>& X, const Classifier& clf,
                            const ConstraintSet& cs, const SolverConfig& cfg,
                            const IterationObserver& observer = nullptr);

// Individual attack: the n = 1 specialization, bit-identical to
// capx_universal on a singleton set.
AttackResult capx_individual(const Example& example, const Classifier& clf,
                             const ConstraintSet& cs, const SolverConfig& cfg,
                             const IterationObserver& observer = nullptr);

}  // namespace capfield
