#include "capfield/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "capfield/parallel.hpp"
#include "capfield/rng.hpp"

namespace capfield {

void SolverConfig::validate() const {
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(penalty_scale > 1.0)) throw ConfigError("penalty_scale must be > 1");
  if (penalty_update_every < 1 || penalty_update_every > max_iter)
    throw ConfigError("penalty_update_every must lie in [1, max_iter]");
  if (!(penalty_cap > 0.0)) throw ConfigError("penalty_cap must be positive");
  if (!(misclass_threshold < 0.0)) throw ConfigError("misclass_threshold must be negative");
  if (projection_radius && !(*projection_radius > 0.0))
    throw ConfigError("projection_radius must be positive");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

double zeta(double g_val_minus_b, double lambda, double rho) {
  if (!(rho > 0.0)) throw ConfigError("zeta requires a positive penalty");
  return std::max(g_val_minus_b, -lambda / rho);
}

double xi(double yf_minus_c, double mu, double varrho) {
  if (!(varrho > 0.0)) throw ConfigError("xi requires a positive penalty");
  return std::max(yf_minus_c, -mu / varrho);
}

DualPenaltyState init_state(Index n, Index q, std::uint64_t seed) {
  if (n < 1) throw ConfigError("state needs at least one sample");
  if (q < 0) throw ConfigError("negative constraint count");
  Rng rng(child_seed(seed, "dual-init"));
  DualPenaltyState s;
  s.lambda.resize(n, q);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < q; ++j) s.lambda(i, j) = uniform(rng, 0.0, 1e-4);
  s.mu.resize(n);
  for (Index i = 0; i < n; ++i) s.mu(i) = uniform(rng, 0.0, 1e-4);
  s.rho = Matrix::Ones(n, q);
  s.varrho = Vector::Ones(n);
  return s;
}

namespace {

// Everything the ALF and its gradients need at one perturbation, gathered
// per sample so the expensive passes parallelize over samples while all
// reductions stay serial and fixed-order.
struct SampleEval {
  double f = 0.0;  // f(x_i + delta)
  Vector f_grad;   // gradient of f at x_i + delta
  Vector g;        // g_j(x_i + delta), length q
  Matrix g_grads;  // d x q, column j = gradient of g_j
};

std::vector<SampleEval> evaluate_all(const std::vector<Example>& X, const Classifier& clf,
                                     const ConstraintSet& cs, const Vector& delta,
                                     int workers, bool with_grads) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  std::vector<SampleEval> evals(static_cast<size_t>(n));
  parallel_for(n, workers, [&](Index i) {
    const Vector z = X[static_cast<size_t>(i)].features + delta;
    SampleEval& e = evals[static_cast<size_t>(i)];
    e.f = classify_value(clf, z);
    if (with_grads) e.f_grad = classify_grad(clf, z);
    e.g = eval_constraints(cs, z);
    if (with_grads) {
      e.g_grads.resize(delta.size(), q);
      for (Index j = 0; j < q; ++j) e.g_grads.col(j) = grad_constraint(cs, j, z);
    }
  });
  return evals;
}

void check_state_shapes(const std::vector<Example>& X, const ConstraintSet& cs,
                        const DualPenaltyState& state) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  if (state.lambda.rows() != n || state.lambda.cols() != q || state.mu.size() != n ||
      state.rho.rows() != n || state.rho.cols() != q || state.varrho.size() != n)
    throw ConfigError("dual/penalty state shape does not match n=" + std::to_string(n) +
                      ", q=" + std::to_string(q));
  if ((state.rho.size() > 0 && !(state.rho.minCoeff() > 0.0)) || !(state.varrho.minCoeff() > 0.0))
    throw ConfigError("penalties must be positive");
}

double alf_from_evals(const std::vector<SampleEval>& evals, const std::vector<Example>& X,
                      const ConstraintSet& cs, const Vector& delta,
                      const DualPenaltyState& state, const SolverConfig& cfg) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  double L = 0.5 * delta.squaredNorm();
  for (Index i = 0; i < n; ++i) {
    const SampleEval& e = evals[static_cast<size_t>(i)];
    for (Index j = 0; j < q; ++j) {
      const double z = zeta(e.g(j) - cs.bounds(j), state.lambda(i, j), state.rho(i, j));
      L += state.lambda(i, j) * z + 0.5 * state.rho(i, j) * z * z;
    }
    const double yf = X[static_cast<size_t>(i)].label * e.f;
    const double x = xi(yf - cfg.misclass_threshold, state.mu(i), state.varrho(i));
    L += state.mu(i) * x + 0.5 * state.varrho(i) * x * x;
  }
  return L;
}

Vector primal_grad_from_evals(const std::vector<SampleEval>& evals,
                              const std::vector<Example>& X, const ConstraintSet& cs,
                              const Vector& delta, const DualPenaltyState& state,
                              const SolverConfig& cfg) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  Vector grad = delta;
  for (Index i = 0; i < n; ++i) {
    const SampleEval& e = evals[static_cast<size_t>(i)];
    for (Index j = 0; j < q; ++j) {
      const double residual = e.g(j) - cs.bounds(j);
      const double clamp = -state.lambda(i, j) / state.rho(i, j);
      // Constraint branch active. At residual == clamp the coefficient
      // lambda + rho*zeta is exactly 0, so the branch choice is harmless.
      if (residual >= clamp) {
        const double coeff = state.lambda(i, j) + state.rho(i, j) * residual;
        grad.noalias() += coeff * e.g_grads.col(j);
      }
    }
    const double y = static_cast<double>(X[static_cast<size_t>(i)].label);
    const double residual = y * e.f - cfg.misclass_threshold;
    const double clamp = -state.mu(i) / state.varrho(i);
    if (residual >= clamp) {
      const double coeff = state.mu(i) + state.varrho(i) * residual;
      grad.noalias() += coeff * y * e.f_grad;
    }
  }
  return grad;
}

std::pair<Matrix, Vector> dual_grads_from_evals(const std::vector<SampleEval>& evals,
                                                const std::vector<Example>& X,
                                                const ConstraintSet& cs,
                                                const DualPenaltyState& state,
                                                const SolverConfig& cfg) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  Matrix Z(n, q);
  Vector Xi(n);
  for (Index i = 0; i < n; ++i) {
    const SampleEval& e = evals[static_cast<size_t>(i)];
    for (Index j = 0; j < q; ++j)
      Z(i, j) = zeta(e.g(j) - cs.bounds(j), state.lambda(i, j), state.rho(i, j));
    const double yf = X[static_cast<size_t>(i)].label * e.f;
    Xi(i) = xi(yf - cfg.misclass_threshold, state.mu(i), state.varrho(i));
  }
  return {std::move(Z), std::move(Xi)};
}

DualPenaltyState penalty_from_evals(const std::vector<SampleEval>& evals,
                                    const std::vector<Example>& X, const ConstraintSet& cs,
                                    const DualPenaltyState& state, const SolverConfig& cfg) {
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  DualPenaltyState out = state;
  for (Index i = 0; i < n; ++i) {
    const SampleEval& e = evals[static_cast<size_t>(i)];
    for (Index j = 0; j < q; ++j) {
      const bool violated = e.g(j) > cs.bounds(j);
      if (cfg.ungated_penalty_update || violated)
        out.rho(i, j) = std::min(cfg.penalty_cap, cfg.penalty_scale * out.rho(i, j));
    }
    const double yf = X[static_cast<size_t>(i)].label * e.f;
    const bool unmisclassified = yf > cfg.misclass_threshold;
    if (cfg.ungated_penalty_update || unmisclassified)
      out.varrho(i) = std::min(cfg.penalty_cap, cfg.penalty_scale * out.varrho(i));
  }
  return out;
}

}  // namespace

double alf_value(const std::vector<Example>& X, const Classifier& clf, const ConstraintSet& cs,
                 const Vector& delta, const DualPenaltyState& state, const SolverConfig& cfg) {
  check_state_shapes(X, cs, state);
  const auto evals = evaluate_all(X, clf, cs, delta, cfg.workers, /*with_grads=*/false);
  return alf_from_evals(evals, X, cs, delta, state, cfg);
}

Vector alf_primal_grad(const std::vector<Example>& X, const Classifier& clf,
                       const ConstraintSet& cs, const Vector& delta,
                       const DualPenaltyState& state, const SolverConfig& cfg) {
  check_state_shapes(X, cs, state);
  const auto evals = evaluate_all(X, clf, cs, delta, cfg.workers, /*with_grads=*/true);
  return primal_grad_from_evals(evals, X, cs, delta, state, cfg);
}

std::pair<Matrix, Vector> dual_grads(const std::vector<Example>& X, const Classifier& clf,
                                     const ConstraintSet& cs, const Vector& delta,
                                     const DualPenaltyState& state, const SolverConfig& cfg) {
  check_state_shapes(X, cs, state);
  const auto evals = evaluate_all(X, clf, cs, delta, cfg.workers, /*with_grads=*/false);
  return dual_grads_from_evals(evals, X, cs, state, cfg);
}

DualPenaltyState dual_update(const DualPenaltyState& state, const Matrix& zeta_mat,
                             const Vector& xi_vec) {
  if (zeta_mat.rows() != state.lambda.rows() || zeta_mat.cols() != state.lambda.cols() ||
      xi_vec.size() != state.mu.size())
    throw ConfigError("dual update shapes do not match the state");
  DualPenaltyState out = state;
  // lambda + rho*zeta >= 0 holds algebraically (zeta >= -lambda/rho); the
  // max guards the roundoff case and pins the inactive branch at exact 0.
  out.lambda = (state.lambda.array() + state.rho.array() * zeta_mat.array()).max(0.0).matrix();
  out.mu = (state.mu.array() + state.varrho.array() * xi_vec.array()).max(0.0).matrix();
  return out;
}

DualPenaltyState penalty_update(const DualPenaltyState& state, const std::vector<Example>& X,
                                const Classifier& clf, const ConstraintSet& cs,
                                const Vector& delta, const SolverConfig& cfg) {
  check_state_shapes(X, cs, state);
  const auto evals = evaluate_all(X, clf, cs, delta, cfg.workers, /*with_grads=*/false);
  return penalty_from_evals(evals, X, cs, state, cfg);
}

Vector project_l2(const Vector& delta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("projection radius must be positive");
  const double norm = delta.norm();
  if (norm <= eps) return delta;
  return (eps / norm) * delta;
}

double asr(const Vector& delta, const std::vector<Example>& X, const Classifier& clf,
           const ConstraintSet& cs) {
  if (X.empty()) return 0.0;
  Index hits = 0;
  for (const Example& e : X) {
    const Vector z = e.features + delta;
    const bool misclassified = e.label * classify_value(clf, z) < 0.0;
    if (!misclassified) continue;
    bool feasible = false;
    try {
      feasible = satisfied(cs, z);
    } catch (const EvalDomainError&) {
      feasible = false;  // undefined constraint value counts as failure
    }
    if (feasible) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X.size());
}

AttackResult capx_universal(const std::vector<Example>& X, const Classifier& clf,
                            const ConstraintSet& cs, const SolverConfig& cfg,
                            const IterationObserver& observer) {
  cfg.validate();
  if (X.empty()) throw ConfigError("attack needs at least one example");
  const Index d = clf.input_dim();
  for (const Example& e : X)
    if (e.features.size() != d)
      throw InputError("example dimension " + std::to_string(e.features.size()) +
                       " does not match classifier input " + std::to_string(d));
  const Index cdim = min_dimension(cs);
  if (cdim > d)
    throw InputError("constraints reference x" + std::to_string(cdim - 1) +
                     " but the classifier input has dimension " + std::to_string(d));

  AttackResult result;
  for (const Example& e : X)
    if (e.label != +1 && e.label != -1)
      throw InputError("labels must be +1 or -1");
  {
    int label_mismatch = 0, misclassified = 0;
    for (const Example& e : X) {
      if (e.label != X.front().label) ++label_mismatch;
      if (e.label * classify_value(clf, e.features) < 0.0) ++misclassified;
    }
    if (label_mismatch > 0)
      result.warnings.push_back(std::to_string(label_mismatch) +
                                " example(s) do not share the first example's label");
    if (misclassified > 0)
      result.warnings.push_back(std::to_string(misclassified) +
                                " example(s) are already misclassified at delta = 0");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const Index n = static_cast<Index>(X.size());
  const Index q = cs.size();
  DualPenaltyState state = init_state(n, q, cfg.seed);

  Vector delta = Vector::Zero(d);
  Vector adam_m = Vector::Zero(d);
  Vector adam_v = Vector::Zero(d);

  const auto report_point = [&](const Vector& dl) {
    return cfg.projection_radius ? project_l2(dl, *cfg.projection_radius) : dl;
  };

  result.asr_trace.reserve(static_cast<size_t>(cfg.max_iter) + 1);
  Vector best = report_point(delta);
  double best_asr = asr(best, X, clf, cs);
  int best_iter = 0;
  result.asr_trace.emplace_back(0, best_asr);
  if (observer) observer(0, delta, state);

  const auto eval_at = [&](const Vector& dl, int k, bool with_grads) {
    try {
      return evaluate_all(X, clf, cs, dl, cfg.workers, with_grads);
    } catch (const EvalDomainError& e) {
      throw EvalDomainError("at iteration " + std::to_string(k) + ": " + e.what());
    }
  };

  auto evals = eval_at(delta, 0, /*with_grads=*/true);
  for (int k = 1; k <= cfg.max_iter; ++k) {
    const Vector grad = primal_grad_from_evals(evals, X, cs, delta, state, cfg);
    if (cfg.optimizer == Optimizer::plain_gd) {
      delta -= cfg.learning_rate * grad;
    } else {
      adam_m = cfg.adam.beta1 * adam_m + (1.0 - cfg.adam.beta1) * grad;
      adam_v = (cfg.adam.beta2 * adam_v.array() +
                (1.0 - cfg.adam.beta2) * grad.array().square())
                   .matrix();
      const double m_corr = 1.0 - std::pow(cfg.adam.beta1, k);
      const double v_corr = 1.0 - std::pow(cfg.adam.beta2, k);
      delta -= (cfg.learning_rate * (adam_m.array() / m_corr) /
                ((adam_v.array() / v_corr).sqrt() + cfg.adam.eps))
                   .matrix();
    }
    if (!delta.allFinite())
      throw Error("perturbation diverged to a non-finite value at iteration " +
                  std::to_string(k));

    evals = eval_at(delta, k, /*with_grads=*/true);
    const auto [Z, Xi] = dual_grads_from_evals(evals, X, cs, state, cfg);
    state = dual_update(state, Z, Xi);
    if (k % cfg.penalty_update_every == 0)
      state = penalty_from_evals(evals, X, cs, state, cfg);

    const double L = alf_from_evals(evals, X, cs, delta, state, cfg);
    if (!std::isfinite(L))
      throw Error("objective diverged to a non-finite value at iteration " + std::to_string(k));

    const Vector rep = report_point(delta);
    const double a = asr(rep, X, clf, cs);
    result.asr_trace.emplace_back(k, a);
    if (a > best_asr) {
      best_asr = a;
      best_iter = k;
      best = rep;
    }
    if (observer) observer(k, delta, state);
  }

  result.delta_best = std::move(best);
  result.best_iteration = best_iter;
  result.delta_norm = result.delta_best.norm();
  result.per_sample_status.reserve(X.size());
  for (const Example& e : X) {
    const Vector z = e.features + result.delta_best;
    SampleStatus st;
    st.misclassified = e.label * classify_value(clf, z) < 0.0;
    try {
      st.constraints_ok = satisfied(cs, z);
    } catch (const EvalDomainError&) {
      st.constraints_ok = false;
    }
    result.per_sample_status.push_back(st);
  }
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

AttackResult capx_individual(const Example& example, const Classifier& clf,
                             const ConstraintSet& cs, const SolverConfig& cfg,
                             const IterationObserver& observer) {
  return capx_universal({example}, clf, cs, cfg, observer);
}

}  // namespace capfield
