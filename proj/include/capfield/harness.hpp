#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capfield/classifier.hpp"
#include "capfield/common.hpp"
#include "capfield/constraints.hpp"
#include "capfield/solver.hpp"

namespace capfield {

// Recipe for the synthetic constrained dataset: normal-class samples live
// exactly on a random subspace_dim-dimensional subspace (giving the
// constraint learner d - subspace_dim null directions to find), anomalies
// get a class-separating offset plus a +-anomaly_shift component along a
// random null direction. The random sign keeps the null component useless
// to a linear classifier while keeping it visible to inner-product checks.
struct SyntheticSpec {
  Index d = 10;
  Index n_train = 400;
  Index n_val = 400;
  Index n_test = 1000;
  double class_separation = 1.0;
  Index subspace_dim = 9;
  double anomaly_shift = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  Matrix null_basis;  // d x (d - subspace_dim), orthonormal ground truth
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

// Plain full-batch gradient descent on the logistic loss. Empty `hidden`
// trains a linear model (deterministic zero init); otherwise a ReLU network
// with the given hidden widths and seeded random init.
struct TrainConfig {
  std::vector<Index> hidden;
  int epochs = 300;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

Classifier train_classifier(const std::vector<Example>& data, const TrainConfig& cfg);

// Inputs shared by every sweep point.
struct AttackSetup {
  Classifier clf;
  ConstraintSet cs;
  std::vector<Example> val_normals;  // candidates for X; filtered by the caller
  std::vector<Example> test_pool;
  SolverConfig solver;
};

// The label-+1 examples of `data` that clf classifies correctly; the pool X
// is drawn from exactly this set.
std::vector<Example> correctly_classified_normals(const std::vector<Example>& data,
                                                  const Classifier& clf);

struct SweepPoint {
  double axis_value = 0.0;
  double asr_train = 0.0;
  double asr_test = 0.0;
  double wall_time_seconds = 0.0;
};

struct SweepResult {
  std::string axis;  // "set_size" or "norm_budget"
  std::vector<SweepPoint> points;
};

// One attack per attack-set size, at a fixed projection radius. X for each
// size is a seeded draw (without replacement) from setup.val_normals.
SweepResult sweep_set_size(const AttackSetup& setup, const std::vector<int>& sizes,
                           double radius, std::uint64_t seed);

// One attack per projection radius, at a fixed attack-set size. All points
// share the same X and solver seed, so the internal trajectory is common
// and only the reporting radius varies.
SweepResult sweep_norm_budget(const AttackSetup& setup, const std::vector<double>& radii,
                              int set_size, std::uint64_t seed);

// Mean absolute inner product between samples and the learned directions,
// broken out by split and class. Four rows: train/test x normal/anomaly.
struct IpStatRow {
  std::string split;   // "train" or "test"
  std::string cls;     // "normal" or "anomaly"
  double mean_abs_ip = 0.0;
};

std::vector<IpStatRow> validate_learned_constraints(const std::vector<Example>& train,
                                                    const std::vector<Example>& test,
                                                    const std::vector<LearnedConstraint>& lcs);

// Feature matrix of the label-+1 rows, one sample per row.
Matrix normal_matrix(const std::vector<Example>& data);

// Mean Euclidean norm over all samples; the harness expresses default
// attack radii as fractions of this scale.
double mean_sample_norm(const std::vector<Example>& data);

}  // namespace capfield
