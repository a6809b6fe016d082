#include "capfield/harness.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "capfield/rng.hpp"

namespace capfield {

void SyntheticSpec::validate() const {
  if (d < 1) throw ConfigError("dimension must be >= 1");
  if (subspace_dim < 1 || subspace_dim > d)
    throw ConfigError("subspace_dim must lie in [1, d]");
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ConfigError("all split sizes must be >= 1");
  if (class_separation < 0.0) throw ConfigError("class_separation must be >= 0");
  if (anomaly_shift < 0.0) throw ConfigError("anomaly_shift must be >= 0");
}

namespace {

std::vector<Example> gen_split(Index n, const SyntheticSpec& spec, const Matrix& subspace,
                               const Matrix& null_basis, Rng& rng) {
  const Index n_anom = n / 2;
  const Index n_norm = n - n_anom;
  const Index s = spec.subspace_dim;
  const Index nullity = null_basis.cols();
  // Tight spread along the separating coordinate keeps the farthest normal
  // sample reachable within radii proportional to class_separation; the
  // floor keeps the coordinate non-degenerate when separation is 0.
  const double sep_sigma = std::max(spec.class_separation / 8.0, 0.02);

  std::vector<Example> out;
  out.reserve(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const bool anomaly = i >= n_norm;
    Vector u(s);
    const double center = (anomaly ? -0.5 : 0.5) * spec.class_separation;
    u(0) = center + sep_sigma * normal01(rng);
    for (Index k = 1; k < s; ++k) u(k) = normal01(rng);
    Vector x = subspace * u;
    if (anomaly && nullity > 0 && spec.anomaly_shift > 0.0) {
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const Index idx = std::min<Index>(nullity - 1,
                                        static_cast<Index>(uniform01(rng) * nullity));
      x += sign * spec.anomaly_shift * null_basis.col(idx);
    }
    out.push_back({std::move(x), anomaly ? -1 : +1});
  }
  return out;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng basis_rng(child_seed(spec.seed, "synthetic-basis"));
  Matrix G(spec.d, spec.d);
  for (Index r = 0; r < spec.d; ++r)
    for (Index c = 0; c < spec.d; ++c) G(r, c) = normal01(basis_rng);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(G).householderQ();

  SyntheticData data;
  const Matrix subspace = Q.leftCols(spec.subspace_dim);
  data.null_basis = Q.rightCols(spec.d - spec.subspace_dim);

  Rng train_rng(child_seed(spec.seed, "synthetic-train"));
  Rng val_rng(child_seed(spec.seed, "synthetic-val"));
  Rng test_rng(child_seed(spec.seed, "synthetic-test"));
  data.train = gen_split(spec.n_train, spec, subspace, data.null_basis, train_rng);
  data.val = gen_split(spec.n_val, spec, subspace, data.null_basis, val_rng);
  data.test = gen_split(spec.n_test, spec, subspace, data.null_basis, test_rng);
  return data;
}

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Forward pass storing post-activation values per layer; returns f(x).
double forward_store(const Classifier& clf, const Vector& x, std::vector<Vector>& acts) {
  acts.clear();
  acts.push_back(x);
  Vector h = x;
  for (size_t l = 0; l < clf.layers.size(); ++l) {
    h = clf.layers[l].weights * h + clf.layers[l].bias;
    if (l + 1 < clf.layers.size()) h = h.cwiseMax(0.0);
    acts.push_back(h);
  }
  return h(0);
}

}  // namespace

Classifier train_classifier(const std::vector<Example>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("training needs at least one example");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  const Index d = data.front().features.size();
  for (const Example& e : data)
    if (e.features.size() != d) throw InputError("examples have inconsistent dimensions");

  Classifier clf;
  if (cfg.hidden.empty()) {
    clf = make_linear(Vector::Zero(d), 0.0);
  } else {
    Rng rng(child_seed(cfg.seed, "train-init"));
    std::vector<Layer> layers;
    Index in = d;
    for (Index width : cfg.hidden) {
      if (width < 1) throw ConfigError("hidden widths must be >= 1");
      Layer l;
      l.weights.resize(width, in);
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (Index r = 0; r < width; ++r)
        for (Index c = 0; c < in; ++c) l.weights(r, c) = scale * normal01(rng);
      l.bias = Vector::Zero(width);
      layers.push_back(std::move(l));
      in = width;
    }
    Layer out;
    out.weights.resize(1, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Index c = 0; c < in; ++c) out.weights(0, c) = scale * normal01(rng);
    out.bias = Vector::Zero(1);
    layers.push_back(std::move(out));
    clf = make_feedforward(std::move(layers));
  }

  const double inv_n = 1.0 / static_cast<double>(data.size());
  std::vector<Vector> acts;
  std::vector<Matrix> dW(clf.layers.size());
  std::vector<Vector> db(clf.layers.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t l = 0; l < clf.layers.size(); ++l) {
      dW[l] = Matrix::Zero(clf.layers[l].weights.rows(), clf.layers[l].weights.cols());
      db[l] = Vector::Zero(clf.layers[l].bias.size());
    }
    for (const Example& e : data) {
      const double f = forward_store(clf, e.features, acts);
      const double y = static_cast<double>(e.label);
      // d/df of log(1 + exp(-y f)) = -y * sigmoid(-y f)
      const double gout = -y * sigmoid(-y * f);
      Vector bar = Vector::Constant(1, gout);
      for (size_t l = clf.layers.size(); l-- > 0;) {
        // acts[l] is the input to layer l; acts[l+1] its (activated) output.
        dW[l].noalias() += bar * acts[l].transpose();
        db[l] += bar;
        if (l > 0) {
          bar = clf.layers[l].weights.transpose() * bar;
          bar = bar.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        }
      }
    }
    for (size_t l = 0; l < clf.layers.size(); ++l) {
      clf.layers[l].weights -= cfg.learning_rate * inv_n * dW[l];
      clf.layers[l].bias -= cfg.learning_rate * inv_n * db[l];
    }
  }
  return clf;
}

std::vector<Example> correctly_classified_normals(const std::vector<Example>& data,
                                                  const Classifier& clf) {
  std::vector<Example> out;
  for (const Example& e : data)
    if (e.label == +1 && classify_value(clf, e.features) >= 0.0) out.push_back(e);
  return out;
}

namespace {

// Seeded draw of `count` distinct indices from [0, pool) via a partial
// Fisher-Yates shuffle.
std::vector<Index> draw_without_replacement(Index pool, Index count, Rng& rng) {
  std::vector<Index> idx(static_cast<size_t>(pool));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    const Index j = i + static_cast<Index>(uniform01(rng) * static_cast<double>(pool - i));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(std::min(j, pool - 1))]);
  }
  idx.resize(static_cast<size_t>(count));
  return idx;
}

SweepPoint run_point(const AttackSetup& setup, const std::vector<Example>& X, double radius,
                     double axis_value) {
  SolverConfig cfg = setup.solver;
  cfg.projection_radius = radius;
  const auto t0 = std::chrono::steady_clock::now();
  const AttackResult res = capx_universal(X, setup.clf, setup.cs, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  SweepPoint p;
  p.axis_value = axis_value;
  p.asr_train = asr(res.delta_best, X, setup.clf, setup.cs);
  p.asr_test = asr(res.delta_best, setup.test_pool, setup.clf, setup.cs);
  p.wall_time_seconds = secs;
  return p;
}

std::vector<Example> take_attack_set(const AttackSetup& setup, Index count, std::uint64_t seed,
                                     std::string_view purpose) {
  const Index pool = static_cast<Index>(setup.val_normals.size());
  if (count > pool)
    throw InputError("attack set of size " + std::to_string(count) + " requested but only " +
                     std::to_string(pool) + " correctly classified normal samples available (" +
                     std::to_string(count - pool) + " short)");
  Rng rng(child_seed(seed, purpose));
  std::vector<Example> X;
  X.reserve(static_cast<size_t>(count));
  for (Index i : draw_without_replacement(pool, count, rng))
    X.push_back(setup.val_normals[static_cast<size_t>(i)]);
  return X;
}

}  // namespace

SweepResult sweep_set_size(const AttackSetup& setup, const std::vector<int>& sizes,
                           double radius, std::uint64_t seed) {
  if (sizes.empty()) throw ConfigError("set-size sweep needs at least one size");
  if (!std::is_sorted(sizes.begin(), sizes.end()) ||
      std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end())
    throw ConfigError("set sizes must be strictly increasing");
  if (sizes.front() < 1) throw ConfigError("set sizes must be >= 1");
  if (!(radius > 0.0)) throw ConfigError("sweep radius must be positive");

  SweepResult result;
  result.axis = "set_size";
  for (int size : sizes) {
    const auto X = take_attack_set(setup, size, seed,
                                   "sweep-set-size-" + std::to_string(size));
    result.points.push_back(run_point(setup, X, radius, static_cast<double>(size)));
  }
  return result;
}

SweepResult sweep_norm_budget(const AttackSetup& setup, const std::vector<double>& radii,
                              int set_size, std::uint64_t seed) {
  if (radii.empty()) throw ConfigError("norm-budget sweep needs at least one radius");
  for (size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConfigError("sweep radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw ConfigError("sweep radii must be strictly increasing");
  }
  if (set_size < 1) throw ConfigError("set size must be >= 1");

  const auto X = take_attack_set(setup, set_size, seed, "sweep-norm-budget");
  SweepResult result;
  result.axis = "norm_budget";
  for (double radius : radii) result.points.push_back(run_point(setup, X, radius, radius));
  return result;
}

std::vector<IpStatRow> validate_learned_constraints(const std::vector<Example>& train,
                                                    const std::vector<Example>& test,
                                                    const std::vector<LearnedConstraint>& lcs) {
  if (lcs.empty()) throw ConfigError("validation needs at least one learned constraint");
  const auto mean_abs = [&lcs](const std::vector<Example>& split, int label) {
    double sum = 0.0;
    Index count = 0;
    for (const Example& e : split) {
      if (e.label != label) continue;
      for (const LearnedConstraint& lc : lcs) sum += std::abs(lc.direction.dot(e.features));
      ++count;
    }
    return count == 0 ? 0.0 : sum / (static_cast<double>(count) *
                                     static_cast<double>(lcs.size()));
  };
  return {
      {"train", "normal", mean_abs(train, +1)},
      {"train", "anomaly", mean_abs(train, -1)},
      {"test", "normal", mean_abs(test, +1)},
      {"test", "anomaly", mean_abs(test, -1)},
  };
}

Matrix normal_matrix(const std::vector<Example>& data) {
  Index n = 0;
  for (const Example& e : data)
    if (e.label == +1) ++n;
  if (n == 0) throw InputError("no normal-class (label +1) samples");
  Matrix X(n, data.front().features.size());
  Index r = 0;
  for (const Example& e : data)
    if (e.label == +1) X.row(r++) = e.features.transpose();
  return X;
}

double mean_sample_norm(const std::vector<Example>& data) {
  if (data.empty()) throw InputError("no samples");
  double sum = 0.0;
  for (const Example& e : data) sum += e.features.norm();
  return sum / static_cast<double>(data.size());
}

}  // namespace capfield
