#include "capfield/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capfield/harness.hpp"
#include "capfield/io.hpp"

namespace capfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("missing required " + what + " path");
  if (!fs::exists(path)) throw InputError(what + " file does not exist: " + path);
}

// Applies config file and flag overrides in precedence order:
// flag > config file > default.
SolverConfig resolve_solver_config(const RunManifest& m) {
  SolverConfig cfg;
  if (!m.config_path.empty()) cfg = load_solver_config(m.config_path);
  cfg.seed = m.seed;
  if (m.radius) cfg.projection_radius = *m.radius;
  if (m.workers) cfg.workers = *m.workers;
  if (m.max_iter) cfg.max_iter = *m.max_iter;
  if (m.optimizer) {
    if (*m.optimizer == "plain_gd") {
      cfg.optimizer = Optimizer::plain_gd;
    } else if (*m.optimizer == "adam") {
      cfg.optimizer = Optimizer::adam;
    } else {
      throw ConfigError("unknown optimizer \"" + *m.optimizer + "\" (use plain_gd or adam)");
    }
  }
  cfg.validate();
  return cfg;
}

ConstraintSet resolve_constraints(const RunManifest& m, Index dim) {
  if (m.constraints_path.empty()) return ConstraintSet{{}, Vector(0)};
  return load_constraints(m.constraints_path, dim);
}

std::string out_path(const RunManifest& m, const std::string& name) {
  return (fs::path(m.out_dir) / name).string();
}

json manifest_echo(const RunManifest& m) {
  json doc;
  doc["command"] = m.command;
  doc["seed"] = m.seed;
  doc["tool_version"] = m.tool_version.empty() ? kVersion : m.tool_version;
  if (!m.model_path.empty()) doc["model"] = m.model_path;
  if (!m.constraints_path.empty()) doc["constraints"] = m.constraints_path;
  if (!m.data_path.empty()) doc["data"] = m.data_path;
  if (!m.test_data_path.empty()) doc["test_data"] = m.test_data_path;
  if (!m.config_path.empty()) doc["config"] = m.config_path;
  doc["out"] = m.out_dir;
  return doc;
}

int cmd_attack(const RunManifest& m, bool universal) {
  require_file(m.model_path, "model");
  require_file(m.data_path, "dataset");
  const Classifier clf = load_classifier(m.model_path);
  const SolverConfig cfg = resolve_solver_config(m);
  const ConstraintSet cs = resolve_constraints(m, clf.input_dim());
  std::vector<Example> data = ingest_csv(m.data_path, m.label_column, m.positive_label);

  AttackResult result;
  if (universal) {
    result = capx_universal(data, clf, cs, cfg);
  } else {
    if (m.sample_index < 0 || static_cast<size_t>(m.sample_index) >= data.size())
      throw ConfigError("sample index " + std::to_string(m.sample_index) +
                        " out of range [0, " + std::to_string(data.size()) + ")");
    result = capx_individual(data[static_cast<size_t>(m.sample_index)], clf, cs, cfg);
  }
  for (const std::string& w : result.warnings) std::fputs(("warning: " + w + "\n").c_str(), stderr);

  const std::string name = universal ? "attack_universal.json" : "attack_individual.json";
  write_text_file(out_path(m, name), attack_result_to_json(result) + "\n");
  json run = manifest_echo(m);
  run["solver_config"] = json::parse(solver_config_to_json(cfg));
  write_text_file(out_path(m, "run.json"), run.dump(2) + "\n");
  return 0;
}

int cmd_learn_constraints(const RunManifest& m) {
  require_file(m.data_path, "dataset");
  const std::vector<Example> data = ingest_csv(m.data_path, m.label_column, m.positive_label);
  const Matrix X = normal_matrix(data);
  const std::vector<LearnedConstraint> lcs = learn_nullspace_constraints(X, m.nullspace_tol);

  ConstraintSet set{{}, Vector(0)};
  for (const LearnedConstraint& lc : lcs) {
    if (m.mirrored_bounds) {
      append_learned_mirrored(set, lc);
    } else {
      append_learned(set, lc);
    }
  }
  if (m.aggregate_direction) {
    LearnedConstraint agg;
    if (aggregate_learned(lcs, X, agg)) append_learned(set, agg);
  }

  write_text_file(out_path(m, "learned.cons"), print_constraints(set));
  write_text_file(out_path(m, "learned.json"), learned_constraints_to_json(lcs) + "\n");

  const auto curve = rank_nullity_curve(X, std::max<Index>(1, X.rows() / 8), m.nullspace_tol);
  std::ostringstream os;
  os << "sample_count,rank,nullity\n";
  for (const RankNullityPoint& p : curve)
    os << p.sample_count << "," << p.rank << "," << p.nullity << "\n";
  write_text_file(out_path(m, "rank_nullity.csv"), os.str());
  return 0;
}

int cmd_sweep(const RunManifest& m) {
  require_file(m.model_path, "model");
  require_file(m.data_path, "dataset");
  AttackSetup setup;
  setup.clf = load_classifier(m.model_path);
  setup.cs = resolve_constraints(m, setup.clf.input_dim());
  setup.solver = resolve_solver_config(m);
  const std::vector<Example> data = ingest_csv(m.data_path, m.label_column, m.positive_label);
  setup.val_normals = correctly_classified_normals(data, setup.clf);
  if (!m.test_data_path.empty()) {
    require_file(m.test_data_path, "test dataset");
    setup.test_pool = ingest_csv(m.test_data_path, m.label_column, m.positive_label);
  } else {
    setup.test_pool = data;
  }

  SweepResult result;
  if (m.sweep_axis == "set_size") {
    if (m.sweep_sizes.empty()) throw ConfigError("set-size sweep needs --sizes");
    const double radius = m.radius ? *m.radius : 0.4 * mean_sample_norm(data);
    result = sweep_set_size(setup, m.sweep_sizes, radius, m.seed);
  } else if (m.sweep_axis == "norm_budget") {
    if (m.sweep_radii.empty()) throw ConfigError("norm-budget sweep needs --radii");
    int size = m.sweep_set_size_fixed;
    if (size == 0)
      size = static_cast<int>(std::min<size_t>(setup.val_normals.size(), 200));
    result = sweep_norm_budget(setup, m.sweep_radii, size, m.seed);
  } else {
    throw ConfigError("unknown sweep axis \"" + m.sweep_axis +
                      "\" (use set_size or norm_budget)");
  }

  const std::string stem = "sweep_" + result.axis + "_seed" + std::to_string(m.seed);
  write_text_file(out_path(m, stem + ".json"), sweep_result_to_json(result) + "\n");
  write_text_file(out_path(m, stem + ".csv"), sweep_result_to_csv(result));
  return 0;
}

int cmd_gen_data(const RunManifest& m) {
  SyntheticSpec spec;
  spec.d = m.synth_d;
  spec.n_train = m.synth_n_train;
  spec.n_val = m.synth_n_val;
  spec.n_test = m.synth_n_test;
  spec.class_separation = m.synth_separation;
  spec.subspace_dim = m.synth_subspace_dim;
  spec.anomaly_shift = m.synth_anomaly_shift;
  spec.seed = m.seed;
  const SyntheticData data = gen_synthetic(spec);

  write_text_file(out_path(m, "train.csv"),
                  examples_to_csv(data.train, m.label_column, m.positive_label, "-1"));
  write_text_file(out_path(m, "val.csv"),
                  examples_to_csv(data.val, m.label_column, m.positive_label, "-1"));
  write_text_file(out_path(m, "test.csv"),
                  examples_to_csv(data.test, m.label_column, m.positive_label, "-1"));

  json basis;
  basis["rows"] = data.null_basis.rows();
  basis["cols"] = data.null_basis.cols();
  std::vector<double> flat;
  for (Index r = 0; r < data.null_basis.rows(); ++r)
    for (Index c = 0; c < data.null_basis.cols(); ++c) flat.push_back(data.null_basis(r, c));
  basis["data_row_major"] = flat;
  write_text_file(out_path(m, "null_basis.json"), basis.dump(2) + "\n");
  return 0;
}

int cmd_train_model(const RunManifest& m) {
  require_file(m.data_path, "dataset");
  const std::vector<Example> data = ingest_csv(m.data_path, m.label_column, m.positive_label);
  TrainConfig cfg;
  cfg.hidden = m.train_hidden;
  cfg.epochs = m.train_epochs;
  cfg.learning_rate = m.train_learning_rate;
  cfg.seed = m.seed;
  const Classifier clf = train_classifier(data, cfg);
  save_classifier(clf, out_path(m, "model.json"));

  json report;
  report["train_accuracy"] = accuracy(clf, data);
  report["examples"] = data.size();
  write_text_file(out_path(m, "train_report.json"), report.dump(2) + "\n");
  return 0;
}

}  // namespace

void validate_manifest(const RunManifest& manifest) {
  static const std::set<std::string> commands = {"attack-universal",  "attack-individual",
                                                 "learn-constraints", "sweep",
                                                 "gen-data",          "train-model"};
  if (commands.find(manifest.command) == commands.end())
    throw ConfigError("unknown command \"" + manifest.command + "\"");
  if (manifest.out_dir.empty()) throw ConfigError("missing required output directory");
  for (const std::string* p : {&manifest.model_path, &manifest.constraints_path,
                               &manifest.data_path, &manifest.test_data_path,
                               &manifest.config_path}) {
    if (!p->empty() && !fs::exists(*p)) throw InputError("referenced path does not exist: " + *p);
  }
  std::error_code ec;
  fs::create_directories(manifest.out_dir, ec);
  if (ec || !fs::is_directory(manifest.out_dir))
    throw InputError("cannot create output directory: " + manifest.out_dir);
}

int run_manifest(const RunManifest& manifest) {
  validate_manifest(manifest);
  if (manifest.command == "attack-universal") return cmd_attack(manifest, true);
  if (manifest.command == "attack-individual") return cmd_attack(manifest, false);
  if (manifest.command == "learn-constraints") return cmd_learn_constraints(manifest);
  if (manifest.command == "sweep") return cmd_sweep(manifest);
  if (manifest.command == "gen-data") return cmd_gen_data(manifest);
  if (manifest.command == "train-model") return cmd_train_model(manifest);
  throw ConfigError("unknown command \"" + manifest.command + "\"");
}

std::string error_json(const std::string& type, const std::string& message) {
  json doc;
  doc["error"] = {{"type", type}, {"message", message}};
  return doc.dump();
}

}  // namespace capfield
