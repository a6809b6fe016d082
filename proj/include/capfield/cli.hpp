#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "capfield/common.hpp"

namespace capfield {

// Fully resolved description of one tool invocation. The CLI front end
// fills this from flags, a config file, and defaults (in that precedence);
// tests construct it directly.
struct RunManifest {
  std::string command;  // attack-universal | attack-individual | learn-constraints |
                        // sweep | gen-data | train-model
  std::string model_path;
  std::string constraints_path;
  std::string data_path;
  std::string test_data_path;  // optional separate test pool for sweeps
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string tool_version;

  // Dataset ingestion.
  std::string label_column = "label";
  std::string positive_label = "1";

  // Solver overrides (flag > config file > default).
  std::optional<double> radius;
  std::optional<int> workers;
  std::optional<int> max_iter;
  std::optional<std::string> optimizer;

  // attack-individual.
  int sample_index = 0;

  // learn-constraints.
  double nullspace_tol = 1e-10;
  bool mirrored_bounds = false;
  bool aggregate_direction = false;

  // sweep.
  std::string sweep_axis = "norm_budget";  // or "set_size"
  std::vector<int> sweep_sizes;
  std::vector<double> sweep_radii;
  int sweep_set_size_fixed = 0;  // 0 selects a default from the pool size

  // gen-data / train-model.
  Index synth_d = 10;
  Index synth_n_train = 400;
  Index synth_n_val = 400;
  Index synth_n_test = 1000;
  double synth_separation = 1.0;
  Index synth_subspace_dim = 9;
  double synth_anomaly_shift = 0.2;
  std::vector<Index> train_hidden;
  int train_epochs = 300;
  double train_learning_rate = 0.5;
};

// Checks referenced input paths exist and creates the output directory.
// Throws InputError/ConfigError on violations.
void validate_manifest(const RunManifest& manifest);

// Dispatches to the named command and writes its artifacts under out_dir.
// Returns 0 on success. Errors propagate as exceptions; the CLI front end
// renders them as human text plus a JSON diagnostic on stderr.
int run_manifest(const RunManifest& manifest);

// {"error": {"type": ..., "message": ...}} used by the front end.
std::string error_json(const std::string& type, const std::string& message);

}  // namespace capfield
