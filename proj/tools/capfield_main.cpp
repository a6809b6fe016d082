#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "capfield/cli.hpp"
#include "capfield/common.hpp"

namespace {

// Shared flags are registered on every subcommand so invocations read
// naturally: capfield <command> --data ... --out ...
void add_common_options(CLI::App* cmd, capfield::RunManifest& m) {
  cmd->add_option("--model", m.model_path, "classifier JSON file");
  cmd->add_option("--constraints", m.constraints_path, "constraint DSL (.cons) file");
  cmd->add_option("--data", m.data_path, "dataset CSV file");
  cmd->add_option("--test-data", m.test_data_path, "held-out test pool CSV (sweeps)");
  cmd->add_option("--config", m.config_path, "solver config JSON file");
  cmd->add_option("--out", m.out_dir, "output directory")->required();
  cmd->add_option("--seed", m.seed, "root seed for all randomness");
  cmd->add_option("--label-col", m.label_column, "label column name (default: label)");
  cmd->add_option("--positive-label", m.positive_label,
                  "token mapped to label +1 (default: 1)");
  cmd->add_option("--radius", m.radius, "l2 projection radius");
  cmd->add_option("--workers", m.workers,
                  "parallel workers (0 = hardware; env CAPFIELD_WORKERS is the fallback)");
  cmd->add_option("--max-iter", m.max_iter, "solver iteration budget");
  cmd->add_option("--optimizer", m.optimizer, "plain_gd or adam");
}

}  // namespace

int main(int argc, char** argv) {
  capfield::RunManifest m;
  m.tool_version = capfield::kVersion;

  CLI::App app{"constraint-aware adversarial perturbation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(capfield::kVersion));

  CLI::App* attack_u = app.add_subcommand("attack-universal",
                                          "craft one perturbation against a whole attack set");
  add_common_options(attack_u, m);

  CLI::App* attack_i =
      app.add_subcommand("attack-individual", "craft a perturbation for a single sample");
  add_common_options(attack_i, m);
  attack_i->add_option("--index", m.sample_index, "row index of the sample to attack");

  CLI::App* learn = app.add_subcommand("learn-constraints",
                                       "learn linear invariants from normal-class rows");
  add_common_options(learn, m);
  learn->add_option("--tol", m.nullspace_tol, "relative singular-value cutoff");
  learn->add_flag("--mirrored", m.mirrored_bounds, "also emit the mirrored lower bound");
  learn->add_flag("--aggregate", m.aggregate_direction,
                  "append the normalized basis-sum constraint");

  CLI::App* sweep = app.add_subcommand("sweep", "ASR sweeps over set size or norm budget");
  add_common_options(sweep, m);
  sweep->add_option("--axis", m.sweep_axis, "set_size or norm_budget");
  sweep->add_option("--sizes", m.sweep_sizes, "attack-set sizes (set_size axis)");
  sweep->add_option("--radii", m.sweep_radii, "projection radii (norm_budget axis)");
  sweep->add_option("--set-size", m.sweep_set_size_fixed,
                    "fixed attack-set size for the norm_budget axis");

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic constrained dataset");
  add_common_options(gen, m);
  gen->add_option("--dim", m.synth_d, "feature dimension");
  gen->add_option("--n-train", m.synth_n_train, "training rows");
  gen->add_option("--n-val", m.synth_n_val, "validation rows");
  gen->add_option("--n-test", m.synth_n_test, "test rows");
  gen->add_option("--separation", m.synth_separation, "class separation");
  gen->add_option("--subspace-dim", m.synth_subspace_dim, "normal-class subspace dimension");
  gen->add_option("--anomaly-shift", m.synth_anomaly_shift,
                  "anomaly component along a null direction");

  CLI::App* train = app.add_subcommand("train-model", "fit a classifier on a dataset");
  add_common_options(train, m);
  train->add_option("--hidden", m.train_hidden, "hidden layer widths (empty = linear)");
  train->add_option("--epochs", m.train_epochs, "full-batch epochs");
  train->add_option("--lr", m.train_learning_rate, "training step size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  m.command = app.get_subcommands().front()->get_name();
  if (!m.workers) {
    if (const char* env = std::getenv("CAPFIELD_WORKERS")) {
      try {
        m.workers = std::stoi(env);
      } catch (const std::exception&) {
        std::fprintf(stderr, "%s\n",
                     capfield::error_json("config", "CAPFIELD_WORKERS is not an integer").c_str());
        return 2;
      }
    }
  }

  try {
    return capfield::run_manifest(m);
  } catch (const capfield::ParseError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("parse", e.what()).c_str());
  } catch (const capfield::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("config", e.what()).c_str());
  } catch (const capfield::EvalDomainError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("domain", e.what()).c_str());
  } catch (const capfield::InputError& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("input", e.what()).c_str());
  } catch (const capfield::Error& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("runtime", e.what()).c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n%s\n", e.what(),
                 capfield::error_json("internal", e.what()).c_str());
  }
  return 1;
}
