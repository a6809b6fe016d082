#pragma once

#include <string>
#include <vector>

#include "capfield/classifier.hpp"
#include "capfield/common.hpp"
#include "capfield/constraints.hpp"
#include "capfield/harness.hpp"
#include "capfield/solver.hpp"

namespace capfield {

// SolverConfig <-> JSON. Unknown keys are rejected so config typos fail
// loudly; missing keys keep their defaults.
std::string solver_config_to_json(const SolverConfig& cfg);
SolverConfig solver_config_from_json(const std::string& text);
SolverConfig load_solver_config(const std::string& path);

std::string attack_result_to_json(const AttackResult& result);

// Canonical sweep JSON carries no timing so reruns with one seed are
// byte-identical; timing lives in the CSV emitted next to it.
std::string sweep_result_to_json(const SweepResult& result);
std::string sweep_result_to_csv(const SweepResult& result);

std::string ip_stats_to_json(const std::vector<IpStatRow>& rows);
std::string ip_stats_to_csv(const std::vector<IpStatRow>& rows);

// Learned constraints with their statistics, alongside the .cons DSL form.
std::string learned_constraints_to_json(const std::vector<LearnedConstraint>& lcs);

// CSV dataset: UTF-8, header row, numeric feature columns, one label
// column. Feature order follows the header minus the label column.
std::vector<Example> ingest_csv(const std::string& path, const std::string& label_column,
                                const std::string& positive_label);

// Writes header f0..f<d-1>,<label_column> and one row per example; labels
// are written as the given tokens.
std::string examples_to_csv(const std::vector<Example>& data, const std::string& label_column,
                            const std::string& positive_token,
                            const std::string& negative_token);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace capfield
