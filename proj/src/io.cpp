#include "capfield/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace capfield {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& doc, const std::vector<std::string>& known,
                         const std::string& what) {
  for (const auto& item : doc.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw InputError("unknown key \"" + item.key() + "\" in " + what);
  }
}

}  // namespace

std::string solver_config_to_json(const SolverConfig& cfg) {
  json doc;
  doc["max_iter"] = cfg.max_iter;
  doc["learning_rate"] = cfg.learning_rate;
  doc["penalty_scale"] = cfg.penalty_scale;
  doc["penalty_update_every"] = cfg.penalty_update_every;
  doc["penalty_cap"] = cfg.penalty_cap;
  doc["misclass_threshold"] = cfg.misclass_threshold;
  doc["optimizer"] = cfg.optimizer == Optimizer::plain_gd ? "plain_gd" : "adam";
  doc["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
  if (cfg.projection_radius) doc["projection_radius"] = *cfg.projection_radius;
  doc["seed"] = cfg.seed;
  doc["ungated_penalty_update"] = cfg.ungated_penalty_update;
  doc["workers"] = cfg.workers;
  return doc.dump(2);
}

SolverConfig solver_config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid solver config JSON: ") + e.what());
  }
  SolverConfig cfg;
  try {
    reject_unknown_keys(doc,
                        {"max_iter", "learning_rate", "penalty_scale", "penalty_update_every",
                         "penalty_cap", "misclass_threshold", "optimizer", "adam",
                         "projection_radius", "seed", "ungated_penalty_update", "workers"},
                        "solver config");
    if (doc.contains("max_iter")) cfg.max_iter = doc["max_iter"].get<int>();
    if (doc.contains("learning_rate")) cfg.learning_rate = doc["learning_rate"].get<double>();
    if (doc.contains("penalty_scale")) cfg.penalty_scale = doc["penalty_scale"].get<double>();
    if (doc.contains("penalty_update_every"))
      cfg.penalty_update_every = doc["penalty_update_every"].get<int>();
    if (doc.contains("penalty_cap")) cfg.penalty_cap = doc["penalty_cap"].get<double>();
    if (doc.contains("misclass_threshold"))
      cfg.misclass_threshold = doc["misclass_threshold"].get<double>();
    if (doc.contains("optimizer")) {
      const std::string opt = doc["optimizer"].get<std::string>();
      if (opt == "plain_gd") {
        cfg.optimizer = Optimizer::plain_gd;
      } else if (opt == "adam") {
        cfg.optimizer = Optimizer::adam;
      } else {
        throw InputError("unknown optimizer \"" + opt + "\" (use plain_gd or adam)");
      }
    }
    if (doc.contains("adam")) {
      const json& a = doc["adam"];
      reject_unknown_keys(a, {"beta1", "beta2", "eps"}, "adam config");
      if (a.contains("beta1")) cfg.adam.beta1 = a["beta1"].get<double>();
      if (a.contains("beta2")) cfg.adam.beta2 = a["beta2"].get<double>();
      if (a.contains("eps")) cfg.adam.eps = a["eps"].get<double>();
    }
    if (doc.contains("projection_radius"))
      cfg.projection_radius = doc["projection_radius"].get<double>();
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("ungated_penalty_update"))
      cfg.ungated_penalty_update = doc["ungated_penalty_update"].get<bool>();
    if (doc.contains("workers")) cfg.workers = doc["workers"].get<int>();
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid solver config JSON: ") + e.what());
  }
  return cfg;
}

SolverConfig load_solver_config(const std::string& path) {
  return solver_config_from_json(read_text_file(path));
}

std::string attack_result_to_json(const AttackResult& result) {
  json doc;
  doc["delta"] = std::vector<double>(result.delta_best.data(),
                                     result.delta_best.data() + result.delta_best.size());
  doc["delta_norm"] = result.delta_norm;
  doc["best_iteration"] = result.best_iteration;
  json trace = json::array();
  for (const auto& [k, a] : result.asr_trace) trace.push_back({k, a});
  doc["asr_trace"] = std::move(trace);
  doc["asr_best"] = result.asr_trace[static_cast<size_t>(result.best_iteration)].second;
  json status = json::array();
  for (const SampleStatus& s : result.per_sample_status)
    status.push_back({{"misclassified", s.misclassified}, {"constraints_ok", s.constraints_ok}});
  doc["per_sample_status"] = std::move(status);
  doc["wall_time_seconds"] = result.wall_time_seconds;
  doc["warnings"] = result.warnings;
  return doc.dump(2);
}

std::string sweep_result_to_json(const SweepResult& result) {
  json doc;
  doc["axis"] = result.axis;
  json points = json::array();
  for (const SweepPoint& p : result.points)
    points.push_back(
        {{"axis_value", p.axis_value}, {"asr_train", p.asr_train}, {"asr_test", p.asr_test}});
  doc["points"] = std::move(points);
  return doc.dump(2);
}

std::string sweep_result_to_csv(const SweepResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "axis_value,asr_train,asr_test,wall_time_seconds\n";
  for (const SweepPoint& p : result.points)
    os << p.axis_value << "," << p.asr_train << "," << p.asr_test << ","
       << p.wall_time_seconds << "\n";
  return os.str();
}

std::string ip_stats_to_json(const std::vector<IpStatRow>& rows) {
  json arr = json::array();
  for (const IpStatRow& r : rows)
    arr.push_back({{"split", r.split}, {"class", r.cls}, {"mean_abs_ip", r.mean_abs_ip}});
  return arr.dump(2);
}

std::string ip_stats_to_csv(const std::vector<IpStatRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "split,class,mean_abs_ip\n";
  for (const IpStatRow& r : rows) os << r.split << "," << r.cls << "," << r.mean_abs_ip << "\n";
  return os.str();
}

std::string learned_constraints_to_json(const std::vector<LearnedConstraint>& lcs) {
  json arr = json::array();
  for (const LearnedConstraint& lc : lcs) {
    json item;
    item["direction"] =
        std::vector<double>(lc.direction.data(), lc.direction.data() + lc.direction.size());
    item["threshold"] = lc.threshold;
    item["ip_mean"] = lc.ip_mean;
    item["ip_std"] = lc.ip_std;
    arr.push_back(std::move(item));
  }
  return arr.dump(2);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace; the format is plain unquoted CSV.
    const auto begin = cell.find_first_not_of(" \t\r");
    const auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos ? "" : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

std::vector<Example> ingest_csv(const std::string& path, const std::string& label_column,
                                const std::string& positive_label) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty dataset file: " + path);
  const std::vector<std::string> header = split_csv_line(line);
  Index label_idx = -1;
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) label_idx = static_cast<Index>(i);
  if (label_idx < 0)
    throw InputError("label column \"" + label_column + "\" not found in " + path);
  const Index d = static_cast<Index>(header.size()) - 1;
  if (d < 1) throw InputError("dataset has no feature columns: " + path);

  std::vector<Example> out;
  int file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<Index>(cells.size()) != static_cast<Index>(header.size()))
      throw InputError("line " + std::to_string(file_line) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    Example e;
    e.features.resize(d);
    Index f = 0;
    for (Index i = 0; i < static_cast<Index>(cells.size()); ++i) {
      const std::string& cell = cells[static_cast<size_t>(i)];
      if (i == label_idx) {
        e.label = cell == positive_label ? +1 : -1;
        continue;
      }
      double v = 0.0;
      size_t used = 0;
      bool ok = true;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok || used != cell.size() || !std::isfinite(v))
        throw InputError("line " + std::to_string(file_line) + ", column \"" +
                         header[static_cast<size_t>(i)] + "\": non-numeric cell \"" + cell +
                         "\"");
      e.features(f++) = v;
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw InputError("no data rows in " + path);
  return out;
}

std::string examples_to_csv(const std::vector<Example>& data, const std::string& label_column,
                            const std::string& positive_token,
                            const std::string& negative_token) {
  if (data.empty()) throw InputError("no examples to write");
  std::ostringstream os;
  os.precision(17);
  const Index d = data.front().features.size();
  for (Index i = 0; i < d; ++i) os << "f" << i << ",";
  os << label_column << "\n";
  for (const Example& e : data) {
    for (Index i = 0; i < d; ++i) os << e.features(i) << ",";
    os << (e.label == +1 ? positive_token : negative_token) << "\n";
  }
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  out << content;
  if (!out) throw InputError("failed while writing file: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace capfield
