#pragma once

#include <map>
#include <string>
#include <vector>

#include "taco/train.hpp"

namespace taco {

// One varied axis, a value list, and a seed list; every (value, seed) pair
// becomes an independent run under the sweep output directory.
struct SweepSpec {
  std::string axis;  // k | batch | action_latent_dim | objective_mask | action_repeat
  std::vector<json> values;
  std::vector<uint64_t> seeds;
  RunConfig base;

  void validate() const {
    static const std::set<std::string> axes = {"k", "batch", "action_latent_dim",
                                               "objective_mask", "action_repeat"};
    TACO_CHECK(axes.count(axis) > 0, ConfigError, "unknown sweep axis: " + axis);
    TACO_CHECK(!values.empty(), ConfigError, "sweep needs at least one value");
    TACO_CHECK(seeds.size() >= 2, ConfigError, "sweep needs at least two seeds");
  }

  json to_json() const {
    return {{"axis", axis}, {"values", values}, {"seeds", seeds},
            {"base", base.to_json()}};
  }

  static SweepSpec from_json(const json& j) {
    detail::expect_keys(j, {"axis", "values", "seeds", "base"}, "sweep");
    SweepSpec s;
    s.axis = j.at("axis").get<std::string>();
    s.values = j.at("values").get<std::vector<json>>();
    s.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("base")) s.base = RunConfig::from_json(j.at("base"));
    s.validate();
    return s;
  }

  static SweepSpec load(const std::string& path) {
    std::ifstream f(path);
    TACO_CHECK(f.good(), ConfigError, "cannot open sweep spec: " + path);
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed sweep JSON: ") + e.what());
    }
    return from_json(j);
  }
};

inline std::string sweep_value_label(const json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  for (char& c : s)
    if (c == ',' || c == '/' || c == ' ') c = '+';
  return s;
}

inline RunConfig apply_sweep_axis(RunConfig cfg, const std::string& axis,
                                  const json& value) {
  if (axis == "k")
    cfg.k = value.get<int64_t>();
  else if (axis == "batch")
    cfg.agent.batch = value.get<int64_t>();
  else if (axis == "action_latent_dim")
    cfg.latent_action_override = value.get<int64_t>();
  else if (axis == "objective_mask")
    cfg.agent.mask = mask_from_string(value.get<std::string>());
  else if (axis == "action_repeat")
    cfg.action_repeat = value.get<int64_t>();
  else
    throw ConfigError("unknown sweep axis: " + axis);
  return cfg;
}

struct SweepRunResult {
  std::string value_label;
  uint64_t seed = 0;
  double final_eval = 0.0;
  double best_eval = 0.0;
  std::string run_dir;
};

// Runs the full cartesian product sequentially and writes aggregate.csv with
// one row per run plus one mean row per value.
template <typename S = float>
std::vector<SweepRunResult> run_sweep(const SweepSpec& spec,
                                      const std::string& out_dir) {
  spec.validate();
  detail::ensure_dir(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "sweep.json", std::ios::trunc);
    f << spec.to_json().dump(2) << "\n";
  }
  std::vector<SweepRunResult> results;
  for (const auto& v : spec.values) {
    const std::string label = sweep_value_label(v);
    for (uint64_t seed : spec.seeds) {
      RunConfig cfg = apply_sweep_axis(spec.base, spec.axis, v);
      cfg.seed = seed;
      cfg.out = (fs::path(out_dir) / (spec.axis + "_" + label) /
                 ("seed_" + std::to_string(seed)))
                    .string();
      TrainResult tr = train_online<S>(cfg);
      results.push_back({label, seed, tr.final_eval_return, tr.best_eval_return,
                         cfg.out});
    }
  }

  std::ofstream f(fs::path(out_dir) / "aggregate.csv", std::ios::trunc);
  TACO_CHECK(f.good(), DataError, "cannot write aggregate.csv");
  f << "axis,value,seed,final_eval,best_eval\n";
  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, int64_t> counts;
  for (const auto& r : results) {
    f << spec.axis << ',' << r.value_label << ',' << r.seed << ','
      << detail::fmt_metric(r.final_eval) << ',' << detail::fmt_metric(r.best_eval)
      << "\n";
    sums[r.value_label].first += r.final_eval;
    sums[r.value_label].second += r.best_eval;
    ++counts[r.value_label];
  }
  for (const auto& v : spec.values) {
    const std::string label = sweep_value_label(v);
    const double n = static_cast<double>(counts[label]);
    f << spec.axis << ',' << label << ",mean,"
      << detail::fmt_metric(sums[label].first / n) << ','
      << detail::fmt_metric(sums[label].second / n) << "\n";
  }
  return results;
}

}  // namespace taco
