#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "taco/agent.hpp"
#include "taco/env.hpp"

namespace taco {

using nlohmann::json;

namespace detail {
inline void expect_keys(const json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
  TACO_CHECK(j.is_object(), ConfigError, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    TACO_CHECK(allowed.count(it.key()) > 0, ConfigError,
               "unknown config key '" + it.key() + "' in " + where);
}
template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

inline json mask_to_json(const ObjectiveMask& m) {
  json a = json::array();
  if (m.taco) a.push_back("taco");
  if (m.curl) a.push_back("curl");
  if (m.reward) a.push_back("reward");
  return a;
}

inline ObjectiveMask mask_from_json(const json& a) {
  TACO_CHECK(a.is_array(), ConfigError, "objectives must be an array");
  ObjectiveMask m{false, false, false};
  for (const auto& v : a) {
    const std::string s = v.get<std::string>();
    if (s == "taco")
      m.taco = true;
    else if (s == "curl")
      m.curl = true;
    else if (s == "reward")
      m.reward = true;
    else
      throw ConfigError("unknown objective '" + s + "'");
  }
  return m;
}

// Parses "taco,curl,reward" (empty string disables everything).
inline ObjectiveMask mask_from_string(const std::string& csv) {
  json a = json::array();
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) a.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  return mask_from_json(a);
}

struct EvalConfig {
  int64_t every_frames = 5000;
  int64_t episodes = 10;
};

struct OfflineConfig {
  std::string dataset;
  std::string algo = "td3bc";  // td3bc | cql | bc
  int64_t steps = 20000;
};

struct CollectConfig {
  bool dump_episodes = false;   // online runs: write every episode to disk
  std::string kind = "full-replay";
  int64_t size = 20000;
  double medium_band_lo = 0.4;  // medium checkpoint: eval return within
  double medium_band_hi = 0.6;  //   [lo, hi] x best return
  double policy_noise = 0.1;    // exploration noise of the frozen medium policy
};

// The full experiment definition. Serializes to nested JSON losslessly;
// unknown keys are rejected so typos fail loudly.
struct RunConfig {
  std::string env = "point_mass";
  uint64_t seed = 0;
  int64_t frames = 50000;
  std::string mode = "online";  // online | offline | collect | analyze
  std::string out;
  int64_t action_repeat = 0;  // 0 keeps the environment's default

  // model widths; 0 means "use the environment default"
  int64_t img_hw = 0;
  int64_t frame_stack = 0;
  int64_t conv_channels = 32;
  int64_t conv_layers = 4;
  int64_t hidden_dim = 1024;
  int64_t feature_dim = 50;
  int64_t contrastive_dim = 100;
  int64_t seq_embed_dim = 50;
  int64_t latent_action_override = 0;  // 0 keeps ceil(1.25 |A|)

  AgentConfig agent;  // includes k via model? no: k lives here
  int64_t k = 3;

  int64_t replay_capacity = 100000;
  EvalConfig eval;
  int64_t checkpoint_every_frames = 0;  // 0: checkpoint at every eval
  OfflineConfig offline;
  CollectConfig collect;

  json to_json() const {
    json j;
    j["env"] = env;
    j["seed"] = seed;
    j["frames"] = frames;
    j["mode"] = mode;
    j["out"] = out;
    j["action_repeat"] = action_repeat;
    j["model"] = {{"img_hw", img_hw},
                  {"frame_stack", frame_stack},
                  {"conv_channels", conv_channels},
                  {"conv_layers", conv_layers},
                  {"hidden_dim", hidden_dim},
                  {"feature_dim", feature_dim},
                  {"contrastive_dim", contrastive_dim},
                  {"seq_embed_dim", seq_embed_dim},
                  {"latent_action_override", latent_action_override}};
    j["agent"] = {{"k", k},
                  {"gamma", agent.gamma},
                  {"nstep", agent.nstep},
                  {"tau", agent.tau},
                  {"lr", agent.lr},
                  {"batch", agent.batch},
                  {"sigma_start", agent.sigma_start},
                  {"sigma_end", agent.sigma_end},
                  {"sigma_frames", agent.sigma_frames},
                  {"noise_clip", agent.noise_clip},
                  {"update_every", agent.update_every},
                  {"warmup_frames", agent.warmup_frames},
                  {"aug_pad", agent.aug_pad},
                  {"objectives", mask_to_json(agent.mask)},
                  {"alpha_td3bc", agent.alpha_td3bc},
                  {"alpha_cql", agent.alpha_cql},
                  {"cql_m", agent.cql_m}};
    j["replay"] = {{"capacity", replay_capacity}};
    j["eval"] = {{"every_frames", eval.every_frames}, {"episodes", eval.episodes}};
    j["checkpoint_every_frames"] = checkpoint_every_frames;
    j["offline"] = {{"dataset", offline.dataset},
                    {"algo", offline.algo},
                    {"steps", offline.steps}};
    j["collect"] = {{"dump_episodes", collect.dump_episodes},
                    {"kind", collect.kind},
                    {"size", collect.size},
                    {"medium_band_lo", collect.medium_band_lo},
                    {"medium_band_hi", collect.medium_band_hi},
                    {"policy_noise", collect.policy_noise}};
    return j;
  }

  static RunConfig from_json(const json& j) {
    detail::expect_keys(j,
                        {"env", "seed", "frames", "mode", "out", "action_repeat",
                         "model", "agent", "replay", "eval",
                         "checkpoint_every_frames", "offline", "collect"},
                        "config");
    RunConfig c;
    detail::maybe(j, "env", c.env);
    detail::maybe(j, "seed", c.seed);
    detail::maybe(j, "frames", c.frames);
    detail::maybe(j, "mode", c.mode);
    detail::maybe(j, "out", c.out);
    detail::maybe(j, "action_repeat", c.action_repeat);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::expect_keys(m,
                          {"img_hw", "frame_stack", "conv_channels", "conv_layers",
                           "hidden_dim", "feature_dim", "contrastive_dim",
                           "seq_embed_dim", "latent_action_override"},
                          "config.model");
      detail::maybe(m, "img_hw", c.img_hw);
      detail::maybe(m, "frame_stack", c.frame_stack);
      detail::maybe(m, "conv_channels", c.conv_channels);
      detail::maybe(m, "conv_layers", c.conv_layers);
      detail::maybe(m, "hidden_dim", c.hidden_dim);
      detail::maybe(m, "feature_dim", c.feature_dim);
      detail::maybe(m, "contrastive_dim", c.contrastive_dim);
      detail::maybe(m, "seq_embed_dim", c.seq_embed_dim);
      detail::maybe(m, "latent_action_override", c.latent_action_override);
    }
    if (j.contains("agent")) {
      const auto& a = j.at("agent");
      detail::expect_keys(
          a, {"k", "gamma", "nstep", "tau", "lr", "batch", "sigma_start",
              "sigma_end", "sigma_frames", "noise_clip", "update_every",
              "warmup_frames", "aug_pad", "objectives", "alpha_td3bc",
              "alpha_cql", "cql_m"},
          "config.agent");
      detail::maybe(a, "k", c.k);
      detail::maybe(a, "gamma", c.agent.gamma);
      detail::maybe(a, "nstep", c.agent.nstep);
      detail::maybe(a, "tau", c.agent.tau);
      detail::maybe(a, "lr", c.agent.lr);
      detail::maybe(a, "batch", c.agent.batch);
      detail::maybe(a, "sigma_start", c.agent.sigma_start);
      detail::maybe(a, "sigma_end", c.agent.sigma_end);
      detail::maybe(a, "sigma_frames", c.agent.sigma_frames);
      detail::maybe(a, "noise_clip", c.agent.noise_clip);
      detail::maybe(a, "update_every", c.agent.update_every);
      detail::maybe(a, "warmup_frames", c.agent.warmup_frames);
      detail::maybe(a, "aug_pad", c.agent.aug_pad);
      if (a.contains("objectives")) c.agent.mask = mask_from_json(a.at("objectives"));
      detail::maybe(a, "alpha_td3bc", c.agent.alpha_td3bc);
      detail::maybe(a, "alpha_cql", c.agent.alpha_cql);
      detail::maybe(a, "cql_m", c.agent.cql_m);
    }
    if (j.contains("replay")) {
      detail::expect_keys(j.at("replay"), {"capacity"}, "config.replay");
      detail::maybe(j.at("replay"), "capacity", c.replay_capacity);
    }
    if (j.contains("eval")) {
      detail::expect_keys(j.at("eval"), {"every_frames", "episodes"}, "config.eval");
      detail::maybe(j.at("eval"), "every_frames", c.eval.every_frames);
      detail::maybe(j.at("eval"), "episodes", c.eval.episodes);
    }
    detail::maybe(j, "checkpoint_every_frames", c.checkpoint_every_frames);
    if (j.contains("offline")) {
      detail::expect_keys(j.at("offline"), {"dataset", "algo", "steps"},
                          "config.offline");
      detail::maybe(j.at("offline"), "dataset", c.offline.dataset);
      detail::maybe(j.at("offline"), "algo", c.offline.algo);
      detail::maybe(j.at("offline"), "steps", c.offline.steps);
    }
    if (j.contains("collect")) {
      const auto& k = j.at("collect");
      detail::expect_keys(k,
                          {"dump_episodes", "kind", "size", "medium_band_lo",
                           "medium_band_hi", "policy_noise"},
                          "config.collect");
      detail::maybe(k, "dump_episodes", c.collect.dump_episodes);
      detail::maybe(k, "kind", c.collect.kind);
      detail::maybe(k, "size", c.collect.size);
      detail::maybe(k, "medium_band_lo", c.collect.medium_band_lo);
      detail::maybe(k, "medium_band_hi", c.collect.medium_band_hi);
      detail::maybe(k, "policy_noise", c.collect.policy_noise);
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    TACO_CHECK(f.good(), ConfigError, "cannot open config: " + path);
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    TACO_CHECK(f.good(), ConfigError, "cannot write config: " + path);
    f << to_json().dump(2) << "\n";
  }

  // Merge environment-derived dimensions into a ModelConfig.
  ModelConfig model_for(const EnvSpec& spec) const {
    ModelConfig mc;
    mc.frame_stack = frame_stack > 0 ? frame_stack : spec.frame_stack;
    mc.img_hw = img_hw > 0 ? img_hw : spec.obs_shape[1];
    mc.img_channels = spec.obs_shape[0] / spec.frame_stack;
    mc.conv_channels = conv_channels;
    mc.conv_layers = conv_layers;
    mc.hidden_dim = hidden_dim;
    mc.feature_dim = feature_dim;
    mc.contrastive_dim = contrastive_dim;
    mc.seq_embed_dim = seq_embed_dim;
    mc.action_dim = spec.action_dim;
    mc.k = k;
    mc.latent_action_override = latent_action_override;
    return mc;
  }

  // Compact widths and batch for fast single-core runs; learning-dynamics
  // parameters stay at their defaults.
  RunConfig with_desk_preset() const {
    RunConfig c = *this;
    c.img_hw = 16;
    c.conv_channels = 8;
    c.conv_layers = 2;
    c.hidden_dim = 64;
    c.contrastive_dim = 64;
    c.agent.batch = 32;
    c.agent.aug_pad = 2;
    return c;
  }
};

}  // namespace taco
