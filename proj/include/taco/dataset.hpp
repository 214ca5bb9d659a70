#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taco/replay.hpp"

namespace taco {

// Episode file layout (little-endian):
//   magic "TACODS1\0" | version u32 | T u32 | C,H,W u32 | |A| u32 |
//   obs uint8 [(T+1)*C*H*W] | actions f32 [T*|A|] | rewards f32 [T] |
//   discounts f32 [T]
inline constexpr char kDatasetMagic[8] = {'T', 'A', 'C', 'O', 'D', 'S', '1', '\0'};
inline constexpr uint32_t kDatasetVersion = 1;

struct DatasetManifest {
  uint32_t version = kDatasetVersion;
  std::string env_id;
  std::array<int64_t, 3> obs_shape{0, 0, 0};  // C, H, W
  int64_t action_dim = 0;
  int64_t episode_count = 0;
  int64_t total_transitions = 0;
  std::string policy_tag = "custom";  // medium | medium-replay | full-replay | custom
  double best_online_return = 0.0;
};

namespace detail {
template <typename T>
void write_raw(std::ofstream& f, const T* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(sizeof(T) * n));
}
template <typename T>
void read_raw(std::ifstream& f, T* p, size_t n, const std::string& what) {
  f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(sizeof(T) * n));
  TACO_CHECK(f.gcount() == static_cast<std::streamsize>(sizeof(T) * n), DataError,
             "truncated episode file while reading " + what);
}
}  // namespace detail

inline void save_episode(const EpisodeRecord& ep, const std::string& path) {
  ep.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  TACO_CHECK(f.good(), DataError, "cannot open for write: " + path);
  detail::write_raw(f, kDatasetMagic, 8);
  const uint32_t version = kDatasetVersion;
  const uint32_t t = static_cast<uint32_t>(ep.length());
  const uint32_t shape[3] = {static_cast<uint32_t>(ep.observations.dim(1)),
                             static_cast<uint32_t>(ep.observations.dim(2)),
                             static_cast<uint32_t>(ep.observations.dim(3))};
  const uint32_t adim = static_cast<uint32_t>(ep.actions.dim(1));
  detail::write_raw(f, &version, 1);
  detail::write_raw(f, &t, 1);
  detail::write_raw(f, shape, 3);
  detail::write_raw(f, &adim, 1);
  detail::write_raw(f, ep.observations.data(), static_cast<size_t>(ep.observations.numel()));
  detail::write_raw(f, ep.actions.data(), static_cast<size_t>(ep.actions.numel()));
  detail::write_raw(f, ep.rewards.data(), static_cast<size_t>(ep.rewards.numel()));
  detail::write_raw(f, ep.discounts.data(), static_cast<size_t>(ep.discounts.numel()));
  TACO_CHECK(f.good(), DataError, "write failed: " + path);
}

inline EpisodeRecord load_episode(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TACO_CHECK(f.good(), DataError, "cannot open: " + path);
  char magic[8];
  detail::read_raw(f, magic, 8, "magic");
  TACO_CHECK(std::memcmp(magic, kDatasetMagic, 8) == 0, DataError,
             "bad magic in " + path);
  uint32_t version, t, shape[3], adim;
  detail::read_raw(f, &version, 1, "version");
  TACO_CHECK(version == kDatasetVersion, DataError, "unsupported episode version");
  detail::read_raw(f, &t, 1, "length");
  detail::read_raw(f, shape, 3, "obs shape");
  detail::read_raw(f, &adim, 1, "action dim");
  TACO_CHECK(t >= 1 && shape[0] >= 1 && shape[1] >= 1 && shape[2] >= 1 && adim >= 1,
             DataError, "corrupt header in " + path);
  EpisodeRecord ep;
  const int64_t tt = t, c = shape[0], h = shape[1], w = shape[2], a = adim;
  ep.observations = ByteTensor({tt + 1, c, h, w});
  ep.actions = TensorF({tt, a});
  ep.rewards = TensorF({tt});
  ep.discounts = TensorF({tt});
  detail::read_raw(f, ep.observations.data(), static_cast<size_t>(ep.observations.numel()), "observations");
  detail::read_raw(f, ep.actions.data(), static_cast<size_t>(ep.actions.numel()), "actions");
  detail::read_raw(f, ep.rewards.data(), static_cast<size_t>(ep.rewards.numel()), "rewards");
  detail::read_raw(f, ep.discounts.data(), static_cast<size_t>(ep.discounts.numel()), "discounts");
  ep.validate();
  return ep;
}

inline std::string episode_filename(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%06lld.bin", static_cast<long long>(index));
  return buf;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["version"] = m.version;
  j["env_id"] = m.env_id;
  j["obs_shape"] = m.obs_shape;
  j["action_dim"] = m.action_dim;
  j["episode_count"] = m.episode_count;
  j["total_transitions"] = m.total_transitions;
  j["policy_tag"] = m.policy_tag;
  j["best_online_return"] = m.best_online_return;
  std::ofstream f(path, std::ios::trunc);
  TACO_CHECK(f.good(), DataError, "cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  TACO_CHECK(f.good(), DataError, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<uint32_t>();
    m.env_id = j.at("env_id").get<std::string>();
    auto sh = j.at("obs_shape").get<std::vector<int64_t>>();
    TACO_CHECK(sh.size() == 3, DataError, "manifest obs_shape must have 3 entries");
    m.obs_shape = {sh[0], sh[1], sh[2]};
    m.action_dim = j.at("action_dim").get<int64_t>();
    m.episode_count = j.at("episode_count").get<int64_t>();
    m.total_transitions = j.at("total_transitions").get<int64_t>();
    m.policy_tag = j.at("policy_tag").get<std::string>();
    m.best_online_return = j.at("best_online_return").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest missing field: ") + e.what());
  }
  TACO_CHECK(m.version == kDatasetVersion, DataError, "unsupported manifest version");
  return m;
}

// Writes <dir>/manifest.json and <dir>/episodes/ep_NNNNNN.bin.
inline DatasetManifest save_dataset(const std::vector<EpisodeRecord>& episodes,
                                    const std::string& dir,
                                    const std::string& env_id,
                                    const std::string& policy_tag,
                                    double best_online_return) {
  TACO_CHECK(!episodes.empty(), UsageError, "save_dataset: no episodes");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "episodes");
  DatasetManifest m;
  m.env_id = env_id;
  m.policy_tag = policy_tag;
  m.best_online_return = best_online_return;
  m.episode_count = static_cast<int64_t>(episodes.size());
  m.obs_shape = {episodes[0].observations.dim(1), episodes[0].observations.dim(2),
                 episodes[0].observations.dim(3)};
  m.action_dim = episodes[0].actions.dim(1);
  for (size_t i = 0; i < episodes.size(); ++i) {
    m.total_transitions += episodes[i].length();
    save_episode(episodes[i],
                 (fs::path(dir) / "episodes" / episode_filename(static_cast<int64_t>(i))).string());
  }
  save_manifest(m, (fs::path(dir) / "manifest.json").string());
  return m;
}

inline std::pair<std::vector<EpisodeRecord>, DatasetManifest> load_dataset(
    const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetManifest m = load_manifest((fs::path(dir) / "manifest.json").string());
  std::vector<EpisodeRecord> eps;
  eps.reserve(static_cast<size_t>(m.episode_count));
  int64_t transitions = 0;
  for (int64_t i = 0; i < m.episode_count; ++i) {
    const auto p = fs::path(dir) / "episodes" / episode_filename(i);
    TACO_CHECK(fs::exists(p), DataError,
               "manifest/file disagreement: missing " + p.string());
    eps.push_back(load_episode(p.string()));
    transitions += eps.back().length();
    TACO_CHECK(eps.back().observations.dim(1) == m.obs_shape[0] &&
                   eps.back().observations.dim(2) == m.obs_shape[1] &&
                   eps.back().observations.dim(3) == m.obs_shape[2] &&
                   eps.back().actions.dim(1) == m.action_dim,
               DataError, "episode shape disagrees with manifest: " + p.string());
  }
  TACO_CHECK(transitions == m.total_transitions, DataError,
             "manifest transition count disagrees with episode files");
  return {std::move(eps), m};
}

}  // namespace taco
