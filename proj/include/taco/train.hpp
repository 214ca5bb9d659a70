#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "taco/checkpoint.hpp"
#include "taco/config.hpp"
#include "taco/dataset.hpp"
#include "taco/envs.hpp"
#include "taco/metrics.hpp"
#include "taco/replay.hpp"

namespace taco {

namespace fs = std::filesystem;

struct EvalPoint {
  int64_t frame = 0;
  double eval_return = 0.0;
};

struct TrainResult {
  double best_eval_return = 0.0;
  int64_t best_frame = 0;
  double final_eval_return = 0.0;
  int64_t frames = 0;
  int64_t episodes = 0;
  std::vector<EvalPoint> evals;
};

template <typename S>
double evaluate(Env& env, Agent<S>& agent, int64_t episodes, uint64_t seed,
                uint64_t round) {
  TACO_CHECK(episodes >= 1, UsageError, "need at least one eval episode");
  double total = 0.0;
  for (int64_t e = 0; e < episodes; ++e) {
    ByteTensor obs =
        env.reset(seed_stream(seed, 0x3A10000 + round * 1000 + static_cast<uint64_t>(e)));
    bool done = false;
    while (!done) {
      TensorF a = agent.act(obs, 0, /*eval_mode=*/true);
      StepResult sr = env.step(a);
      total += sr.reward;
      obs = sr.observation;
      done = sr.done;
    }
  }
  return total / static_cast<double>(episodes);
}

namespace detail {

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  TACO_CHECK(!ec, DataError, "cannot create directory: " + p.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  TACO_CHECK(f.good(), DataError, "cannot write: " + p.string());
  f << text;
}

inline void dump_diagnostic(const fs::path& out, int64_t frame, int64_t episode,
                            const std::string& what) {
  json j = {{"frame", frame}, {"episode", episode}, {"error", what}};
  write_text(out / "diagnostic.json", j.dump(2) + "\n");
}

// Rolls one episode with the frozen policy plus Gaussian action noise.
template <typename S>
EpisodeRecord record_episode(Env& env, Agent<S>& agent, uint64_t ep_seed,
                             double noise, Rng& noise_rng) {
  ByteTensor obs = env.reset(ep_seed);
  const int64_t adim = env.spec().action_dim;
  EpisodeBuilder builder;
  builder.start(obs);
  bool done = false;
  while (!done) {
    TensorF a = agent.act(obs, 0, /*eval_mode=*/true);
    for (int64_t i = 0; i < adim; ++i)
      a[i] = std::clamp(a[i] + static_cast<float>(noise_rng.normal(0.0, noise)),
                        -1.0f, 1.0f);
    StepResult sr = env.step(a);
    builder.step(a, static_cast<float>(sr.reward), 1.0f, sr.observation);
    obs = sr.observation;
    done = sr.done;
  }
  return builder.build();
}

}  // namespace detail

// Online actor-critic training with the auxiliary objectives attached.
// Writes config.json, metrics.csv, checkpoints/, final.json and (optionally)
// raw episodes under the output directory.
template <typename S = float>
TrainResult train_online(const RunConfig& cfg) {
  TACO_CHECK(!cfg.out.empty(), ConfigError, "online training needs an output dir");
  TACO_CHECK(cfg.agent.mask.any(), ConfigError,
             "at least one auxiliary objective must be enabled");
  cfg.agent.validate();

  const fs::path out(cfg.out);
  detail::ensure_dir(out);
  detail::ensure_dir(out / "checkpoints");
  if (cfg.collect.dump_episodes) detail::ensure_dir(out / "episodes_raw");
  cfg.save((out / "config.json").string());

  EnvOptions eopt;
  eopt.img_hw = cfg.img_hw;
  eopt.action_repeat = cfg.action_repeat;
  auto env = make_env(cfg.env, eopt);
  auto eval_env = make_env(cfg.env, eopt);
  const EnvSpec& spec = env->spec();

  ModelConfig mc = cfg.model_for(spec);
  Agent<S> agent(mc, cfg.agent, cfg.seed);
  ReplayBuffer replay(cfg.replay_capacity);
  MetricsLog metrics((out / "metrics.csv").string());

  Rng rng_warmup(seed_stream(cfg.seed, 0x3A4D));
  Rng rng_sample(seed_stream(cfg.seed, 0x0FF1));
  std::ofstream ep_index;
  if (cfg.collect.dump_episodes) {
    ep_index.open(out / "episodes.csv", std::ios::trunc);
    ep_index << "episode,start_frame,return\n";
  }

  const int64_t repeat = spec.action_repeat;
  const int64_t total_steps = (cfg.frames + repeat - 1) / repeat;
  int64_t episode_count = 0;
  int64_t episode_start_frame = 0;
  uint64_t eval_round = 0;
  int64_t next_eval = cfg.eval.every_frames;
  TrainResult result;
  result.best_eval_return = -std::numeric_limits<double>::infinity();
  LossMeter meter;
  int64_t cur_frame = 0;

  EpisodeBuilder builder;
  ByteTensor obs = env->reset(seed_stream(cfg.seed, 0x4590000));
  builder.start(obs);

  auto save_ckpt = [&](int64_t frame) {
    const fs::path p = out / "checkpoints" / ("ckpt_" + std::to_string(frame) + ".bin");
    save_checkpoint(agent.params(), cfg.to_json().dump(), p.string());
  };

  auto finish_episode = [&]() {
    EpisodeRecord rec = builder.build();
    if (cfg.collect.dump_episodes) {
      save_episode(rec, (out / "episodes_raw" / episode_filename(episode_count)).string());
      ep_index << episode_count << ',' << episode_start_frame << ','
               << detail::fmt_metric(rec.total_reward()) << "\n";
      ep_index.flush();
    }
    replay.add_episode(std::move(rec));
    ++episode_count;
  };

  try {
    for (int64_t step = 0; step < total_steps; ++step) {
      const int64_t frame = step * repeat;
      cur_frame = frame;
      TensorF a({spec.action_dim});
      if (frame < cfg.agent.warmup_frames) {
        for (int64_t i = 0; i < a.numel(); ++i)
          a[i] = static_cast<float>(rng_warmup.uniform(-1.0, 1.0));
      } else {
        a = agent.act(obs, frame, /*eval_mode=*/false);
      }
      StepResult sr = env->step(a);
      builder.step(a, static_cast<float>(sr.reward), 1.0f, sr.observation);
      obs = sr.observation;
      if (sr.done) {
        finish_episode();
        episode_start_frame = (step + 1) * repeat;
        obs = env->reset(
            seed_stream(cfg.seed, 0x4590000 + static_cast<uint64_t>(episode_count)));
        builder.start(obs);
      }

      if (frame >= cfg.agent.warmup_frames && replay.num_episodes() >= 1 &&
          step % cfg.agent.update_every == 0) {
        SequenceBatch<S> b = replay.sample_sequence_batch<S>(
            cfg.agent.batch, mc.k, cfg.agent.nstep, cfg.agent.gamma, rng_sample);
        const double lc = agent.update_critic(b, frame);
        const double la = agent.update_actor(b);
        LossBundle<S> lb = agent.update_taco(b);
        meter.add(lb.taco, lb.curl, lb.reward, lc, la, lb.pospair_acc,
                  lb.mi_estimate);
      }

      const int64_t frames_done = (step + 1) * repeat;
      if (frames_done >= next_eval || step + 1 == total_steps) {
        const double ret =
            evaluate(*eval_env, agent, cfg.eval.episodes, cfg.seed, eval_round++);
        MetricsRow row;
        row.frame = frames_done;
        row.episode = episode_count;
        row.eval_return = ret;
        meter.fill(row);
        meter.reset();
        metrics.append(row);
        save_ckpt(frames_done);
        result.evals.push_back({frames_done, ret});
        if (ret > result.best_eval_return) {
          result.best_eval_return = ret;
          result.best_frame = frames_done;
        }
        result.final_eval_return = ret;
        while (next_eval <= frames_done) next_eval += cfg.eval.every_frames;
      }
    }
  } catch (const NumericError& e) {
    detail::dump_diagnostic(out, cur_frame, episode_count, e.what());
    throw;
  }

  result.frames = total_steps * repeat;
  result.episodes = episode_count;
  json fin = {{"best_eval_return", result.best_eval_return},
              {"best_frame", result.best_frame},
              {"final_eval_return", result.final_eval_return},
              {"frames", result.frames},
              {"episodes", result.episodes}};
  detail::write_text(out / "final.json", fin.dump(2) + "\n");
  return result;
}

struct OfflineResult {
  double final_eval_return = 0.0;
  double final_normalized = 0.0;
  double best_normalized = 0.0;
  int64_t steps = 0;
};

// Offline training on a saved dataset: td3bc, cql, or bc, each optionally
// with the auxiliary objectives attached via the objective mask.
template <typename S = float>
OfflineResult train_offline(const RunConfig& cfg) {
  TACO_CHECK(!cfg.out.empty(), ConfigError, "offline training needs an output dir");
  TACO_CHECK(!cfg.offline.dataset.empty(), ConfigError, "offline training needs --dataset");
  const std::string& algo = cfg.offline.algo;
  TACO_CHECK(algo == "td3bc" || algo == "cql" || algo == "bc", ConfigError,
             "unknown offline algo: " + algo);
  cfg.agent.validate();

  auto [episodes, manifest] = load_dataset(cfg.offline.dataset);
  TACO_CHECK(manifest.best_online_return > 0.0, DataError,
             "dataset manifest lacks a positive best_online_return");

  const fs::path out(cfg.out);
  detail::ensure_dir(out);
  cfg.save((out / "config.json").string());

  EnvOptions eopt;
  eopt.img_hw = manifest.obs_shape[1];
  auto eval_env = make_env(manifest.env_id, eopt);
  const Shape& es = eval_env->spec().obs_shape;
  TACO_CHECK(es.size() == 3 && es[0] == manifest.obs_shape[0] &&
                 es[1] == manifest.obs_shape[1] && es[2] == manifest.obs_shape[2],
             DataError, "dataset observation shape does not match the environment");
  TACO_CHECK(eval_env->spec().action_dim == manifest.action_dim, DataError,
             "dataset action dim does not match the environment");

  RunConfig mcfg_src = cfg;
  mcfg_src.img_hw = manifest.obs_shape[1];
  ModelConfig mc = mcfg_src.model_for(eval_env->spec());
  Agent<S> agent(mc, cfg.agent, cfg.seed);

  int64_t total = 0;
  for (const auto& ep : episodes) total += ep.length();
  ReplayBuffer replay(total + 1);
  for (auto& ep : episodes) replay.add_episode(std::move(ep));

  MetricsLog metrics((out / "metrics.csv").string());
  Rng rng_sample(seed_stream(cfg.seed, 0x0FF2));
  const int64_t sigma_frame = cfg.agent.sigma_frames;  // pins sigma at sigma_end
  using Mode = typename Agent<S>::ActorMode;

  OfflineResult result;
  result.best_normalized = -std::numeric_limits<double>::infinity();
  LossMeter meter;
  uint64_t eval_round = 0;

  try {
    for (int64_t step = 1; step <= cfg.offline.steps; ++step) {
      SequenceBatch<S> b = replay.sample_sequence_batch<S>(
          cfg.agent.batch, mc.k, cfg.agent.nstep, cfg.agent.gamma, rng_sample);
      double lc = 0.0, la = 0.0;
      if (algo == "td3bc") {
        lc = agent.update_critic(b, sigma_frame);
        la = agent.update_actor(b, Mode::td3bc);
      } else if (algo == "cql") {
        lc = agent.update_critic(b, sigma_frame, cfg.agent.alpha_cql);
        la = agent.update_actor(b, Mode::online);
      } else {
        la = agent.update_actor(b, Mode::bc);
      }
      if (cfg.agent.mask.any()) {
        LossBundle<S> lb = agent.update_taco(b);
        meter.add(lb.taco, lb.curl, lb.reward, lc, la, lb.pospair_acc,
                  lb.mi_estimate);
      } else {
        meter.add(0.0, 0.0, 0.0, lc, la, 0.0, 0.0);
      }

      if (step % cfg.eval.every_frames == 0 || step == cfg.offline.steps) {
        const double ret =
            evaluate(*eval_env, agent, cfg.eval.episodes, cfg.seed, eval_round++);
        const double norm = ret / manifest.best_online_return;
        MetricsRow row;
        row.frame = step;
        row.episode = 0;
        row.eval_return = ret;
        meter.fill(row);
        meter.reset();
        metrics.append(row);
        result.final_eval_return = ret;
        result.final_normalized = norm;
        result.best_normalized = std::max(result.best_normalized, norm);
      }
    }
  } catch (const NumericError& e) {
    detail::dump_diagnostic(out, 0, 0, e.what());
    throw;
  }

  result.steps = cfg.offline.steps;
  save_checkpoint(agent.params(), cfg.to_json().dump(),
                  (out / "ckpt_final.bin").string());
  json fin = {{"final_eval_return", result.final_eval_return},
              {"final_normalized", result.final_normalized},
              {"best_normalized", result.best_normalized},
              {"steps", result.steps},
              {"algo", algo}};
  detail::write_text(out / "final.json", fin.dump(2) + "\n");
  return result;
}

namespace detail {

struct SourceEpisode {
  int64_t index = 0;
  int64_t start_frame = 0;
  double ret = 0.0;
};

inline std::vector<SourceEpisode> read_episode_index(const fs::path& run_dir) {
  std::ifstream in(run_dir / "episodes.csv");
  TACO_CHECK(in.good(), DataError,
             "source run has no episodes.csv (was it trained with episode "
             "dumping enabled?): " + run_dir.string());
  std::string line;
  TACO_CHECK(std::getline(in, line) && line == "episode,start_frame,return",
             DataError, "malformed episodes.csv header");
  std::vector<SourceEpisode> eps;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SourceEpisode e;
    char c;
    ss >> e.index >> c >> e.start_frame >> c >> e.ret;
    TACO_CHECK(!ss.fail(), DataError, "malformed episodes.csv row");
    eps.push_back(e);
  }
  TACO_CHECK(!eps.empty(), DataError, "source run recorded no episodes");
  return eps;
}

// Shuffles the candidate pool and loads episodes until the transition budget
// is met; the last episode is truncated to land exactly on `size`.
inline std::vector<EpisodeRecord> fill_from_pool(const fs::path& run_dir,
                                                 std::vector<SourceEpisode> pool,
                                                 int64_t size, Rng& rng) {
  TACO_CHECK(size >= 1, ConfigError, "dataset size must be >= 1");
  for (size_t i = pool.size(); i > 1; --i)
    std::swap(pool[i - 1], pool[rng.uniform_int(static_cast<int64_t>(i))]);
  std::vector<EpisodeRecord> out;
  int64_t have = 0;
  for (const auto& e : pool) {
    if (have >= size) break;
    EpisodeRecord ep =
        load_episode((run_dir / "episodes_raw" / episode_filename(e.index)).string());
    if (have + ep.length() > size) ep = truncate_episode(ep, size - have);
    have += ep.length();
    out.push_back(std::move(ep));
  }
  TACO_CHECK(have == size, DataError,
             "source run is too short for the requested dataset size");
  return out;
}

}  // namespace detail

// Builds an offline dataset from a finished online run (its run directory
// must contain episodes_raw/, episodes.csv, metrics.csv and checkpoints/).
template <typename S = float>
DatasetManifest build_offline_dataset(const std::string& source_run,
                                      const CollectConfig& cc,
                                      const std::string& out_dir, uint64_t seed) {
  const fs::path run_dir(source_run);
  RunConfig src = RunConfig::load((run_dir / "config.json").string());
  auto rows = MetricsLog::read((run_dir / "metrics.csv").string());
  TACO_CHECK(!rows.empty(), DataError, "source run has an empty metrics log");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) best = std::max(best, r.eval_return);
  TACO_CHECK(best > 0.0, DataError, "source run never achieved a positive return");

  Rng rng(seed_stream(seed, 0xC07C));
  std::vector<EpisodeRecord> eps;
  std::string tag = cc.kind;

  if (cc.kind == "full-replay") {
    eps = detail::fill_from_pool(run_dir, detail::read_episode_index(run_dir),
                                 cc.size, rng);
  } else if (cc.kind == "medium-replay") {
    int64_t cutoff = -1;
    for (const auto& r : rows)
      if (r.eval_return >= cc.medium_band_lo * best) {
        cutoff = r.frame;
        break;
      }
    TACO_CHECK(cutoff >= 0, DataError, "source run never reached the medium band");
    auto pool = detail::read_episode_index(run_dir);
    std::erase_if(pool, [&](const detail::SourceEpisode& e) {
      return e.start_frame > cutoff;
    });
    TACO_CHECK(!pool.empty(), DataError, "no episodes before the medium cutoff");
    eps = detail::fill_from_pool(run_dir, pool, cc.size, rng);
  } else if (cc.kind == "medium") {
    int64_t ckpt_frame = -1;
    for (const auto& r : rows)
      if (r.eval_return >= cc.medium_band_lo * best &&
          r.eval_return <= cc.medium_band_hi * best) {
        ckpt_frame = r.frame;
        break;
      }
    TACO_CHECK(ckpt_frame >= 0, DataError,
               "no checkpoint falls inside the medium performance band");
    EnvOptions eopt;
    eopt.img_hw = src.img_hw;
    auto env = make_env(src.env, eopt);
    ModelConfig mc = src.model_for(env->spec());
    Agent<S> agent(mc, src.agent, seed);
    load_checkpoint(agent.params(),
                    (run_dir / "checkpoints" /
                     ("ckpt_" + std::to_string(ckpt_frame) + ".bin"))
                        .string());
    Rng noise_rng(seed_stream(seed, 0x9015E));
    int64_t have = 0;
    uint64_t ep_idx = 0;
    while (have < cc.size) {
      EpisodeRecord rec = detail::record_episode(
          *env, agent, seed_stream(seed, 0x5000000 + ep_idx++), cc.policy_noise,
          noise_rng);
      if (have + rec.length() > cc.size) rec = truncate_episode(rec, cc.size - have);
      have += rec.length();
      eps.push_back(std::move(rec));
    }
  } else {
    throw ConfigError("unknown dataset kind: " + cc.kind);
  }

  return save_dataset(eps, out_dir, src.env, tag, best);
}

}  // namespace taco
