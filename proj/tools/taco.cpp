#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "taco/taco.hpp"

namespace {

using namespace taco;

struct LoadedAgent {
  RunConfig rc;
  std::unique_ptr<Agent<float>> agent;
};

LoadedAgent agent_from_checkpoint(const std::string& ckpt) {
  LoadedAgent la;
  la.rc = RunConfig::from_json(json::parse(peek_checkpoint_config(ckpt)));
  EnvOptions eo;
  eo.img_hw = la.rc.img_hw;
  eo.action_repeat = la.rc.action_repeat;
  auto env = make_env(la.rc.env, eo);
  la.agent = std::make_unique<Agent<float>>(la.rc.model_for(env->spec()),
                                            la.rc.agent, la.rc.seed);
  load_checkpoint(la.agent->params(), ckpt);
  return la;
}

// Distracting wrappers advertise themselves as <base>_distract<n>.
int64_t distract_dims_of(const std::string& env_id) {
  const auto pos = env_id.rfind("_distract");
  if (pos == std::string::npos) return 0;
  try {
    return std::stoll(env_id.substr(pos + 9));
  } catch (...) {
    return 0;
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"taco: temporal action-driven contrastive RL laboratory"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- train ----
  auto* train = app.add_subcommand("train", "online training run");
  struct {
    std::string env, objectives, config, out;
    uint64_t seed = 0;
    int64_t frames = -1, k = -1, batch = -1, eval_every = -1;
    bool dump_episodes = false, desk = false;
  } tr;
  train->add_option("--env", tr.env, "environment id");
  train->add_option("--seed", tr.seed, "rng seed");
  train->add_option("--frames", tr.frames, "total raw frames");
  train->add_option("--k", tr.k, "prediction horizon");
  train->add_option("--batch-size", tr.batch, "update batch size");
  auto* tr_obj = train->add_option("--objectives", tr.objectives,
                                   "comma list: taco,curl,reward");
  train->add_option("--config", tr.config, "config JSON file");
  train->add_option("--out", tr.out, "output run directory");
  train->add_option("--eval-every", tr.eval_every, "frames between evals");
  train->add_flag("--dump-episodes", tr.dump_episodes,
                  "save every episode for offline dataset building");
  train->add_flag("--desk", tr.desk, "compact single-core preset");
  train->callback([&] {
    RunConfig cfg = tr.config.empty() ? RunConfig{} : RunConfig::load(tr.config);
    if (tr.desk) cfg = cfg.with_desk_preset();
    if (train->count("--env")) cfg.env = tr.env;
    if (train->count("--seed")) cfg.seed = tr.seed;
    if (tr.frames >= 0) cfg.frames = tr.frames;
    if (tr.k >= 0) cfg.k = tr.k;
    if (tr.batch >= 0) cfg.agent.batch = tr.batch;
    if (tr.eval_every >= 0) cfg.eval.every_frames = tr.eval_every;
    if (tr_obj->count()) cfg.agent.mask = mask_from_string(tr.objectives);
    if (train->count("--out")) cfg.out = tr.out;
    if (tr.dump_episodes) cfg.collect.dump_episodes = true;
    cfg.mode = "online";
    TrainResult res = train_online<float>(cfg);
    std::printf("done: frames=%lld episodes=%lld best=%.4f final=%.4f\n",
                static_cast<long long>(res.frames),
                static_cast<long long>(res.episodes), res.best_eval_return,
                res.final_eval_return);
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  struct {
    std::string ckpt, env;
    int64_t episodes = 10;
    uint64_t seed = 0;
  } ve;
  ev->add_option("--checkpoint", ve.ckpt, "checkpoint file")->required();
  ev->add_option("--episodes", ve.episodes, "evaluation episodes");
  ev->add_option("--seed", ve.seed, "rng seed");
  ev->callback([&] {
    LoadedAgent la = agent_from_checkpoint(ve.ckpt);
    EnvOptions eo;
    eo.img_hw = la.rc.img_hw;
    eo.action_repeat = la.rc.action_repeat;
    auto env = make_env(la.rc.env, eo);
    const double ret = evaluate(*env, *la.agent, ve.episodes, ve.seed, 0);
    std::printf("eval_return=%.6f over %lld episodes\n", ret,
                static_cast<long long>(ve.episodes));
  });

  // ---- collect-dataset ----
  auto* co = app.add_subcommand("collect-dataset",
                                "build an offline dataset from a finished run");
  struct {
    std::string source, out, kind = "full-replay";
    int64_t size = 20000;
    uint64_t seed = 0;
    double noise = 0.1, band_lo = 0.4, band_hi = 0.6;
  } cd;
  co->add_option("--source", cd.source, "source run directory")->required();
  co->add_option("--out", cd.out, "dataset output directory")->required();
  co->add_option("--kind", cd.kind, "medium | medium-replay | full-replay");
  co->add_option("--size", cd.size, "transitions in the dataset");
  co->add_option("--seed", cd.seed, "rng seed");
  co->add_option("--noise", cd.noise, "medium policy exploration noise");
  co->add_option("--band-lo", cd.band_lo, "medium band lower fraction");
  co->add_option("--band-hi", cd.band_hi, "medium band upper fraction");
  co->callback([&] {
    CollectConfig cc;
    cc.kind = cd.kind;
    cc.size = cd.size;
    cc.policy_noise = cd.noise;
    cc.medium_band_lo = cd.band_lo;
    cc.medium_band_hi = cd.band_hi;
    DatasetManifest m = build_offline_dataset<float>(cd.source, cc, cd.out, cd.seed);
    std::printf("dataset: %lld episodes, %lld transitions, tag=%s, best=%.4f\n",
                static_cast<long long>(m.episode_count),
                static_cast<long long>(m.total_transitions), m.policy_tag.c_str(),
                m.best_online_return);
  });

  // ---- offline-train ----
  auto* off = app.add_subcommand("offline-train", "train on a saved dataset");
  struct {
    std::string dataset, algo = "td3bc", objectives, config, out;
    uint64_t seed = 0;
    int64_t steps = -1, k = -1, batch = -1, eval_every = -1;
    double alpha = -1.0;
    bool desk = false;
  } of;
  off->add_option("--dataset", of.dataset, "dataset directory")->required();
  off->add_option("--algo", of.algo, "td3bc | cql | bc");
  off->add_option("--alpha", of.alpha, "td3bc / cql regularizer strength");
  auto* of_obj = off->add_option("--objectives", of.objectives,
                                 "comma list: taco,curl,reward (default none)");
  off->add_option("--config", of.config, "config JSON file");
  off->add_option("--out", of.out, "output run directory")->required();
  off->add_option("--seed", of.seed, "rng seed");
  off->add_option("--steps", of.steps, "gradient steps");
  off->add_option("--k", of.k, "prediction horizon");
  off->add_option("--batch-size", of.batch, "update batch size");
  off->add_option("--eval-every", of.eval_every, "steps between evals");
  off->add_flag("--desk", of.desk, "compact single-core preset");
  off->callback([&] {
    RunConfig cfg = of.config.empty() ? RunConfig{} : RunConfig::load(of.config);
    if (of.desk) cfg = cfg.with_desk_preset();
    cfg.mode = "offline";
    cfg.offline.dataset = of.dataset;
    cfg.offline.algo = of.algo;
    cfg.out = of.out;
    if (off->count("--seed")) cfg.seed = of.seed;
    if (of.steps >= 0) cfg.offline.steps = of.steps;
    if (of.k >= 0) cfg.k = of.k;
    if (of.batch >= 0) cfg.agent.batch = of.batch;
    if (of.eval_every >= 0) cfg.eval.every_frames = of.eval_every;
    cfg.agent.mask = of_obj->count() ? mask_from_string(of.objectives)
                                     : ObjectiveMask{false, false, false};
    if (of.alpha > 0) {
      if (of.algo == "cql")
        cfg.agent.alpha_cql = of.alpha;
      else
        cfg.agent.alpha_td3bc = of.alpha;
    }
    OfflineResult res = train_offline<float>(cfg);
    std::printf("done: steps=%lld final_return=%.4f normalized=%.4f best_norm=%.4f\n",
                static_cast<long long>(res.steps), res.final_eval_return,
                res.final_normalized, res.best_normalized);
  });

  // ---- sweep ----
  auto* sw = app.add_subcommand("sweep", "axis x seeds grid of online runs");
  struct {
    std::string spec, out;
  } sp;
  sw->add_option("--spec", sp.spec, "sweep spec JSON")->required();
  sw->add_option("--out", sp.out, "sweep output directory")->required();
  sw->callback([&] {
    SweepSpec spec = SweepSpec::load(sp.spec);
    auto results = run_sweep<float>(spec, sp.out);
    std::printf("sweep done: %lld runs, aggregate at %s/aggregate.csv\n",
                static_cast<long long>(results.size()), sp.out.c_str());
  });

  // ---- analyze-actions ----
  auto* an = app.add_subcommand("analyze-actions",
                                "latent action-space cluster analysis");
  struct {
    std::string ckpt, env, out;
    int64_t centroids = 4, samples = 200, base_dims = -1;
    double sigma = 1.0;
    uint64_t seed = 0;
  } aa;
  an->add_option("--checkpoint", aa.ckpt, "checkpoint file")->required();
  an->add_option("--env", aa.env, "env id (default: checkpoint's env)");
  an->add_option("--centroids", aa.centroids, "base actions");
  an->add_option("--samples", aa.samples, "samples per base action");
  an->add_option("--sigma", aa.sigma, "noise sigma on distracting dims");
  an->add_option("--base-dims", aa.base_dims,
                 "non-distracting action dims (default: inferred from env id)");
  an->add_option("--seed", aa.seed, "rng seed");
  an->add_option("--out", aa.out, "scatter CSV path");
  an->callback([&] {
    LoadedAgent la = agent_from_checkpoint(aa.ckpt);
    const std::string env_id = an->count("--env") ? aa.env : la.rc.env;
    EnvOptions eo;
    eo.img_hw = la.rc.img_hw;
    auto env = make_env(env_id, eo);
    const int64_t adim = env->spec().action_dim;
    int64_t base = aa.base_dims;
    if (base < 0) base = adim - distract_dims_of(env_id);
    ActionClusterReport rep =
        analyze_actions(la.agent->nets(), adim, base, aa.centroids, aa.samples,
                        aa.sigma, aa.seed, aa.out);
    std::printf("purity_raw=%.4f purity_latent=%.4f ratio_raw=%.4f "
                "ratio_latent=%.4f\n",
                rep.purity_raw, rep.purity_latent, rep.ratio_raw, rep.ratio_latent);
  });

  // ---- check-theorem1 ----
  auto* th = app.add_subcommand("check-theorem1",
                                "duplicated-action Q-gap check on the grid task");
  struct {
    std::string ckpt, csv;
  } t1;
  th->add_option("--checkpoint", t1.ckpt, "checkpoint file")->required();
  th->add_option("--out", t1.csv, "per-pair CSV path");
  th->callback([&] {
    LoadedAgent la = agent_from_checkpoint(t1.ckpt);
    TACO_CHECK(la.rc.env == "dup_action_grid", ConfigError,
               "check-theorem1 expects a dup_action_grid checkpoint");
    GridEnv::Params p;
    if (la.rc.img_hw > 0) p.img_hw = la.rc.img_hw;
    GridEnv env(p);
    Theorem1Report rep =
        check_theorem1(*la.agent, env, la.rc.agent.gamma, t1.csv);
    std::printf("mean_q_gap=%.6f max_q_gap=%.6f mean_psi_gap=%.6f "
                "q_star_spread=%.6f verdict=%s\n",
                rep.mean_q_gap, rep.max_q_gap, rep.mean_psi_gap, rep.q_star_spread,
                rep.pass() ? "PASS" : "FAIL");
    if (!rep.pass()) exit_code = 1;
  });

  // ---- plot ----
  auto* pl = app.add_subcommand("plot", "learning-curve figure for runs");
  struct {
    std::vector<std::string> runs;
    std::string out;
  } pf;
  pl->add_option("--runs", pf.runs, "run directories")->required()->expected(-1);
  pl->add_option("--out", pf.out, "output PNG path")->required();
  pl->callback([&] { plot_runs(pf.runs, pf.out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const taco::NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 3;
  } catch (const taco::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const taco::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const taco::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
