#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "taco/agent.hpp"
#include "taco/grid_mdp.hpp"
#include "taco/metrics.hpp"

namespace taco {

struct KMeansResult {
  TensorD centroids;         // [k, d]
  std::vector<int> assign;   // [n]
  double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// Lloyd iterations from a maximin (farthest-point) init whose first pick is
// random. Empty clusters grab the point farthest from its current centroid.
inline KMeansResult kmeans_once(const TensorD& x, int64_t k, uint64_t seed) {
  const int64_t n = x.dim(0), d = x.dim(1);
  TACO_CHECK(k >= 1 && k <= n, UsageError, "kmeans: need 1 <= k <= n");
  Rng rng(seed);
  KMeansResult res;
  res.centroids = TensorD({k, d});
  std::vector<int64_t> chosen;
  chosen.push_back(rng.uniform_int(n));
  std::vector<double> best_d(n, std::numeric_limits<double>::infinity());
  while (static_cast<int64_t>(chosen.size()) < k) {
    const double* c = x.data() + chosen.back() * d;
    int64_t far = 0;
    double far_d = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      best_d[i] = std::min(best_d[i], sq_dist(x.data() + i * d, c, d));
      if (best_d[i] > far_d) {
        far_d = best_d[i];
        far = i;
      }
    }
    chosen.push_back(far);
  }
  for (int64_t j = 0; j < k; ++j)
    std::copy_n(x.data() + chosen[static_cast<size_t>(j)] * d, d,
                res.centroids.data() + j * d);

  res.assign.assign(static_cast<size_t>(n), 0);
  std::vector<double> sums(static_cast<size_t>(k * d));
  std::vector<int64_t> counts(static_cast<size_t>(k));
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int64_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < k; ++j) {
        const double dist = sq_dist(x.data() + i * d, res.centroids.data() + j * d, d);
        if (dist < bd) {
          bd = dist;
          best = static_cast<int>(j);
        }
      }
      if (res.assign[static_cast<size_t>(i)] != best) changed = true;
      res.assign[static_cast<size_t>(i)] = best;
    }
    if (!changed && iter > 0) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int64_t i = 0; i < n; ++i) {
      const int j = res.assign[static_cast<size_t>(i)];
      ++counts[static_cast<size_t>(j)];
      for (int64_t a = 0; a < d; ++a) sums[static_cast<size_t>(j * d + a)] += x[i * d + a];
    }
    for (int64_t j = 0; j < k; ++j) {
      if (counts[static_cast<size_t>(j)] == 0) {
        int64_t far = 0;
        double far_d = -1.0;
        for (int64_t i = 0; i < n; ++i) {
          const int cj = res.assign[static_cast<size_t>(i)];
          const double dist =
              sq_dist(x.data() + i * d, res.centroids.data() + cj * d, d);
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        std::copy_n(x.data() + far * d, d, res.centroids.data() + j * d);
        res.assign[static_cast<size_t>(far)] = static_cast<int>(j);
      } else {
        for (int64_t a = 0; a < d; ++a)
          res.centroids[j * d + a] =
              sums[static_cast<size_t>(j * d + a)] / counts[static_cast<size_t>(j)];
      }
    }
  }
  res.inertia = 0.0;
  for (int64_t i = 0; i < n; ++i)
    res.inertia += sq_dist(x.data() + i * d,
                           res.centroids.data() + res.assign[static_cast<size_t>(i)] * d, d);
  return res;
}

}  // namespace detail

// Best of `restarts` Lloyd runs; restart r draws its init from stream r.
inline KMeansResult kmeans(const TensorD& x, int64_t k, int64_t restarts,
                           uint64_t seed) {
  TACO_CHECK(restarts >= 1, UsageError, "kmeans: restarts must be >= 1");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int64_t r = 0; r < restarts; ++r) {
    KMeansResult cur = detail::kmeans_once(x, k, seed_stream(seed, static_cast<uint64_t>(r)));
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

// Fraction of samples whose cluster's majority generating label matches
// their own.
inline double cluster_purity(const std::vector<int>& assign,
                             const std::vector<int>& labels, int64_t k) {
  TACO_CHECK(assign.size() == labels.size() && !assign.empty(), UsageError,
             "purity: size mismatch");
  int64_t n_labels = 0;
  for (int l : labels) n_labels = std::max<int64_t>(n_labels, l + 1);
  std::vector<int64_t> table(static_cast<size_t>(k * n_labels), 0);
  for (size_t i = 0; i < assign.size(); ++i)
    ++table[static_cast<size_t>(assign[i] * n_labels + labels[i])];
  int64_t correct = 0;
  for (int64_t c = 0; c < k; ++c) {
    int64_t best = 0;
    for (int64_t l = 0; l < n_labels; ++l)
      best = std::max(best, table[static_cast<size_t>(c * n_labels + l)]);
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(assign.size());
}

// Mean distance to the true-label centroid, over the mean pairwise distance
// between true-label centroids.
inline double within_between_ratio(const TensorD& x, const std::vector<int>& labels,
                                   int64_t k) {
  const int64_t n = x.dim(0), d = x.dim(1);
  TACO_CHECK(static_cast<int64_t>(labels.size()) == n, UsageError,
             "ratio: label count mismatch");
  TensorD cent({k, d});
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int64_t i = 0; i < n; ++i) {
    const int l = labels[static_cast<size_t>(i)];
    ++counts[static_cast<size_t>(l)];
    for (int64_t a = 0; a < d; ++a) cent[l * d + a] += x[i * d + a];
  }
  for (int64_t j = 0; j < k; ++j) {
    TACO_CHECK(counts[static_cast<size_t>(j)] > 0, UsageError, "ratio: empty label class");
    for (int64_t a = 0; a < d; ++a) cent[j * d + a] /= counts[static_cast<size_t>(j)];
  }
  double within = 0.0;
  for (int64_t i = 0; i < n; ++i)
    within += std::sqrt(detail::sq_dist(
        x.data() + i * d, cent.data() + labels[static_cast<size_t>(i)] * d, d));
  within /= static_cast<double>(n);
  double between = 0.0;
  int64_t pairs = 0;
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = i + 1; j < k; ++j) {
      between += std::sqrt(detail::sq_dist(cent.data() + i * d, cent.data() + j * d, d));
      ++pairs;
    }
  TACO_CHECK(pairs > 0, UsageError, "ratio: need at least two label classes");
  between /= static_cast<double>(pairs);
  if (between < 1e-12) return std::numeric_limits<double>::infinity();
  return within / between;
}

// Projection onto the two leading principal components, sign-fixed so the
// largest-magnitude loading of each component is positive.
inline TensorD pca2(const TensorD& x) {
  const int64_t n = x.dim(0), d = x.dim(1);
  TACO_CHECK(n >= 2 && d >= 1, UsageError, "pca2: need n >= 2");
  Eigen::MatrixXd m(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) m(i, j) = x[i * d + j];
  m.rowwise() -= m.colwise().mean();
  Eigen::MatrixXd cov = m.transpose() * m / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  TACO_CHECK(es.info() == Eigen::Success, NumericError, "pca2: eigensolver failed");
  TensorD out({n, 2});
  for (int64_t comp = 0; comp < 2; ++comp) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    if (comp < d) v = es.eigenvectors().col(d - 1 - comp);
    int64_t arg = 0;
    for (int64_t j = 1; j < d; ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    Eigen::VectorXd proj = m * v;
    for (int64_t i = 0; i < n; ++i) out[i * 2 + comp] = proj(i);
  }
  return out;
}

struct ActionClusterReport {
  int64_t centroids = 0;
  int64_t samples_per = 0;
  double sigma = 0.0;
  double purity_raw = 0.0;
  double purity_latent = 0.0;
  double ratio_raw = 0.0;
  double ratio_latent = 0.0;
};

// Draws `centroids` base actions, jitters only the distracting dimensions
// (indices >= base_dim), embeds through the action encoder, and clusters in
// both raw and latent space.
template <typename S>
ActionClusterReport analyze_actions(const TacoNets<S>& nets, int64_t action_dim,
                                    int64_t base_dim, int64_t centroids,
                                    int64_t samples_per, double sigma,
                                    uint64_t seed, const std::string& out_csv = "") {
  TACO_CHECK(action_dim >= 1 && base_dim >= 1 && base_dim <= action_dim, UsageError,
             "analyze_actions: bad action dims");
  TACO_CHECK(centroids >= 2 && samples_per >= 1, UsageError,
             "analyze_actions: need >= 2 centroids and >= 1 sample");
  TACO_CHECK(nets.cfg().action_dim == action_dim, ConfigError,
             "checkpoint action dim does not match the environment");
  TACO_CHECK(sigma >= 0.0, UsageError, "analyze_actions: sigma must be >= 0");

  Rng rng(seed_stream(seed, 0xACE5));
  const int64_t n = centroids * samples_per;
  const int64_t u = nets.cfg().latent_action_dim();
  TensorD raw({n, action_dim});
  TensorD lat({n, u});
  std::vector<int> labels(static_cast<size_t>(n));

  // Cluster identity lives in the controlled dims only; the distracting dims
  // carry per-sample noise around a common baseline. Bases are re-drawn until
  // all pairs are at least unit distance apart so clusters are distinct.
  TensorD bases({centroids, action_dim});
  for (int64_t c = 0; c < centroids; ++c) {
    for (int64_t attempt = 0;; ++attempt) {
      TACO_CHECK(attempt < 10000, NumericError,
                 "analyze_actions: could not place separated base actions");
      for (int64_t dd = 0; dd < base_dim; ++dd)
        bases[c * action_dim + dd] = rng.uniform(-1.0, 1.0);
      bool ok = true;
      for (int64_t c2 = 0; c2 < c && ok; ++c2) {
        double d2 = 0.0;
        for (int64_t dd = 0; dd < base_dim; ++dd) {
          const double diff = bases[c * action_dim + dd] - bases[c2 * action_dim + dd];
          d2 += diff * diff;
        }
        ok = d2 >= 1.0;
      }
      if (ok) break;
    }
  }

  for (int64_t c = 0; c < centroids; ++c) {
    for (int64_t m = 0; m < samples_per; ++m) {
      const int64_t row = c * samples_per + m;
      labels[static_cast<size_t>(row)] = static_cast<int>(c);
      Tensor<S> a({action_dim});
      for (int64_t dd = 0; dd < action_dim; ++dd) {
        double v = bases[c * action_dim + dd];
        if (dd >= base_dim && sigma > 0.0) v += rng.normal(0.0, sigma);
        // Probe actions stay inside the action box, like any executed action.
        v = std::clamp(v, -1.0, 1.0);
        raw[row * action_dim + dd] = v;
        a[dd] = static_cast<S>(v);
      }
      Tensor<S> z = nets.encode_action_one(a);
      for (int64_t dd = 0; dd < u; ++dd) lat[row * u + dd] = static_cast<double>(z[dd]);
    }
  }

  ActionClusterReport rep;
  rep.centroids = centroids;
  rep.samples_per = samples_per;
  rep.sigma = sigma;
  KMeansResult km_raw = kmeans(raw, centroids, 10, seed_stream(seed, 0x4A1));
  KMeansResult km_lat = kmeans(lat, centroids, 10, seed_stream(seed, 0x4A2));
  rep.purity_raw = cluster_purity(km_raw.assign, labels, centroids);
  rep.purity_latent = cluster_purity(km_lat.assign, labels, centroids);
  rep.ratio_raw = within_between_ratio(raw, labels, centroids);
  rep.ratio_latent = within_between_ratio(lat, labels, centroids);

  if (!out_csv.empty()) {
    TensorD proj = pca2(lat);
    std::ofstream f(out_csv, std::ios::trunc);
    TACO_CHECK(f.good(), DataError, "cannot write: " + out_csv);
    f << "# purity_raw=" << detail::fmt_metric(rep.purity_raw)
      << " purity_latent=" << detail::fmt_metric(rep.purity_latent)
      << " ratio_raw=" << detail::fmt_metric(rep.ratio_raw)
      << " ratio_latent=" << detail::fmt_metric(rep.ratio_latent) << "\n";
    f << "label,pc1,pc2\n";
    for (int64_t i = 0; i < n; ++i)
      f << labels[static_cast<size_t>(i)] << ',' << detail::fmt_metric(proj[i * 2])
        << ',' << detail::fmt_metric(proj[i * 2 + 1]) << "\n";
  }
  return rep;
}

struct Theorem1Report {
  double max_q_gap = 0.0;
  double mean_q_gap = 0.0;
  double max_psi_gap = 0.0;
  double mean_psi_gap = 0.0;
  double q_star_spread = 0.0;  // mean over states of max-min Q* across bins
  double threshold_frac = 0.1;

  bool pass() const { return mean_q_gap <= threshold_frac * q_star_spread; }
};

// Probes every duplicated-action pair (bin b vs b + kMoves) in every grid
// state: learned Q gaps should be near zero because the tabular gaps are
// exactly zero, while the tabular spread across distinct moves is not.
template <typename S>
Theorem1Report check_theorem1(Agent<S>& agent, const GridEnv& env, double gamma,
                              const std::string& out_csv = "") {
  const auto q_star = GridEnv::value_iteration(gamma);
  Theorem1Report rep;
  double spread = 0.0;
  for (int64_t s = 0; s < GridEnv::kStates; ++s) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int64_t b = 0; b < GridEnv::kBins; ++b) {
      lo = std::min(lo, q_star[static_cast<size_t>(s * GridEnv::kBins + b)]);
      hi = std::max(hi, q_star[static_cast<size_t>(s * GridEnv::kBins + b)]);
    }
    spread += hi - lo;
  }
  rep.q_star_spread = spread / GridEnv::kStates;

  std::ofstream f;
  if (!out_csv.empty()) {
    f.open(out_csv, std::ios::trunc);
    TACO_CHECK(f.good(), DataError, "cannot write: " + out_csv);
    f << "state,bin_a,bin_b,q_a,q_b,q_gap,psi_dist\n";
  }

  const int64_t pairs_per_state = GridEnv::kMoves;
  int64_t count = 0;
  for (int64_t s = 0; s < GridEnv::kStates; ++s) {
    const ByteTensor obs = env.observation_of(s);
    for (int64_t b = 0; b < pairs_per_state; ++b) {
      const int64_t b2 = GridEnv::kBins - 1 - b;
      TACO_CHECK(std::abs(q_star[static_cast<size_t>(s * GridEnv::kBins + b)] -
                          q_star[static_cast<size_t>(s * GridEnv::kBins + b2)]) < 1e-9,
                 NumericError, "tabular oracle: duplicated bins disagree");
      TensorF a1({1}), a2({1});
      a1[0] = static_cast<float>(GridEnv::bin_center(b));
      a2[0] = static_cast<float>(GridEnv::bin_center(b2));
      const double q1 = agent.q_value_shift_avg(obs, a1);
      const double q2 = agent.q_value_shift_avg(obs, a2);
      const double gap = std::abs(q1 - q2);

      Tensor<S> t1({1}), t2({1});
      t1[0] = static_cast<S>(a1[0]);
      t2[0] = static_cast<S>(a2[0]);
      Tensor<S> u1 = agent.nets().encode_action_one(t1);
      Tensor<S> u2 = agent.nets().encode_action_one(t2);
      double psi = 0.0;
      for (int64_t i = 0; i < u1.numel(); ++i) {
        const double diff = static_cast<double>(u1[i]) - static_cast<double>(u2[i]);
        psi += diff * diff;
      }
      psi = std::sqrt(psi);

      rep.max_q_gap = std::max(rep.max_q_gap, gap);
      rep.mean_q_gap += gap;
      rep.max_psi_gap = std::max(rep.max_psi_gap, psi);
      rep.mean_psi_gap += psi;
      ++count;
      if (f.is_open())
        f << s << ',' << b << ',' << b2 << ',' << detail::fmt_metric(q1) << ','
          << detail::fmt_metric(q2) << ',' << detail::fmt_metric(gap) << ','
          << detail::fmt_metric(psi) << "\n";
    }
  }
  rep.mean_q_gap /= static_cast<double>(count);
  rep.mean_psi_gap /= static_cast<double>(count);
  if (f.is_open())
    f << "# mean_q_gap=" << detail::fmt_metric(rep.mean_q_gap)
      << " max_q_gap=" << detail::fmt_metric(rep.max_q_gap)
      << " q_star_spread=" << detail::fmt_metric(rep.q_star_spread) << "\n";
  return rep;
}

struct MiBoundReport {
  double true_mi = 0.0;
  double final_estimate = 0.0;
  double max_estimate = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<int64_t, double>> curve;  // (step, held-out estimate)
  double tolerance = 0.05;

  bool bound_respected() const { return max_estimate <= true_mi + tolerance; }
};

// Trains a small bilinear contrastive critic on correlated Gaussian pairs and
// tracks the held-out estimate ln N - L. The estimate must stay at or below
// the analytic mutual information and approach it from below.
inline MiBoundReport run_mi_bound_experiment(double rho = 0.9, int64_t batch = 128,
                                             int64_t steps = 5000, uint64_t seed = 0,
                                             int64_t eval_every = 250,
                                             int64_t eval_batches = 20) {
  TACO_CHECK(rho > -1.0 && rho < 1.0, UsageError, "rho must be in (-1,1)");
  MiBoundReport rep;
  rep.true_mi = -0.5 * std::log(1.0 - rho * rho);

  nn::ParamStore<double> ps;
  Rng rng_init(seed_stream(seed, 1));
  Rng rng_train(seed_stream(seed, 2));
  Rng rng_eval(seed_stream(seed, 3));
  nn::MLP<double> f(ps, "f", {1, 64, 32}, rng_init);
  nn::MLP<double> g(ps, "g", {1, 64, 32}, rng_init);
  TensorD w0 = TensorD::identity(32);
  for (int64_t i = 0; i < w0.numel(); ++i) w0[i] += 0.01 * rng_init.normal();
  auto w = ps.add("w", w0);
  nn::Adam<double> opt(1e-3);

  const double noise_scale = std::sqrt(1.0 - rho * rho);
  auto draw = [&](Rng& rng) {
    TensorD x({batch, 1}), y({batch, 1});
    for (int64_t i = 0; i < batch; ++i) {
      x[i] = rng.normal();
      y[i] = rho * x[i] + noise_scale * rng.normal();
    }
    return std::make_pair(x, y);
  };
  auto scores_of = [&](const TensorD& x, const TensorD& y) {
    auto fx = f(ag::leaf(x));
    auto gy = g(ag::leaf(y));
    return ag::matmul(ag::matmul(fx, w), gy, false, true);
  };
  auto heldout_estimate = [&]() {
    double acc = 0.0;
    for (int64_t b = 0; b < eval_batches; ++b) {
      auto [x, y] = draw(rng_eval);
      acc += mi_lower_bound_estimate(scores_of(x, y)->value);
    }
    return acc / static_cast<double>(eval_batches);
  };

  for (int64_t step = 1; step <= steps; ++step) {
    auto [x, y] = draw(rng_train);
    nn::zero_grads(ps.all());
    auto loss = ag::softmax_xent_diag(scores_of(x, y));
    ag::backward(loss);
    opt.step(ps.all());
    if (step % eval_every == 0 || step == steps) {
      const double est = heldout_estimate();
      rep.curve.emplace_back(step, est);
      rep.max_estimate = std::max(rep.max_estimate, est);
      rep.final_estimate = est;
    }
  }
  return rep;
}

}  // namespace taco
