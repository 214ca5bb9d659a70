#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "taco/error.hpp"

namespace taco {

struct MetricsRow {
  int64_t frame = 0;
  int64_t episode = 0;
  double eval_return = 0.0;
  double loss_taco = 0.0;
  double loss_curl = 0.0;
  double loss_reward = 0.0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double pospair_acc = 0.0;
  double mi_estimate = 0.0;
};

inline const char* kMetricsHeader =
    "frame,episode,eval_return,loss_taco,loss_curl,loss_reward,loss_critic,"
    "loss_actor,pospair_acc,mi_estimate";

namespace detail {
inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace detail

// Append-only CSV log. One row per evaluation point; frames must be
// non-decreasing across appends.
class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) : path_(path) {
    std::ifstream probe(path_);
    const bool fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
    probe.close();
    out_.open(path_, std::ios::app);
    TACO_CHECK(out_.good(), DataError, "cannot open metrics log: " + path_);
    if (fresh) out_ << kMetricsHeader << "\n";
  }

  void append(const MetricsRow& r) {
    TACO_CHECK(r.frame >= last_frame_, UsageError,
               "metrics frames must be non-decreasing");
    last_frame_ = r.frame;
    out_ << r.frame << ',' << r.episode << ',' << detail::fmt_metric(r.eval_return)
         << ',' << detail::fmt_metric(r.loss_taco) << ','
         << detail::fmt_metric(r.loss_curl) << ','
         << detail::fmt_metric(r.loss_reward) << ','
         << detail::fmt_metric(r.loss_critic) << ','
         << detail::fmt_metric(r.loss_actor) << ','
         << detail::fmt_metric(r.pospair_acc) << ','
         << detail::fmt_metric(r.mi_estimate) << "\n";
    out_.flush();
    TACO_CHECK(out_.good(), DataError, "metrics write failed: " + path_);
  }

  static std::vector<MetricsRow> read(const std::string& path) {
    std::ifstream in(path);
    TACO_CHECK(in.good(), DataError, "cannot read metrics log: " + path);
    std::string line;
    TACO_CHECK(std::getline(in, line), DataError, "empty metrics log: " + path);
    TACO_CHECK(line == kMetricsHeader, DataError,
               "unexpected metrics header in " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      MetricsRow r;
      char c;
      ss >> r.frame >> c >> r.episode >> c >> r.eval_return >> c >> r.loss_taco >>
          c >> r.loss_curl >> c >> r.loss_reward >> c >> r.loss_critic >> c >>
          r.loss_actor >> c >> r.pospair_acc >> c >> r.mi_estimate;
      TACO_CHECK(!ss.fail(), DataError, "malformed metrics row in " + path);
      rows.push_back(r);
    }
    return rows;
  }

 private:
  std::string path_;
  std::ofstream out_;
  int64_t last_frame_ = -1;
};

// Running means of the per-update diagnostics between metrics rows.
struct LossMeter {
  double taco = 0, curl = 0, reward = 0, critic = 0, actor = 0;
  double acc = 0, mi = 0;
  int64_t n = 0;

  void add(double t, double c, double r, double q, double a, double pp, double m) {
    taco += t;
    curl += c;
    reward += r;
    critic += q;
    actor += a;
    acc += pp;
    mi += m;
    ++n;
  }
  void fill(MetricsRow& row) const {
    const double d = n > 0 ? static_cast<double>(n) : 1.0;
    row.loss_taco = taco / d;
    row.loss_curl = curl / d;
    row.loss_reward = reward / d;
    row.loss_critic = critic / d;
    row.loss_actor = actor / d;
    row.pospair_acc = acc / d;
    row.mi_estimate = mi / d;
  }
  void reset() { *this = LossMeter{}; }
};

}  // namespace taco
