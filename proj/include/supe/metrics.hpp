// Metric streams as flat CSV rows plus the aggregation statistics used for
// reporting: interquartile mean, percentile-bootstrap confidence intervals,
// and time-to-first-goal.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "supe/loop.hpp"

namespace supe {

// %.9g keeps float32-derived values exact and the files byte-stable.
inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void save_metrics(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os << "seed,env_step,metric,value\n";
  for (auto& r : rows)
    os << r.seed << ',' << r.env_step << ',' << r.metric << ','
       << format_value(r.value) << '\n';
  if (!os) throw error("io", "write failed for '" + path + "'");
}

inline std::vector<MetricRow> load_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw error("io", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != "seed,env_step,metric,value")
    throw error("io", "'" + path + "' is not a metrics CSV");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricRow r;
    std::string f;
    if (!std::getline(ss, f, ',')) throw error("io", "bad metrics row: " + line);
    r.seed = std::stoull(f);
    if (!std::getline(ss, f, ',')) throw error("io", "bad metrics row: " + line);
    r.env_step = std::stol(f);
    if (!std::getline(ss, r.metric, ',')) throw error("io", "bad metrics row: " + line);
    if (!std::getline(ss, f)) throw error("io", "bad metrics row: " + line);
    r.value = std::stod(f);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Mean of the middle half: drop floor(n/4) values at each end after sorting.
inline double iqm(std::vector<double> v) {
  if (v.empty()) throw error("data", "iqm: empty sample");
  std::sort(v.begin(), v.end());
  size_t k = v.size() / 4;
  double acc = 0.0;
  for (size_t i = k; i < v.size() - k; ++i) acc += v[i];
  return acc / (double)(v.size() - 2 * k);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw error("data", "median: empty sample");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Ci {
  double lo = 0.0, hi = 0.0;
};

// Percentile bootstrap over the given statistic (default: iqm).
template <class StatFn>
Ci bootstrap_ci(const std::vector<double>& v, uint64_t seed, StatFn&& stat,
                int resamples = 2000, double level = 0.95) {
  if (v.size() < 2) throw error("data", "bootstrap_ci: need at least 2 values");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<size_t> pick(0, v.size() - 1);
  std::vector<double> stats(resamples);
  std::vector<double> re(v.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& x : re) x = v[pick(rng)];
    stats[b] = stat(re);
  }
  std::sort(stats.begin(), stats.end());
  auto at = [&](double q) {
    size_t i = (size_t)std::min((double)resamples - 1.0,
                                std::max(0.0, q * (resamples - 1)));
    return stats[i];
  };
  double tail = 0.5 * (1.0 - level);
  return {at(tail), at(1.0 - tail)};
}

inline Ci bootstrap_ci(const std::vector<double>& v, uint64_t seed,
                       int resamples = 2000, double level = 0.95) {
  return bootstrap_ci(v, seed, [](const std::vector<double>& x) { return iqm(x); },
                      resamples, level);
}

// Env step of the first success=1 row; `cap` when the stream has none.
inline long first_goal_step(const std::vector<MetricRow>& rows, long cap) {
  long best = cap;
  for (auto& r : rows)
    if (r.metric == "success" && r.value >= 1.0) best = std::min(best, r.env_step);
  return best;
}

// Values of one metric at (or latest before) a given env step, one per seed.
inline std::vector<double> metric_at_step(const std::vector<MetricRow>& rows,
                                          const std::string& metric, long step) {
  std::vector<uint64_t> seeds;
  std::vector<long> at;
  std::vector<double> val;
  for (auto& r : rows) {
    if (r.metric != metric || r.env_step > step) continue;
    size_t i = 0;
    for (; i < seeds.size(); ++i)
      if (seeds[i] == r.seed) break;
    if (i == seeds.size()) {
      seeds.push_back(r.seed);
      at.push_back(r.env_step);
      val.push_back(r.value);
    } else if (r.env_step >= at[i]) {
      at[i] = r.env_step;
      val[i] = r.value;
    }
  }
  return val;
}

}  // namespace supe
