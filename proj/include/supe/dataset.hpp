// Unlabeled trajectory datasets: generation by a noisy waypoint policy and
// the SUPD binary file format. Trajectories carry observations and actions
// only; there is no reward or goal field anywhere, and the generator never
// reads the goal cell of the spec it is given.

#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "supe/maze.hpp"

namespace supe {

struct Trajectory {
  std::vector<std::array<float, kObsDim>> states;  // length L+1
  std::vector<std::array<float, kActDim>> actions;  // length L
};

using Dataset = std::vector<Trajectory>;

enum class DataStyle { Diverse, Stitch };

inline DataStyle data_style_from_string(const std::string& s) {
  if (s == "diverse") return DataStyle::Diverse;
  if (s == "stitch") return DataStyle::Stitch;
  throw error("config", "unknown dataset style '" + s + "'");
}

namespace detail {

// A* over the free-cell graph (unit edge costs, manhattan heuristic).
inline std::vector<std::pair<int, int>> astar(const MazeSpec& spec, int sr, int sc,
                                              int tr, int tc) {
  int n = spec.rows * spec.cols;
  auto idx = [&](int r, int c) { return r * spec.cols + c; };
  std::vector<int> g(n, std::numeric_limits<int>::max()), from(n, -1);
  using QE = std::pair<int, int>;  // (f, cell)
  std::priority_queue<QE, std::vector<QE>, std::greater<>> open;
  g[idx(sr, sc)] = 0;
  open.push({std::abs(sr - tr) + std::abs(sc - tc), idx(sr, sc)});
  while (!open.empty()) {
    auto [f, u] = open.top();
    open.pop();
    int r = u / spec.cols, c = u % spec.cols;
    if (r == tr && c == tc) break;
    const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nr = r + dr[k], nc = c + dc[k];
      if (spec.is_wall(nr, nc)) continue;
      int v = idx(nr, nc);
      if (g[u] + 1 < g[v]) {
        g[v] = g[u] + 1;
        from[v] = u;
        open.push({g[v] + std::abs(nr - tr) + std::abs(nc - tc), v});
      }
    }
  }
  std::vector<std::pair<int, int>> path;
  int v = idx(tr, tc);
  if (g[v] == std::numeric_limits<int>::max()) return path;
  for (; v != -1; v = from[v]) path.push_back({v / spec.cols, v % spec.cols});
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

// Proportional controller toward the next A* waypoint. Exposed so the
// evaluation oracle can reuse it with the goal as target.
struct WaypointController {
  const MazeSpec* spec;
  int target_r, target_c;
  float noise_std = 0.0f;

  std::array<float, 2> act(const EnvState& s, Rng& rng) const {
    int cr = spec->cell_row(s.y), cc = spec->cell_col(s.x);
    auto path = detail::astar(*spec, cr, cc, target_r, target_c);
    float wx, wy;
    if (path.size() >= 2) {
      wx = spec->center_x(path[1].second);
      wy = spec->center_y(path[1].first);
    } else {
      wx = spec->center_x(target_c);
      wy = spec->center_y(target_r);
    }
    float dx = wx - s.x, dy = wy - s.y;
    float dist = std::sqrt(dx * dx + dy * dy);
    float speed = 0.8f * kVMax;
    float vdx = dist > 1e-6f ? dx / dist * speed : 0.0f;
    float vdy = dist > 1e-6f ? dy / dist * speed : 0.0f;
    float ax = (vdx - s.vx) / kAccel;
    float ay = (vdy - s.vy) / kAccel;
    if (noise_std > 0.0f) {
      ax += gaussian<float>(rng, 0.0, noise_std);
      ay += gaussian<float>(rng, 0.0, noise_std);
    }
    return {std::min(1.0f, std::max(-1.0f, ax)), std::min(1.0f, std::max(-1.0f, ay))};
  }
};

inline Dataset generate_dataset(const MazeSpec& spec, int num_traj, uint64_t seed,
                                DataStyle style) {
  if (num_traj < 1) throw error("config", "generate_dataset: num_traj must be >= 1");
  Rng rng = make_rng(seed);
  std::vector<std::pair<int, int>> free_cells;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c)
      if (!spec.is_wall(r, c)) free_cells.push_back({r, c});

  const int segment_cap = 32;  // stitch style: short segments
  Dataset out;
  out.reserve(num_traj);
  for (int i = 0; i < num_traj; ++i) {
    auto [sr, sc] = free_cells[uniform_int(rng, 0, (int)free_cells.size() - 1)];
    EnvState s{spec.center_x(sc) + uniform<float>(rng, -0.1, 0.1) * spec.cell_w(),
               spec.center_y(sr) + uniform<float>(rng, -0.1, 0.1) * spec.cell_h(),
               0.0f, 0.0f, 0};
    WaypointController ctl{&spec, 0, 0, 0.3f};
    auto [tr, tc] = free_cells[uniform_int(rng, 0, (int)free_cells.size() - 1)];
    ctl.target_r = tr;
    ctl.target_c = tc;

    int len = style == DataStyle::Diverse ? spec.max_steps : segment_cap;
    Trajectory traj;
    traj.states.push_back(observe(s));
    for (int t = 0; t < len; ++t) {
      float tx = spec.center_x(ctl.target_c) - s.x;
      float ty = spec.center_y(ctl.target_r) - s.y;
      if (std::sqrt(tx * tx + ty * ty) < 0.5f * spec.cell_w()) {
        auto [nr, nc] = free_cells[uniform_int(rng, 0, (int)free_cells.size() - 1)];
        ctl.target_r = nr;
        ctl.target_c = nc;
      }
      auto a = ctl.act(s, rng);
      auto res = step(spec, s, a[0], a[1]);  // reward/goal ignored on purpose
      s = res.state;
      traj.actions.push_back(a);
      traj.states.push_back(observe(s));
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// ---- SUPD binary format ----
// "SUPD" | version u32 | obs_dim u32 | act_dim u32 | num_traj u32 |
// per trajectory: L u32, (L+1)*obs_dim f32, L*act_dim f32. Little-endian.

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)(v >> 24)};
  os.write((const char*)b, 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read((char*)b, 4);
  if (!is) throw error("io", "unexpected end of file");
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
         ((uint32_t)b[3] << 24);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline float get_f32(std::istream& is) {
  uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw error("io", "cannot open '" + path + "' for writing");
  os.write("SUPD", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, kObsDim);
  detail::put_u32(os, kActDim);
  detail::put_u32(os, (uint32_t)ds.size());
  for (auto& t : ds) {
    detail::put_u32(os, (uint32_t)t.actions.size());
    for (auto& s : t.states)
      for (float v : s) detail::put_f32(os, v);
    for (auto& a : t.actions)
      for (float v : a) detail::put_f32(os, v);
  }
  if (!os) throw error("io", "write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw error("io", "cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SUPD")
    throw error("io", "'" + path + "' is not a SUPD file");
  uint32_t version = detail::get_u32(is);
  if (version != 1) throw error("io", "unsupported SUPD version");
  uint32_t obs_dim = detail::get_u32(is);
  uint32_t act_dim = detail::get_u32(is);
  if (obs_dim != kObsDim || act_dim != kActDim)
    throw error("io", "SUPD dims mismatch");
  uint32_t num = detail::get_u32(is);
  Dataset ds(num);
  for (auto& t : ds) {
    uint32_t L = detail::get_u32(is);
    t.states.resize(L + 1);
    t.actions.resize(L);
    for (auto& s : t.states)
      for (auto& v : s) v = detail::get_f32(is);
    for (auto& a : t.actions)
      for (auto& v : a) v = detail::get_f32(is);
  }
  return ds;
}

}  // namespace supe
