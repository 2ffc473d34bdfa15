// 2D point-maze MDP family. World coordinates span [-1,1] on each axis;
// the observation is the state itself: (x, y, vx/vmax, vy/vmax), so every
// component lies in [-1,1] and obs <-> state conversion is exact.
//
// Dynamics (pure function of state and action):
//   v += a * accel, clipped to +-vmax per component
//   position advances in substeps; a substep that would enter a wall cell
//   is cancelled on that axis and the velocity component zeroed, so the
//   agent slides along walls.
// Reward is -1 per step, 0 with termination inside the goal radius.

#pragma once

#include <array>
#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "supe/rng.hpp"
#include "supe/tensor.hpp"

namespace supe {

constexpr float kVMax = 0.125f;
constexpr float kAccel = 0.03125f;
constexpr int kSubsteps = 4;
constexpr int kObsDim = 4;
constexpr int kActDim = 2;

struct MazeSpec {
  int rows = 0, cols = 0;
  std::vector<uint8_t> wall;  // rows*cols, row 0 at the top (y = +1 edge)
  int start_r = 0, start_c = 0;
  int goal_r = 0, goal_c = 0;
  float goal_radius = 0.0f;  // world units
  int max_steps = 0;

  bool is_wall(int r, int c) const {
    if (r < 0 || r >= rows || c < 0 || c >= cols) return true;
    return wall[(size_t)r * cols + c] != 0;
  }
  float cell_w() const { return 2.0f / cols; }
  float cell_h() const { return 2.0f / rows; }
  // cell (r,c) center in world coordinates
  float center_x(int c) const { return -1.0f + (c + 0.5f) * cell_w(); }
  float center_y(int r) const { return 1.0f - (r + 0.5f) * cell_h(); }
  int cell_col(float x) const { return (int)((x + 1.0f) / cell_w()); }
  int cell_row(float y) const { return (int)((1.0f - y) / cell_h()); }
  int num_free() const {
    int n = 0;
    for (auto w : wall) n += (w == 0);
    return n;
  }
  void validate() const;
};

struct EnvState {
  float x = 0, y = 0, vx = 0, vy = 0;
  int t = 0;
};

struct StepResult {
  EnvState state;
  float reward = -1.0f;
  bool done = false;
  bool goal = false;  // done at the goal (false for timeout)
};

inline std::array<float, kObsDim> observe(const EnvState& s) {
  return {s.x, s.y, s.vx / kVMax, s.vy / kVMax};
}

inline EnvState state_from_obs(const std::array<float, kObsDim>& o, int t = 0) {
  return {o[0], o[1], o[2] * kVMax, o[3] * kVMax, t};
}

inline void MazeSpec::validate() const {
  if (rows < 3 || cols < 3) throw error("config", "maze: grid too small");
  if ((int)wall.size() != rows * cols) throw error("config", "maze: grid size mismatch");
  if (is_wall(start_r, start_c)) throw error("config", "maze: start cell is a wall");
  if (is_wall(goal_r, goal_c)) throw error("config", "maze: goal cell is a wall");
  if (goal_radius <= 0) throw error("config", "maze: goal radius must be positive");
  if (max_steps < 1) throw error("config", "maze: max_steps must be >= 1");
  // free path start -> goal
  std::vector<uint8_t> seen(wall.size(), 0);
  std::queue<std::pair<int, int>> q;
  q.push({start_r, start_c});
  seen[(size_t)start_r * cols + start_c] = 1;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop();
    if (r == goal_r && c == goal_c) return;
    const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nr = r + dr[k], nc = c + dc[k];
      if (!is_wall(nr, nc) && !seen[(size_t)nr * cols + nc]) {
        seen[(size_t)nr * cols + nc] = 1;
        q.push({nr, nc});
      }
    }
  }
  throw error("config", "maze: no free path from start to goal");
}

inline EnvState reset(const MazeSpec& spec, Rng& rng) {
  float nx = uniform<float>(rng, -0.1, 0.1) * spec.cell_w();
  float ny = uniform<float>(rng, -0.1, 0.1) * spec.cell_h();
  return {spec.center_x(spec.start_c) + nx, spec.center_y(spec.start_r) + ny, 0.0f,
          0.0f, 0};
}

inline EnvState reset(const MazeSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed);
  return reset(spec, rng);
}

inline bool position_blocked(const MazeSpec& spec, float x, float y) {
  return spec.is_wall(spec.cell_row(y), spec.cell_col(x));
}

inline StepResult step(const MazeSpec& spec, const EnvState& s, float ax, float ay) {
  ax = std::min(1.0f, std::max(-1.0f, ax));
  ay = std::min(1.0f, std::max(-1.0f, ay));
  EnvState n = s;
  n.vx = std::min(kVMax, std::max(-kVMax, n.vx + ax * kAccel));
  n.vy = std::min(kVMax, std::max(-kVMax, n.vy + ay * kAccel));
  for (int i = 0; i < kSubsteps; ++i) {
    float tx = n.x + n.vx / kSubsteps;
    if (position_blocked(spec, tx, n.y)) n.vx = 0.0f;
    else n.x = tx;
    float ty = n.y + n.vy / kSubsteps;
    if (position_blocked(spec, n.x, ty)) n.vy = 0.0f;
    else n.y = ty;
  }
  n.t = s.t + 1;
  float dx = n.x - spec.center_x(spec.goal_c);
  float dy = n.y - spec.center_y(spec.goal_r);
  bool at_goal = std::sqrt(dx * dx + dy * dy) <= spec.goal_radius;
  StepResult r;
  r.state = n;
  r.goal = at_goal;
  r.reward = at_goal ? 0.0f : -1.0f;
  r.done = at_goal || n.t >= spec.max_steps;
  return r;
}

// ---- ASCII serialization: '#' wall, '.' free, 'S' start, 'G' goal ----

inline std::string maze_to_ascii(const MazeSpec& spec) {
  std::string out;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      char ch = spec.is_wall(r, c) ? '#' : '.';
      if (r == spec.start_r && c == spec.start_c) ch = 'S';
      if (r == spec.goal_r && c == spec.goal_c) ch = 'G';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

inline MazeSpec maze_from_ascii(const std::string& text, float goal_radius_cells = 0.5f,
                                int max_steps = 0) {
  MazeSpec spec;
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      if (!cur.empty()) lines.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  if (lines.empty()) throw error("config", "maze: empty grid");
  spec.rows = (int)lines.size();
  spec.cols = (int)lines[0].size();
  spec.wall.assign((size_t)spec.rows * spec.cols, 1);
  bool has_start = false, has_goal = false;
  for (int r = 0; r < spec.rows; ++r) {
    if ((int)lines[r].size() != spec.cols)
      throw error("config", "maze: ragged grid row " + std::to_string(r));
    for (int c = 0; c < spec.cols; ++c) {
      char ch = lines[r][c];
      if (ch == '#') continue;
      spec.wall[(size_t)r * spec.cols + c] = 0;
      if (ch == 'S') { spec.start_r = r; spec.start_c = c; has_start = true; }
      else if (ch == 'G') { spec.goal_r = r; spec.goal_c = c; has_goal = true; }
      else if (ch != '.') throw error("config", std::string("maze: bad cell '") + ch + "'");
    }
  }
  if (!has_start || !has_goal) throw error("config", "maze: missing S or G");
  spec.goal_radius = goal_radius_cells * std::min(spec.cell_w(), spec.cell_h());
  spec.max_steps = max_steps > 0 ? max_steps : 25 * std::max(spec.rows, spec.cols);
  spec.validate();
  return spec;
}

// ---- built-in layouts, 4 evaluation goals each ----

inline MazeSpec make_maze(const std::string& id, int goal_id) {
  struct Layout {
    const char* grid;
    std::array<std::pair<int, int>, 4> goals;  // (row, col)
    int max_steps;
  };
  Layout lay;
  if (id == "medium") {
    lay = {
        "########\n"
        "#....#G#\n"
        "#.##...#\n"
        "#.#..#.#\n"
        "#.#.##.#\n"
        "#....#.#\n"
        "#S#....#\n"
        "########\n",
        {{{1, 6}, {1, 1}, {3, 3}, {6, 6}}},
        200};
  } else if (id == "large") {
    // spiral: the deep goals demand long coherent traversal, which makes
    // undirected exploration extremely slow
    lay = {
        "#############\n"
        "#S..........#\n"
        "###########.#\n"
        "#.........#.#\n"
        "#.#######.#.#\n"
        "#.#.....#.#.#\n"
        "#.#.###.#.#.#\n"
        "#.#.#G..#.#.#\n"
        "#.#.#####.#.#\n"
        "#.#.......#.#\n"
        "#.#########.#\n"
        "#...........#\n"
        "#############\n",
        {{{7, 5}, {11, 6}, {9, 5}, {3, 5}}},
        300};
  } else if (id == "ultra") {
    lay = {
        "##############\n"
        "#............#\n"
        "#.##########.#\n"
        "#.#..........#\n"
        "#.#.#######.##\n"
        "#.#.G.....#..#\n"
        "#.#######.#.##\n"
        "#S........#..#\n"
        "##############\n",
        {{{5, 4}, {1, 12}, {3, 4}, {7, 12}}},
        400};
  } else {
    throw error("config", "unknown maze id '" + id + "'");
  }
  if (goal_id < 0 || goal_id > 3) throw error("config", "goal id must be in [0,3]");
  MazeSpec spec = maze_from_ascii(lay.grid, 0.5f, lay.max_steps);
  spec.goal_r = lay.goals[goal_id].first;
  spec.goal_c = lay.goals[goal_id].second;
  spec.validate();
  return spec;
}

// Fraction of free cells containing at least one visited position.
inline double coverage(const std::vector<std::pair<float, float>>& positions,
                       const MazeSpec& spec) {
  std::vector<uint8_t> hit((size_t)spec.rows * spec.cols, 0);
  for (auto& [x, y] : positions) {
    int r = spec.cell_row(y), c = spec.cell_col(x);
    if (r >= 0 && r < spec.rows && c >= 0 && c < spec.cols && !spec.is_wall(r, c))
      hit[(size_t)r * spec.cols + c] = 1;
  }
  int n = 0;
  for (size_t i = 0; i < hit.size(); ++i) n += (hit[i] && !spec.wall[i]);
  return (double)n / (double)spec.num_free();
}

}  // namespace supe
