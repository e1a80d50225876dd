#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recurrdrive/geometry.hpp"

namespace rdn::sim {

enum class LaneKind { kRoad, kConnector };

struct Lane {
  int id = -1;
  LaneKind kind = LaneKind::kRoad;
  Polyline path;
  double speed_limit = 8.0;
  std::vector<int> successors;
  int stop_line = -1;  // stop line at the end of this lane, or -1
};

enum class LightState { kGreen, kYellow, kRed };

// Fixed-cycle two-phase controller. Axis 0 starts its cycle green, axis 1 starts red.
struct SignalTiming {
  double green_s = 15.0;
  double yellow_s = 3.0;
  double red_s = 18.0;

  double cycle() const { return green_s + yellow_s + red_s; }
  LightState state(int axis, double phase_time) const;
};

struct Intersection {
  Vec2 center;
  double phase_offset_s = 0.0;
  bool signalized = true;
};

struct StopLine {
  int lane = -1;
  int intersection = -1;
  int axis = 0;  // 0: north/south approaches, 1: east/west approaches
  Vec2 a;
  Vec2 b;
  Vec2 direction;  // unit direction of travel of the governed lane
};

struct SidewalkGraph {
  std::vector<Vec2> nodes;
  std::vector<std::vector<int>> neighbors;
};

struct TownOptions {
  double block_length_m = 60.0;
  double speed_limit_mps = 8.0;
  double lane_width_m = 3.5;
};

struct TownMap {
  int grid_rows = 0;
  int grid_cols = 0;
  std::uint64_t seed = 0;
  SignalTiming timing;
  double lane_width_m = 3.5;

  std::vector<Lane> lanes;
  std::vector<Intersection> intersections;
  std::vector<StopLine> stop_lines;
  std::vector<OrientedBox> road_surface;
  std::vector<OrientedBox> crosswalks;
  SidewalkGraph sidewalks;

  LightState light_state(int stop_line, double time_s) const;
  std::vector<int> road_lanes() const;
  bool strongly_connected() const;
  std::size_t signalized_count() const;

  // Canonical text dump of every field; two maps are identical iff their dumps are.
  std::string serialize() const;
};

// Grid town of single-lane two-way roads, every intersection signalised.
// Throws std::invalid_argument when either dimension is below 2.
TownMap build_town(int grid_rows, int grid_cols, std::uint64_t seed, const TownOptions& options = {});

struct StopLineWorldOptions {
  double stop_line_x = 120.0;
  double road_length_m = 400.0;
  double speed_limit_mps = 8.0;
  double phase_offset_s = 0.0;
};

// One straight eastbound lane along y = 0, split at a signalised stop line.
TownMap build_stop_line_world(const StopLineWorldOptions& options);

}  // namespace rdn::sim
