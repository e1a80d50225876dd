#include "recurrdrive/sim/town.hpp"

#include <cmath>
#include <iomanip>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rdn::sim {

namespace {

constexpr double kStopOffset = 11.0;       // lane ends / stop lines, from node centre
constexpr double kJunctionHalf = 6.5;      // paved intersection square
constexpr double kCrosswalkOffset = 9.0;   // crosswalk centre line, from node centre
constexpr double kSidewalkOffset = 5.0;    // sidewalk node lateral offset
constexpr double kCrosswalkWidth = 3.0;
constexpr double kLaneSampleStep = 0.5;

const std::array<Vec2, 4> kArms = {Vec2{1, 0}, Vec2{0, 1}, Vec2{-1, 0}, Vec2{0, -1}};  // E N W S

Vec2 right_of(const Vec2& d) { return {d.y, -d.x}; }
Vec2 left_of(const Vec2& d) { return {-d.y, d.x}; }

int opposite_arm(int arm) { return (arm + 2) % 4; }

std::vector<Vec2> sample_quadratic(const Vec2& p0, const Vec2& p1, const Vec2& p2, int n) {
  std::vector<Vec2> out;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double u = 1.0 - t;
    out.push_back(p0 * (u * u) + p1 * (2 * u * t) + p2 * (t * t));
  }
  return out;
}

std::vector<Vec2> sample_cubic(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3, int n) {
  std::vector<Vec2> out;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double u = 1.0 - t;
    out.push_back(p0 * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + p3 * (t * t * t));
  }
  return out;
}

}  // namespace

LightState SignalTiming::state(int axis, double phase_time) const {
  double t = phase_time;
  if (axis == 1) t -= red_s;
  t = std::fmod(t, cycle());
  if (t < 0.0) t += cycle();
  if (t < green_s) return LightState::kGreen;
  if (t < green_s + yellow_s) return LightState::kYellow;
  return LightState::kRed;
}

LightState TownMap::light_state(int stop_line, double time_s) const {
  const StopLine& line = stop_lines.at(static_cast<std::size_t>(stop_line));
  const Intersection& node = intersections.at(static_cast<std::size_t>(line.intersection));
  if (!node.signalized) return LightState::kGreen;
  return timing.state(line.axis, time_s + node.phase_offset_s);
}

std::vector<int> TownMap::road_lanes() const {
  std::vector<int> out;
  for (const Lane& lane : lanes) {
    if (lane.kind == LaneKind::kRoad) out.push_back(lane.id);
  }
  return out;
}

bool TownMap::strongly_connected() const {
  if (lanes.empty()) return false;
  const std::size_t n = lanes.size();
  std::vector<std::vector<int>> reverse(n);
  for (const Lane& lane : lanes) {
    for (int s : lane.successors) reverse[static_cast<std::size_t>(s)].push_back(lane.id);
  }
  auto reach_all = [n](auto&& adjacency) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    std::size_t count = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adjacency(u)) {
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          q.push(v);
        }
      }
    }
    return count == n;
  };
  return reach_all([&](int u) -> const std::vector<int>& { return lanes[static_cast<std::size_t>(u)].successors; }) &&
         reach_all([&](int u) -> const std::vector<int>& { return reverse[static_cast<std::size_t>(u)]; });
}

std::size_t TownMap::signalized_count() const {
  std::size_t n = 0;
  for (const auto& node : intersections) n += node.signalized ? 1 : 0;
  return n;
}

std::string TownMap::serialize() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "grid " << grid_rows << ' ' << grid_cols << " seed " << seed << '\n';
  for (const Lane& lane : lanes) {
    os << "lane " << lane.id << ' ' << static_cast<int>(lane.kind) << ' ' << lane.speed_limit << ' '
       << lane.stop_line << " succ";
    for (int s : lane.successors) os << ' ' << s;
    os << " pts";
    for (const Vec2& p : lane.path.points()) os << ' ' << p.x << ',' << p.y;
    os << '\n';
  }
  for (const auto& node : intersections) {
    os << "node " << node.center.x << ',' << node.center.y << ' ' << node.phase_offset_s << ' '
       << node.signalized << '\n';
  }
  for (const auto& line : stop_lines) {
    os << "stop " << line.lane << ' ' << line.intersection << ' ' << line.axis << ' ' << line.a.x << ','
       << line.a.y << ' ' << line.b.x << ',' << line.b.y << '\n';
  }
  for (const auto& box : road_surface) {
    os << "road " << box.center.x << ',' << box.center.y << ' ' << box.heading << ' ' << box.length << ' '
       << box.width << '\n';
  }
  for (const auto& box : crosswalks) {
    os << "xwalk " << box.center.x << ',' << box.center.y << ' ' << box.heading << '\n';
  }
  for (std::size_t i = 0; i < sidewalks.nodes.size(); ++i) {
    os << "walk " << sidewalks.nodes[i].x << ',' << sidewalks.nodes[i].y;
    for (int n : sidewalks.neighbors[i]) os << ' ' << n;
    os << '\n';
  }
  return os.str();
}

TownMap build_town(int grid_rows, int grid_cols, std::uint64_t seed, const TownOptions& options) {
  if (grid_rows < 2 || grid_cols < 2) throw std::invalid_argument("grid too small");

  TownMap map;
  map.grid_rows = grid_rows;
  map.grid_cols = grid_cols;
  map.seed = seed;
  map.lane_width_m = options.lane_width_m;
  const double block = options.block_length_m;
  const double half_lane = 0.5 * options.lane_width_m;
  const int node_count = grid_rows * grid_cols;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset_dist(0.0, map.timing.cycle());
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      map.intersections.push_back({Vec2{c * block, r * block}, offset_dist(rng), true});
    }
  }

  auto neighbor = [&](int node, int arm) -> int {
    const int r = node / grid_cols + static_cast<int>(kArms[static_cast<std::size_t>(arm)].y);
    const int c = node % grid_cols + static_cast<int>(kArms[static_cast<std::size_t>(arm)].x);
    if (r < 0 || r >= grid_rows || c < 0 || c >= grid_cols) return -1;
    return r * grid_cols + c;
  };

  // Road lanes: one per directed edge, right-hand traffic.
  std::vector<std::array<int, 4>> outgoing(static_cast<std::size_t>(node_count), {-1, -1, -1, -1});
  std::vector<std::array<int, 4>> incoming(static_cast<std::size_t>(node_count), {-1, -1, -1, -1});
  for (int node = 0; node < node_count; ++node) {
    for (int arm = 0; arm < 4; ++arm) {
      const int other = neighbor(node, arm);
      if (other < 0) continue;
      const Vec2 d = kArms[static_cast<std::size_t>(arm)];
      const Vec2 from = map.intersections[static_cast<std::size_t>(node)].center;
      const Vec2 to = map.intersections[static_cast<std::size_t>(other)].center;
      const Vec2 shift = right_of(d) * half_lane;
      Lane lane;
      lane.id = static_cast<int>(map.lanes.size());
      lane.kind = LaneKind::kRoad;
      lane.path = Polyline({from + d * kStopOffset + shift, to - d * kStopOffset + shift});
      lane.speed_limit = options.speed_limit_mps;
      outgoing[static_cast<std::size_t>(node)][static_cast<std::size_t>(arm)] = lane.id;
      // Arrives at `other` through its opposite arm.
      incoming[static_cast<std::size_t>(other)][static_cast<std::size_t>(opposite_arm(arm))] = lane.id;
      map.lanes.push_back(std::move(lane));
      if (node < other) {
        map.road_surface.push_back({(from + to) * 0.5, std::atan2(d.y, d.x), block, 2 * options.lane_width_m});
      }
    }
  }

  for (int node = 0; node < node_count; ++node) {
    const Vec2 x = map.intersections[static_cast<std::size_t>(node)].center;
    map.road_surface.push_back({x, 0.0, 2 * kJunctionHalf, 2 * kJunctionHalf});
    int degree = 0;
    for (int arm = 0; arm < 4; ++arm) degree += neighbor(node, arm) >= 0 ? 1 : 0;

    for (int in_arm = 0; in_arm < 4; ++in_arm) {
      const int in_lane = incoming[static_cast<std::size_t>(node)][static_cast<std::size_t>(in_arm)];
      if (in_lane < 0) continue;
      // Travel direction of a lane arriving through arm `in_arm` points from that arm to the centre.
      const Vec2 d_in = kArms[static_cast<std::size_t>(in_arm)] * -1.0;
      const Vec2 start = x - d_in * kStopOffset + right_of(d_in) * half_lane;

      StopLine line;
      line.lane = in_lane;
      line.intersection = node;
      line.axis = std::abs(d_in.y) > 0.5 ? 0 : 1;
      line.a = start + left_of(d_in) * half_lane;
      line.b = start - left_of(d_in) * half_lane;
      line.direction = d_in;
      map.lanes[static_cast<std::size_t>(in_lane)].stop_line = static_cast<int>(map.stop_lines.size());
      map.stop_lines.push_back(line);

      for (int out_arm = 0; out_arm < 4; ++out_arm) {
        const int out_lane = outgoing[static_cast<std::size_t>(node)][static_cast<std::size_t>(out_arm)];
        if (out_lane < 0) continue;
        const bool u_turn = out_arm == in_arm;
        if (u_turn && degree > 2) continue;
        const Vec2 d_out = kArms[static_cast<std::size_t>(out_arm)];
        const Vec2 end = x + d_out * kStopOffset + right_of(d_out) * half_lane;
        std::vector<Vec2> pts;
        if (d_out == d_in) {
          pts = {start, end};
        } else if (u_turn) {
          pts = sample_cubic(start, start + d_in * 8.0, end - d_out * 8.0, end, 48);
        } else {
          const Vec2 control = start + d_in * (end - start).dot(d_in);
          pts = sample_quadratic(start, control, end, 48);
        }
        Lane conn;
        conn.id = static_cast<int>(map.lanes.size());
        conn.kind = LaneKind::kConnector;
        conn.path = pts.size() == 2 ? Polyline(pts) : Polyline(pts).resampled(kLaneSampleStep);
        conn.speed_limit = options.speed_limit_mps;
        conn.successors = {out_lane};
        map.lanes[static_cast<std::size_t>(in_lane)].successors.push_back(conn.id);
        map.lanes.push_back(std::move(conn));
      }
    }

    for (int arm = 0; arm < 4; ++arm) {
      if (neighbor(node, arm) < 0) continue;
      const Vec2 d = kArms[static_cast<std::size_t>(arm)];
      map.crosswalks.push_back(
          {x + d * kCrosswalkOffset, std::atan2(left_of(d).y, left_of(d).x), 2 * options.lane_width_m, kCrosswalkWidth});
    }
  }

  // Sidewalk graph: eight nodes per intersection (two per arm), ring-connected, plus block edges.
  auto walk_id = [](int node, int arm, int side) { return node * 8 + arm * 2 + side; };  // side 0: right, 1: left
  map.sidewalks.nodes.resize(static_cast<std::size_t>(node_count) * 8);
  map.sidewalks.neighbors.resize(map.sidewalks.nodes.size());
  auto link = [&](int a, int b) {
    map.sidewalks.neighbors[static_cast<std::size_t>(a)].push_back(b);
    map.sidewalks.neighbors[static_cast<std::size_t>(b)].push_back(a);
  };
  for (int node = 0; node < node_count; ++node) {
    const Vec2 x = map.intersections[static_cast<std::size_t>(node)].center;
    for (int arm = 0; arm < 4; ++arm) {
      const Vec2 d = kArms[static_cast<std::size_t>(arm)];
      map.sidewalks.nodes[static_cast<std::size_t>(walk_id(node, arm, 0))] =
          x + d * kCrosswalkOffset + right_of(d) * kSidewalkOffset;
      map.sidewalks.nodes[static_cast<std::size_t>(walk_id(node, arm, 1))] =
          x + d * kCrosswalkOffset + left_of(d) * kSidewalkOffset;
    }
    for (int k = 0; k < 8; ++k) link(node * 8 + k, node * 8 + (k + 1) % 8);
    for (int arm = 0; arm < 2; ++arm) {  // east and north neighbours only, each block once
      const int other = neighbor(node, arm);
      if (other < 0) continue;
      const int back = opposite_arm(arm);
      link(walk_id(node, arm, 1), walk_id(other, back, 0));
      link(walk_id(node, arm, 0), walk_id(other, back, 1));
    }
  }

  if (!map.strongly_connected()) throw std::logic_error("lane graph is not strongly connected");
  return map;
}

TownMap build_stop_line_world(const StopLineWorldOptions& options) {
  if (options.stop_line_x <= 0.0 || options.road_length_m <= options.stop_line_x) {
    throw std::invalid_argument("stop line must lie inside the road");
  }
  TownMap map;
  map.grid_rows = 1;
  map.grid_cols = 1;
  const double half_lane = 0.5 * map.lane_width_m;
  map.intersections.push_back({Vec2{options.stop_line_x, 0.0}, options.phase_offset_s, true});

  Lane approach;
  approach.id = 0;
  approach.path = Polyline({Vec2{0.0, 0.0}, Vec2{options.stop_line_x, 0.0}});
  approach.speed_limit = options.speed_limit_mps;
  approach.successors = {1};
  approach.stop_line = 0;
  Lane exit;
  exit.id = 1;
  exit.path = Polyline({Vec2{options.stop_line_x, 0.0}, Vec2{options.road_length_m, 0.0}});
  exit.speed_limit = options.speed_limit_mps;
  map.lanes = {approach, exit};

  map.stop_lines.push_back({0, 0, 1, Vec2{options.stop_line_x, half_lane}, Vec2{options.stop_line_x, -half_lane},
                            Vec2{1.0, 0.0}});
  map.road_surface.push_back(
      {Vec2{0.5 * options.road_length_m, 0.0}, 0.0, options.road_length_m, 2 * map.lane_width_m});
  return map;
}

}  // namespace rdn::sim
