#include "recurrdrive/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rdn::sim {

namespace {

constexpr double kWaypointSpacing = 2.0;
constexpr int kRouteMinAhead = 10;
constexpr int kRouteTargetSize = 40;

// Autopilot (IDM-style) parameters.
constexpr double kIdmAccel = 2.0;
constexpr double kIdmComfortBrake = 3.0;
constexpr double kIdmMinGap = 2.0;
constexpr double kIdmHeadway = 0.75;  // s* = 8 m at 8 m/s
constexpr double kIdmEmergencyBrake = 8.0;
constexpr double kLookahead = 30.0;
constexpr double kPathSample = 0.5;
constexpr double kYellowStopDecel = 4.0;

constexpr double kPedRetargetProb = 0.01;
constexpr double kPedSpeedMin = 0.5;
constexpr double kPedSpeedMax = 2.0;
constexpr double kPedSize = 0.5;

int pick(std::minstd_rand& rng, std::size_t n) {
  return std::uniform_int_distribution<int>(0, static_cast<int>(n) - 1)(rng);
}

double uniform(std::minstd_rand& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void top_up_plan(const TownMap& map, ActorState& actor, std::size_t depth) {
  int last = actor.lane_plan.empty() ? actor.lane : actor.lane_plan.back();
  while (actor.lane_plan.size() < depth) {
    const auto& succ = map.lanes[static_cast<std::size_t>(last)].successors;
    if (succ.empty()) return;
    last = succ[static_cast<std::size_t>(pick(actor.rng, succ.size()))];
    actor.lane_plan.push_back(last);
  }
}

struct PathSample {
  Vec2 position;
  double heading;
  double arc;  // distance ahead of the vehicle centre
};

struct PathAhead {
  std::vector<PathSample> samples;
  double stop_line_arc = std::numeric_limits<double>::infinity();  // to the first stop line ahead
  int stop_line = -1;
  double dead_end_arc = std::numeric_limits<double>::infinity();
};

PathAhead trace_path(const TownMap& map, const ActorState& actor) {
  PathAhead path;
  int lane = actor.lane;
  double s = actor.s;
  double arc = 0.0;
  std::size_t plan_index = 0;
  while (arc <= kLookahead) {
    const Lane& l = map.lanes[static_cast<std::size_t>(lane)];
    const double len = l.path.length();
    if (s <= len) {
      path.samples.push_back({l.path.point_at(s), l.path.heading_at(s), arc});
    }
    const double remaining = len - s;
    if (l.stop_line >= 0 && path.stop_line < 0 && remaining >= 0.0) {
      path.stop_line = l.stop_line;
      path.stop_line_arc = arc + remaining;
    }
    if (s + kPathSample <= len) {
      s += kPathSample;
      arc += kPathSample;
      continue;
    }
    if (plan_index >= actor.lane_plan.size()) {
      path.dead_end_arc = arc + std::max(0.0, remaining);
      break;
    }
    const double overflow = s + kPathSample - len;
    arc += kPathSample;
    s = overflow;
    lane = actor.lane_plan[plan_index++];
  }
  return path;
}

double along_extent(const ActorState& other, double path_heading) {
  const double d = other.pose.heading - path_heading;
  return 0.5 * other.length * std::abs(std::cos(d)) + 0.5 * other.width * std::abs(std::sin(d));
}

struct Leader {
  double gap = std::numeric_limits<double>::infinity();
  double speed = 0.0;
};

void consider(Leader& leader, double gap, double speed) {
  if (gap < leader.gap) {
    leader.gap = gap;
    leader.speed = speed;
  }
}

void consider_actor(Leader& leader, const PathAhead& path, const ActorState& self, const ActorState& other) {
  const Vec2 p = other.pose.position();
  if (distance(p, self.pose.position()) > kLookahead + 6.0) return;
  double best = std::numeric_limits<double>::infinity();
  const PathSample* hit = nullptr;
  for (const PathSample& sample : path.samples) {
    const double d = distance(sample.position, p);
    if (d < best) {
      best = d;
      hit = &sample;
    }
  }
  if (hit == nullptr) return;
  if (other.kind != ActorKind::kPedestrian &&
      unit_from_heading(other.pose.heading).dot(unit_from_heading(hit->heading)) < -0.3) {
    return;  // oncoming traffic
  }
  const double across = 0.5 * other.length * std::abs(std::sin(other.pose.heading - hit->heading)) +
                        0.5 * other.width * std::abs(std::cos(other.pose.heading - hit->heading));
  if (best > 0.5 * self.width + across + 0.3) return;
  if (hit->arc <= 0.0 && best > 0.5 * self.width) return;
  const double gap = hit->arc - 0.5 * self.length - along_extent(other, hit->heading);
  consider(leader, gap, other.kind == ActorKind::kPedestrian ? 0.0 : other.speed);
}

ActorState step_vehicle(const WorldState& world, std::size_t self_index) {
  const TownMap& map = *world.map;
  ActorState v = world.others[self_index];
  top_up_plan(map, v, 3);
  const double limit = map.lanes[static_cast<std::size_t>(v.lane)].speed_limit;
  const PathAhead path = trace_path(map, v);

  Leader leader;
  consider_actor(leader, path, v, world.ego);
  for (std::size_t j = 0; j < world.others.size(); ++j) {
    if (j != self_index) consider_actor(leader, path, v, world.others[j]);
  }
  if (path.stop_line >= 0) {
    const double gap = path.stop_line_arc - 0.5 * v.length;
    const LightState light = map.light_state(path.stop_line, world.time_s());
    if (gap > -0.5) {
      if (light == LightState::kRed) {
        consider(leader, std::max(gap, 0.0), 0.0);
      } else if (light == LightState::kYellow && v.speed * v.speed / (2.0 * std::max(gap, 0.1)) <= kYellowStopDecel) {
        consider(leader, std::max(gap, 0.0), 0.0);
      }
    }
  }

  const double speed = v.speed;
  double accel = kIdmAccel * (1.0 - std::pow(speed / limit, 4.0));
  if (std::isfinite(leader.gap)) {
    const double dv = speed - leader.speed;
    const double desired =
        kIdmMinGap + std::max(0.0, speed * kIdmHeadway + speed * dv / (2.0 * std::sqrt(kIdmAccel * kIdmComfortBrake)));
    const double ratio = desired / std::max(leader.gap, 0.01);
    accel -= kIdmAccel * ratio * ratio;
  }
  accel = std::clamp(accel, -kIdmEmergencyBrake, kIdmAccel);
  double new_speed = std::clamp(speed + accel * kTickSeconds, 0.0, limit);
  double advance = new_speed * kTickSeconds;
  if (std::isfinite(leader.gap)) {
    const double room = std::max(0.0, leader.gap - 0.1);
    if (advance > room) {
      advance = room;
      new_speed = advance / kTickSeconds;
    }
  }
  v.accel = (new_speed - speed) / kTickSeconds;
  v.speed = new_speed;

  v.s += advance;
  while (v.s > map.lanes[static_cast<std::size_t>(v.lane)].path.length()) {
    if (v.lane_plan.empty()) {
      v.lane = -1;  // dead end: despawn
      return v;
    }
    v.s -= map.lanes[static_cast<std::size_t>(v.lane)].path.length();
    v.lane = v.lane_plan.front();
    v.lane_plan.erase(v.lane_plan.begin());
    top_up_plan(map, v, 3);
  }
  const Lane& lane = map.lanes[static_cast<std::size_t>(v.lane)];
  const Vec2 p = lane.path.point_at(v.s);
  v.pose = {p.x, p.y, lane.path.heading_at(v.s)};
  return v;
}

ActorState step_pedestrian(const WorldState& world, std::size_t self_index) {
  const SidewalkGraph& graph = world.map->sidewalks;
  ActorState p = world.others[self_index];
  auto new_leg = [&p](std::vector<int> const& candidates) {
    p.to_node = candidates[static_cast<std::size_t>(pick(p.rng, candidates.size()))];
    p.leg_speed = uniform(p.rng, kPedSpeedMin, kPedSpeedMax);
  };
  if (uniform(p.rng, 0.0, 1.0) < kPedRetargetProb) {
    std::vector<int> options = graph.neighbors[static_cast<std::size_t>(p.from_node)];
    options.push_back(p.from_node);
    new_leg(options);
  }
  const Vec2 pos = p.pose.position();
  const Vec2 target = graph.nodes[static_cast<std::size_t>(p.to_node)];
  const Vec2 dir = target - pos;
  const double dist = dir.norm();
  const double step_len = p.leg_speed * kTickSeconds;
  const bool arrives = dist <= step_len;
  const Vec2 next = arrives ? target : pos + dir * (step_len / dist);
  const double heading = dist > 1e-9 ? std::atan2(dir.y, dir.x) : p.pose.heading;

  // Hold position rather than walk into a vehicle.
  const OrientedBox probe{next, heading, p.length + 0.6, p.width + 0.6};
  bool blocked = boxes_overlap(probe, world.ego.footprint());
  for (std::size_t j = 0; j < world.others.size() && !blocked; ++j) {
    if (world.others[j].kind == ActorKind::kVehicle) blocked = boxes_overlap(probe, world.others[j].footprint());
  }
  if (blocked) {
    p.accel = -p.speed / kTickSeconds;
    p.speed = 0.0;
    p.pose.heading = heading;
    return p;
  }
  const double moved = distance(pos, next);
  p.accel = (moved / kTickSeconds - p.speed) / kTickSeconds;
  p.speed = moved / kTickSeconds;
  p.pose = {next.x, next.y, heading};
  if (arrives) {
    p.from_node = p.to_node;
    new_leg(graph.neighbors[static_cast<std::size_t>(p.from_node)]);
  }
  return p;
}

void update_route(const TownMap& map, WorldState& world) {
  const std::size_t idx = closest_waypoint(world);
  auto& wps = world.route.waypoints;
  const std::size_t drop = idx > 0 ? idx - 1 : 0;
  wps.erase(wps.begin(), wps.begin() + static_cast<std::ptrdiff_t>(drop));
  const std::size_t ahead = wps.size() - (idx - drop);
  if (ahead < static_cast<std::size_t>(kRouteMinAhead)) extend_route(map, world.route, kRouteTargetSize);
}

}  // namespace

const char* to_string(InfractionType type) {
  switch (type) {
    case InfractionType::kVehicleCollision:
      return "collision_vehicle";
    case InfractionType::kPedestrianCollision:
      return "collision_pedestrian";
    case InfractionType::kRedLight:
      return "red_light";
  }
  return "unknown";
}

Route plan_route(const TownMap& map, int lane, double s, std::uint64_t seed, int max_waypoints) {
  Route route;
  route.rng.seed(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  route.frontier_lane = lane;
  route.frontier_s = s;
  extend_route(map, route, max_waypoints);
  return route;
}

void extend_route(const TownMap& map, Route& route, int count) {
  while (static_cast<int>(route.waypoints.size()) < count && !route.exhausted) {
    const Lane& lane = map.lanes.at(static_cast<std::size_t>(route.frontier_lane));
    const double len = lane.path.length();
    if (route.frontier_s <= len + 1e-9) {
      const double s = std::min(route.frontier_s, len);
      route.waypoints.push_back({lane.path.point_at(s), lane.path.heading_at(s), lane.id, s});
      route.frontier_s += kWaypointSpacing;
      continue;
    }
    if (lane.successors.empty()) {
      route.exhausted = true;
      break;
    }
    route.frontier_s -= len;
    route.frontier_lane = lane.successors[static_cast<std::size_t>(pick(route.rng, lane.successors.size()))];
  }
}

double stanley_law(double heading_error, double cross_track, double speed, const StanleyGains& gains) {
  const double steer = heading_error + std::atan2(gains.k * cross_track, speed + gains.v_soft);
  return std::clamp(steer, -gains.steer_max, gains.steer_max);
}

TrackingError tracking_error(const ActorState& ego, const std::deque<Waypoint>& route, double wheelbase) {
  if (route.empty()) throw std::invalid_argument("route is empty");
  const Vec2 front = ego.pose.position() + unit_from_heading(ego.pose.heading) * (0.5 * wheelbase);
  Vec2 nearest = route.front().position;
  double tangent_heading = route.front().heading;
  double best = distance(front, nearest);
  const std::size_t limit = std::min<std::size_t>(route.size(), 30);
  for (std::size_t i = 0; i + 1 < limit; ++i) {
    const Vec2 a = route[i].position;
    const Vec2 d = route[i + 1].position - a;
    const double len2 = d.dot(d);
    if (len2 <= 0.0) continue;
    const double t = std::clamp((front - a).dot(d) / len2, 0.0, 1.0);
    const Vec2 q = a + d * t;
    const double dist = distance(front, q);
    if (dist < best) {
      best = dist;
      nearest = q;
      tangent_heading = std::atan2(d.y, d.x);
    }
  }
  TrackingError err;
  err.heading_error = wrap_angle(tangent_heading - ego.pose.heading);
  err.cross_track = unit_from_heading(tangent_heading).cross(nearest - front);
  return err;
}

double stanley_steering(const ActorState& ego, const std::deque<Waypoint>& route, const StanleyGains& gains,
                        double wheelbase) {
  const TrackingError err = tracking_error(ego, route, wheelbase);
  return stanley_law(err.heading_error, err.cross_track, ego.speed, gains);
}

double compute_reward(const RewardFlags& flags, double steer, double speed_abs) {
  return speed_abs - 10.0 * flags.speeding - 0.2 * std::abs(steer) * speed_abs - 5.0 * steer * steer -
         flags.off_route - 200.0 * flags.hit_vehicle - 200.0 * flags.hit_pedestrian - 200.0 * flags.ran_red;
}

std::size_t closest_waypoint(const WorldState& world) {
  const auto& wps = world.route.waypoints;
  const Vec2 p = world.ego.pose.position();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const double d = distance(p, wps[i].position);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

EgoMeasurement ego_measurements(const WorldState& world, double red_light_range_m) {
  const TownMap& map = *world.map;
  const auto& wps = world.route.waypoints;
  EgoMeasurement m;
  m.speed = world.ego.speed;
  m.accel = world.ego.accel;
  m.steer = world.ego_steer;
  if (wps.empty()) return m;
  const std::size_t idx = closest_waypoint(world);
  const Waypoint& wp = wps[idx];
  m.traj_distance = distance(world.ego.pose.position(), wp.position);
  m.traj_heading = wrap_angle(wp.heading - world.ego.pose.heading);
  m.speed_limit = map.lanes[static_cast<std::size_t>(wp.lane)].speed_limit;

  // First stop line on the route that the ego has not yet passed.
  int last_lane = -1;
  const std::size_t first = idx > 0 ? idx - 1 : 0;
  const std::size_t last = std::min(wps.size(), idx + 16);
  for (std::size_t i = first; i < last; ++i) {
    const int lane = wps[i].lane;
    if (lane == last_lane) continue;
    last_lane = lane;
    const int line_index = map.lanes[static_cast<std::size_t>(lane)].stop_line;
    if (line_index < 0) continue;
    const StopLine& line = map.stop_lines[static_cast<std::size_t>(line_index)];
    const double ahead = ((line.a + line.b) * 0.5 - world.ego.pose.position()).dot(line.direction);
    if (ahead < 0.0) continue;
    if (ahead <= red_light_range_m) {
      const LightState state = map.light_state(line_index, world.time_s());
      m.red_flag = state == LightState::kRed ? 1.0 : state == LightState::kYellow ? 0.5 : 0.0;
    }
    break;
  }
  return m;
}

InfractionReport detect_infractions(const WorldState& before, const WorldState& after) {
  const TownMap& map = *after.map;
  InfractionReport report;
  const EgoMeasurement m = ego_measurements(after);
  report.flags.speeding = after.ego.speed > m.speed_limit ? 1 : 0;
  report.flags.off_route = m.traj_distance > 1.0 ? 1 : 0;

  const OrientedBox ego_box = after.ego.footprint();
  for (const ActorState& other : after.others) {
    if (!boxes_overlap(ego_box, other.footprint())) continue;
    if (other.kind == ActorKind::kVehicle && !report.flags.hit_vehicle) {
      report.flags.hit_vehicle = 1;
      report.events.push_back({InfractionType::kVehicleCollision, after.ego.pose.position()});
    } else if (other.kind == ActorKind::kPedestrian && !report.flags.hit_pedestrian) {
      report.flags.hit_pedestrian = 1;
      report.events.push_back({InfractionType::kPedestrianCollision, after.ego.pose.position()});
    }
  }

  const auto bumper = [](const ActorState& ego) {
    return ego.pose.position() + unit_from_heading(ego.pose.heading) * (0.5 * ego.length);
  };
  const Vec2 b0 = bumper(before.ego);
  const Vec2 b1 = bumper(after.ego);
  const Vec2 motion = b1 - b0;
  if (motion.dot(motion) > 0.0) {
    for (std::size_t i = 0; i < map.stop_lines.size(); ++i) {
      const StopLine& line = map.stop_lines[i];
      if (motion.dot(line.direction) <= 0.0) continue;
      if (!segments_intersect(b0, b1, line.a, line.b)) continue;
      if (map.light_state(static_cast<int>(i), before.time_s()) == LightState::kRed) {
        report.flags.ran_red = 1;
        report.events.push_back({InfractionType::kRedLight, (line.a + line.b) * 0.5});
        break;
      }
    }
  }
  return report;
}

ActorState autopilot_step(const WorldState& world, std::size_t self) {
  const ActorState& actor = world.others.at(self);
  switch (actor.kind) {
    case ActorKind::kVehicle:
      return step_vehicle(world, self);
    case ActorKind::kPedestrian:
      return step_pedestrian(world, self);
    case ActorKind::kEgo:
      break;
  }
  throw std::invalid_argument("autopilot_step called on the ego");
}

StepResult step(const WorldState& world, double action) {
  const double a = std::clamp(std::isfinite(action) ? action : 0.0, -1.0, 1.0);
  StepResult out{world, {}};
  WorldState& next = out.state;
  const VehicleDynamics& dyn = world.dynamics;

  const double steer = stanley_steering(world.ego, world.route.waypoints, world.stanley, dyn.wheelbase);
  const double accel_cmd = a >= 0.0 ? a * dyn.accel_max : a * dyn.brake_max;
  const double v0 = world.ego.speed;
  const double v1 = std::clamp(v0 + accel_cmd * kTickSeconds, 0.0, dyn.speed_max);
  ActorState& ego = next.ego;
  ego.speed = v1;
  ego.accel = (v1 - v0) / kTickSeconds;
  const double heading = world.ego.pose.heading;
  ego.pose.x += v1 * std::cos(heading) * kTickSeconds;
  ego.pose.y += v1 * std::sin(heading) * kTickSeconds;
  ego.pose.heading = wrap_angle(heading + v1 / dyn.wheelbase * std::tan(steer) * kTickSeconds);
  next.ego_steer = steer;

  for (std::size_t i = 0; i < world.others.size(); ++i) next.others[i] = autopilot_step(world, i);
  std::erase_if(next.others, [](const ActorState& s) { return s.kind == ActorKind::kVehicle && s.lane < 0; });
  next.tick = world.tick + 1;
  update_route(*world.map, next);

  const InfractionReport report = detect_infractions(world, next);
  StepEvents& ev = out.events;
  ev.flags = report.flags;
  ev.infractions = report.events;
  ev.distance = v1 * kTickSeconds;
  ev.steer = steer;
  ev.reward = compute_reward(report.flags, steer, v1);
  ev.terminated = report.flags.hit_vehicle || report.flags.hit_pedestrian;
  const std::size_t idx = closest_waypoint(next);
  ev.route_complete = next.route.exhausted && idx + 1 >= next.route.waypoints.size();
  return out;
}

std::shared_ptr<const TownMap> make_map(const ScenarioConfig& config) {
  if (config.layout == Layout::kStopLine) {
    StopLineWorldOptions opts;
    opts.speed_limit_mps = config.speed_limit_mps;
    opts.road_length_m = 300.0;
    return std::make_shared<const TownMap>(build_stop_line_world(opts));
  }
  TownOptions opts;
  opts.block_length_m = config.block_length_m;
  opts.speed_limit_mps = config.speed_limit_mps;
  return std::make_shared<const TownMap>(build_town(config.grid_rows, config.grid_cols, config.seed, opts));
}

ActorState make_vehicle(const TownMap& map, int lane, double s, std::uint32_t seed) {
  ActorState v;
  v.kind = ActorKind::kVehicle;
  v.length = 4.5;
  v.width = 2.0;
  v.lane = lane;
  v.s = s;
  v.rng.seed(seed);
  top_up_plan(map, v, 3);
  const Lane& l = map.lanes.at(static_cast<std::size_t>(lane));
  const Vec2 p = l.path.point_at(s);
  v.pose = {p.x, p.y, l.path.heading_at(s)};
  return v;
}

ActorState make_pedestrian(const TownMap& map, int from_node, int to_node, double fraction, std::uint32_t seed) {
  ActorState p;
  p.kind = ActorKind::kPedestrian;
  p.length = kPedSize;
  p.width = kPedSize;
  p.from_node = from_node;
  p.to_node = to_node;
  p.rng.seed(seed);
  p.leg_speed = uniform(p.rng, kPedSpeedMin, kPedSpeedMax);
  const Vec2 a = map.sidewalks.nodes.at(static_cast<std::size_t>(from_node));
  const Vec2 b = map.sidewalks.nodes.at(static_cast<std::size_t>(to_node));
  const Vec2 pos = a + (b - a) * fraction;
  p.pose = {pos.x, pos.y, std::atan2(b.y - a.y, b.x - a.x)};
  return p;
}

namespace {

bool is_clear(const WorldState& world, const Vec2& p, double radius, const ActorState* skip) {
  for (const ActorState& other : world.others) {
    if (&other != skip && distance(other.pose.position(), p) < radius) return false;
  }
  return true;
}

}  // namespace

void respawn_ego(WorldState& world) {
  const TownMap& map = *world.map;
  const bool stop_line_world = map.grid_rows == 1 && map.grid_cols == 1;
  const std::vector<int> roads = stop_line_world ? std::vector<int>{0} : map.road_lanes();
  std::uniform_int_distribution<std::size_t> lane_pick(0, roads.size() - 1);
  int lane = roads.front();
  double s = 5.0;
  for (int attempt = 0; attempt < 500; ++attempt) {
    lane = roads[lane_pick(world.rng)];
    const double len = map.lanes[static_cast<std::size_t>(lane)].path.length();
    s = stop_line_world ? std::uniform_real_distribution<double>(5.0, 30.0)(world.rng)
                        : std::uniform_real_distribution<double>(4.0, len - 4.0)(world.rng);
    if (is_clear(world, map.lanes[static_cast<std::size_t>(lane)].path.point_at(s), 12.0, nullptr)) break;
  }
  const Lane& l = map.lanes[static_cast<std::size_t>(lane)];
  const Vec2 p = l.path.point_at(s);
  world.ego = ActorState{};
  world.ego.kind = ActorKind::kEgo;
  world.ego.length = 4.5;
  world.ego.width = 2.0;
  world.ego.pose = {p.x, p.y, l.path.heading_at(s)};
  world.ego_steer = 0.0;
  world.route = plan_route(map, lane, s, world.rng());
}

WorldState make_world(std::shared_ptr<const TownMap> map, const ScenarioConfig& config, std::uint64_t seed) {
  if (!map) throw std::invalid_argument("world needs a map");
  WorldState world;
  world.map = map;
  world.rng.seed(seed);
  const TownMap& town = *map;
  const bool stop_line_world = config.layout == Layout::kStopLine;
  world.tick = std::uniform_int_distribution<std::int64_t>(0, 359)(world.rng);

  if (stop_line_world) {
    respawn_ego(world);
    const double lead_s = world.route.waypoints.front().s + std::uniform_real_distribution<double>(15.0, 35.0)(world.rng);
    for (int i = 0; i < config.n_vehicles; ++i) {
      world.others.push_back(make_vehicle(town, 0, lead_s + 12.0 * i, static_cast<std::uint32_t>(world.rng())));
    }
    return world;
  }

  const std::vector<int> roads = town.road_lanes();
  std::uniform_int_distribution<std::size_t> lane_pick(0, roads.size() - 1);
  for (int i = 0; i < config.n_vehicles; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int lane = roads[lane_pick(world.rng)];
      const double len = town.lanes[static_cast<std::size_t>(lane)].path.length();
      const double s = std::uniform_real_distribution<double>(3.0, len - 3.0)(world.rng);
      if (!is_clear(world, town.lanes[static_cast<std::size_t>(lane)].path.point_at(s), 10.0, nullptr)) continue;
      world.others.push_back(make_vehicle(town, lane, s, static_cast<std::uint32_t>(world.rng())));
      break;
    }
  }
  if (!town.sidewalks.nodes.empty()) {
    std::uniform_int_distribution<std::size_t> node_pick(0, town.sidewalks.nodes.size() - 1);
    for (int i = 0; i < config.n_pedestrians; ++i) {
      const int from = static_cast<int>(node_pick(world.rng));
      const auto& nbrs = town.sidewalks.neighbors[static_cast<std::size_t>(from)];
      const int to = nbrs[std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(world.rng)];
      const double frac = std::uniform_real_distribution<double>(0.0, 1.0)(world.rng);
      world.others.push_back(make_pedestrian(town, from, to, frac, static_cast<std::uint32_t>(world.rng())));
    }
  }
  respawn_ego(world);
  return world;
}

}  // namespace rdn::sim
