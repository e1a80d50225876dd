#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "recurrdrive/geometry.hpp"
#include "recurrdrive/sim/town.hpp"

namespace rdn::sim {

inline constexpr double kTickSeconds = 0.1;

enum class ActorKind { kEgo, kVehicle, kPedestrian };

struct ActorState {
  ActorKind kind = ActorKind::kVehicle;
  Pose pose;
  double speed = 0.0;
  double accel = 0.0;
  double length = 4.5;
  double width = 2.0;

  // Vehicles: lane progress and the next lanes to drive.
  int lane = -1;
  double s = 0.0;
  std::vector<int> lane_plan;

  // Pedestrians: walking leg between sidewalk nodes.
  int from_node = -1;
  int to_node = -1;
  double leg_speed = 0.0;

  std::minstd_rand rng;

  OrientedBox footprint() const { return {pose.position(), pose.heading, length, width}; }
};

struct Waypoint {
  Vec2 position;
  double heading = 0.0;
  int lane = -1;
  double s = 0.0;  // arc position on `lane`
};

struct Route {
  std::deque<Waypoint> waypoints;
  int frontier_lane = -1;       // lane holding the next waypoint to generate
  double frontier_s = 0.0;      // its arc position on that lane
  bool exhausted = false;       // dead end reached, no further extension possible
  std::minstd_rand rng;
};

struct VehicleDynamics {
  double accel_max = 3.0;     // m/s^2 at a = +1
  double brake_max = 8.0;     // m/s^2 at a = -1
  double speed_max = 15.0;
  double wheelbase = 2.5;
  double steer_max = 0.61;
};

struct StanleyGains {
  double k = 2.5;
  double v_soft = 1.0;
  double steer_max = 0.61;
};

enum class Layout { kGrid, kStopLine };

// Scenario file contents; see `load_scenario` in config.hpp.
struct ScenarioConfig {
  Layout layout = Layout::kGrid;
  int grid_rows = 4;
  int grid_cols = 4;
  std::uint64_t seed = 0;
  int n_vehicles = 30;
  int n_pedestrians = 50;
  double speed_limit_mps = 8.0;
  double block_length_m = 60.0;
};

struct WorldState {
  std::shared_ptr<const TownMap> map;
  ActorState ego;
  double ego_steer = 0.0;
  std::vector<ActorState> others;
  Route route;
  std::int64_t tick = 0;
  VehicleDynamics dynamics;
  StanleyGains stanley;
  std::mt19937_64 rng;  // spawning

  double time_s() const { return static_cast<double>(tick) * kTickSeconds; }
};

struct EgoMeasurement {
  double traj_distance = 0.0;   // to the closest route waypoint, m
  double traj_heading = 0.0;    // waypoint heading minus ego heading, rad
  double speed = 0.0;
  double accel = 0.0;
  double steer = 0.0;
  double speed_limit = 0.0;
  double red_flag = 0.0;        // 1.0 red, 0.5 yellow, 0.0 otherwise

  static constexpr int kSize = 7;
  std::array<double, kSize> as_array() const {
    return {traj_distance, traj_heading, speed, accel, steer, speed_limit, red_flag};
  }
};

struct RewardFlags {
  int speeding = 0;      // f_s
  int off_route = 0;     // f_o
  int hit_vehicle = 0;   // f_v
  int hit_pedestrian = 0;// f_p
  int ran_red = 0;       // f_r
};

enum class InfractionType { kVehicleCollision, kPedestrianCollision, kRedLight };

const char* to_string(InfractionType type);

struct InfractionEvent {
  InfractionType type;
  Vec2 position;
};

struct InfractionReport {
  RewardFlags flags;
  std::vector<InfractionEvent> events;
};

struct StepEvents {
  RewardFlags flags;
  std::vector<InfractionEvent> infractions;
  double distance = 0.0;
  double reward = 0.0;
  double steer = 0.0;
  bool terminated = false;       // collision
  bool route_complete = false;   // dead-end route consumed
};

struct StepResult {
  WorldState state;
  StepEvents events;
};

// --- operations ---

// Waypoints every 2 m along lane centrelines starting at (lane, s). Stops early at a dead end.
Route plan_route(const TownMap& map, int lane, double s, std::uint64_t seed, int max_waypoints = 40);

// Appends waypoints until `count` are available or the route is exhausted.
void extend_route(const TownMap& map, Route& route, int count);

// The raw control law; the vehicle helper computes its arguments from the route.
double stanley_law(double heading_error, double cross_track, double speed, const StanleyGains& gains);

struct TrackingError {
  double heading_error = 0.0;
  double cross_track = 0.0;  // positive when the path lies to the left of the front axle
};

TrackingError tracking_error(const ActorState& ego, const std::deque<Waypoint>& route, double wheelbase);
double stanley_steering(const ActorState& ego, const std::deque<Waypoint>& route, const StanleyGains& gains,
                        double wheelbase = 2.5);

double compute_reward(const RewardFlags& flags, double steer, double speed_abs);

std::size_t closest_waypoint(const WorldState& world);
EgoMeasurement ego_measurements(const WorldState& world, double red_light_range_m = 15.0);

InfractionReport detect_infractions(const WorldState& before, const WorldState& after);

// Autopilot update from a frozen snapshot; `self` indexes world.others.
ActorState autopilot_step(const WorldState& world, std::size_t self);

StepResult step(const WorldState& world, double action);

// --- construction ---

std::shared_ptr<const TownMap> make_map(const ScenarioConfig& config);
WorldState make_world(std::shared_ptr<const TownMap> map, const ScenarioConfig& config, std::uint64_t seed);
// Places the ego on a free road position with a fresh route; other actors are untouched.
void respawn_ego(WorldState& world);

ActorState make_vehicle(const TownMap& map, int lane, double s, std::uint32_t seed);
ActorState make_pedestrian(const TownMap& map, int from_node, int to_node, double fraction, std::uint32_t seed);

}  // namespace rdn::sim
