#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recurrdrive/geometry.hpp"
#include "recurrdrive/sim/world.hpp"

namespace rdn::bev {

enum class BevMode { kRgb, kGray, kMulti };

BevMode parse_mode(const std::string& name);
const char* to_string(BevMode mode);
int channel_count(BevMode mode);

// Multi-BEV channel order.
enum Channel : int { kMap = 0, kWaypoints = 1, kLights = 2, kEgo = 3, kVehicles = 4, kPedestrians = 5 };

struct RenderConfig {
  int size = 128;               // K
  double meters_per_pixel = 0.25;
  // Anchor defaults to (3K/4, K/2) when negative.
  int anchor_row = -1;
  int anchor_col = -1;
  double waypoint_width_m = 1.0;
  double stop_line_depth_m = 1.0;
  double pedestrian_scale = 2.0;
  int waypoints_drawn = 25;

  int row0() const { return anchor_row >= 0 ? anchor_row : 3 * size / 4; }
  int col0() const { return anchor_col >= 0 ? anchor_col : size / 2; }
};

// Default render settings for an image size: 0.25 m/px at K=128, same 32 m field of view otherwise.
RenderConfig default_render_config(int size);

struct BevObservation {
  BevMode mode = BevMode::kMulti;
  int channels = 0;
  int size = 0;
  std::vector<float> data;  // channels x size x size, row-major

  float at(int c, int row, int col) const {
    return data[(static_cast<std::size_t>(c) * size + row) * size + col];
  }
};

struct PixelIndex {
  int row = 0;
  int col = 0;
};

// Ego-centric heading-up transform. Returns nullopt when outside [0, K)^2.
std::optional<PixelIndex> world_to_pixel(const Vec2& point, const Pose& ego, const RenderConfig& config);

// World coordinates of the centre of pixel (row, col).
Vec2 pixel_center(int row, int col, const Pose& ego, const RenderConfig& config);

// A shape the rasterizer draws, tagged with its class and intensity.
enum class ShapeClass { kRoad, kWaypoint, kLight, kVehicle, kPedestrian, kEgo };

struct Shape {
  ShapeClass cls;
  OrientedBox box;
  float intensity = 1.0f;  // multi-channel value (lights: red 1.0, yellow 0.5, green 0.25)
};

// All shapes a frame draws, in draw order, in world coordinates (pedestrians already enlarged).
std::vector<Shape> scene_shapes(const sim::WorldState& world, const RenderConfig& config);

BevObservation rasterize(const sim::WorldState& world, BevMode mode, const RenderConfig& config);

// Class tables for the gray and RGB encodings.
float gray_value(ShapeClass cls, float light_intensity);
std::array<float, 3> rgb_value(ShapeClass cls, float light_intensity);

// (L*C) x K x K, oldest first; the oldest frame is replicated to fill missing history.
BevObservation stack_frames(std::span<const BevObservation> history, int length);

// Rolling history feeding stack_frames; `reset` starts a new episode.
class FrameStack {
 public:
  explicit FrameStack(int length) : length_(length) {}
  void reset() { frames_.clear(); }
  void push(BevObservation frame);
  BevObservation stacked() const;
  int length() const { return length_; }

 private:
  int length_;
  std::vector<BevObservation> frames_;
};

}  // namespace rdn::bev
