#include "recurrdrive/bev/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdn::bev {

BevMode parse_mode(const std::string& name) {
  if (name == "rgb") return BevMode::kRgb;
  if (name == "gray") return BevMode::kGray;
  if (name == "multi") return BevMode::kMulti;
  throw std::invalid_argument("unknown BEV mode '" + name + "' (expected rgb|gray|multi)");
}

const char* to_string(BevMode mode) {
  switch (mode) {
    case BevMode::kRgb:
      return "rgb";
    case BevMode::kGray:
      return "gray";
    case BevMode::kMulti:
      return "multi";
  }
  return "?";
}

int channel_count(BevMode mode) {
  switch (mode) {
    case BevMode::kRgb:
      return 3;
    case BevMode::kGray:
      return 1;
    case BevMode::kMulti:
      return 6;
  }
  return 0;
}

RenderConfig default_render_config(int size) {
  RenderConfig config;
  config.size = size;
  config.meters_per_pixel = 32.0 / size;
  return config;
}

std::optional<PixelIndex> world_to_pixel(const Vec2& point, const Pose& ego, const RenderConfig& config) {
  const Vec2 d = point - ego.position();
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  const double forward = d.x * c + d.y * s;
  const double left = -d.x * s + d.y * c;
  const double row = config.row0() - forward / config.meters_per_pixel;
  const double col = config.col0() - left / config.meters_per_pixel;
  const int r = static_cast<int>(std::floor(row + 0.5));
  const int k = static_cast<int>(std::floor(col + 0.5));
  if (r < 0 || r >= config.size || k < 0 || k >= config.size) return std::nullopt;
  return PixelIndex{r, k};
}

Vec2 pixel_center(int row, int col, const Pose& ego, const RenderConfig& config) {
  const double forward = (config.row0() - row) * config.meters_per_pixel;
  const double left = (config.col0() - col) * config.meters_per_pixel;
  const Vec2 f = unit_from_heading(ego.heading);
  const Vec2 l{-f.y, f.x};
  return ego.position() + f * forward + l * left;
}

float gray_value(ShapeClass cls, float light_intensity) {
  switch (cls) {
    case ShapeClass::kRoad:
      return 0.40f;
    case ShapeClass::kWaypoint:
      return 0.50f;
    case ShapeClass::kLight:
      return light_intensity >= 1.0f ? 0.35f : light_intensity >= 0.5f ? 0.25f : 0.15f;
    case ShapeClass::kVehicle:
      return 0.70f;
    case ShapeClass::kPedestrian:
      return 0.85f;
    case ShapeClass::kEgo:
      return 1.00f;
  }
  return 0.0f;
}

std::array<float, 3> rgb_value(ShapeClass cls, float light_intensity) {
  auto rgb = [](int r, int g, int b) {
    return std::array<float, 3>{static_cast<float>(r) / 255.0f, static_cast<float>(g) / 255.0f,
                                static_cast<float>(b) / 255.0f};
  };
  switch (cls) {
    case ShapeClass::kRoad:
      return rgb(128, 128, 128);
    case ShapeClass::kWaypoint:
      return rgb(255, 105, 180);
    case ShapeClass::kLight:
      return light_intensity >= 1.0f ? rgb(255, 0, 0) : light_intensity >= 0.5f ? rgb(255, 255, 0) : rgb(0, 255, 0);
    case ShapeClass::kVehicle:
      return rgb(0, 0, 255);
    case ShapeClass::kPedestrian:
      return rgb(204, 153, 0);
    case ShapeClass::kEgo:
      return rgb(255, 255, 255);
  }
  return {0.0f, 0.0f, 0.0f};
}

namespace {

float light_intensity(sim::LightState state) {
  switch (state) {
    case sim::LightState::kRed:
      return 1.0f;
    case sim::LightState::kYellow:
      return 0.5f;
    case sim::LightState::kGreen:
      return 0.25f;
  }
  return 0.0f;
}

int multi_channel(ShapeClass cls) {
  switch (cls) {
    case ShapeClass::kRoad:
      return kMap;
    case ShapeClass::kWaypoint:
      return kWaypoints;
    case ShapeClass::kLight:
      return kLights;
    case ShapeClass::kEgo:
      return kEgo;
    case ShapeClass::kVehicle:
      return kVehicles;
    case ShapeClass::kPedestrian:
      return kPedestrians;
  }
  return -1;
}

// Calls visit(row, col) for each pixel whose centre lies inside `box`.
template <typename Visit>
void fill_box(const OrientedBox& box, const Pose& ego, const RenderConfig& config, Visit&& visit) {
  const double mpp = config.meters_per_pixel;
  const double ce = std::cos(ego.heading);
  const double se = std::sin(ego.heading);
  const Vec2 d = box.center - ego.position();
  const double cf = d.x * ce + d.y * se;   // box centre, ego frame (forward, left)
  const double cl = -d.x * se + d.y * ce;
  const double rel = box.heading - ego.heading;
  const double cr = std::cos(rel);
  const double sr = std::sin(rel);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const double ext_f = hl * std::abs(cr) + hw * std::abs(sr);
  const double ext_l = hl * std::abs(sr) + hw * std::abs(cr);
  const int row0 = config.row0();
  const int col0 = config.col0();
  const int r_lo = std::max(0, static_cast<int>(std::floor(row0 - (cf + ext_f) / mpp)) - 1);
  const int r_hi = std::min(config.size - 1, static_cast<int>(std::ceil(row0 - (cf - ext_f) / mpp)) + 1);
  const int c_lo = std::max(0, static_cast<int>(std::floor(col0 - (cl + ext_l) / mpp)) - 1);
  const int c_hi = std::min(config.size - 1, static_cast<int>(std::ceil(col0 - (cl - ext_l) / mpp)) + 1);
  for (int r = r_lo; r <= r_hi; ++r) {
    const double df = (row0 - r) * mpp - cf;
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dl = (col0 - c) * mpp - cl;
      const double along = df * cr + dl * sr;
      const double across = -df * sr + dl * cr;
      if (std::abs(along) <= hl && std::abs(across) <= hw) visit(r, c);
    }
  }
}

}  // namespace

std::vector<Shape> scene_shapes(const sim::WorldState& world, const RenderConfig& config) {
  const sim::TownMap& map = *world.map;
  const Pose& ego = world.ego.pose;
  const double view_radius =
      std::hypot(std::max(config.row0(), config.size - config.row0()), std::max(config.col0(), config.size - config.col0())) *
          config.meters_per_pixel + 1.0;
  auto visible = [&](const OrientedBox& box) {
    return distance(box.center, ego.position()) - 0.5 * std::hypot(box.length, box.width) <= view_radius;
  };
  std::vector<Shape> shapes;
  auto add = [&](ShapeClass cls, const OrientedBox& box, float intensity) {
    if (visible(box)) shapes.push_back({cls, box, intensity});
  };

  for (const OrientedBox& road : map.road_surface) add(ShapeClass::kRoad, road, 1.0f);

  const auto& wps = world.route.waypoints;
  if (!wps.empty()) {
    const std::size_t first = sim::closest_waypoint(world);
    const std::size_t last = std::min(wps.size(), first + static_cast<std::size_t>(config.waypoints_drawn));
    for (std::size_t i = first; i + 1 < last; ++i) {
      const Vec2 a = wps[i].position;
      const Vec2 b = wps[i + 1].position;
      const Vec2 d = b - a;
      if (d.norm() <= 0.0) continue;
      add(ShapeClass::kWaypoint, {(a + b) * 0.5, std::atan2(d.y, d.x), d.norm(), config.waypoint_width_m}, 1.0f);
    }
  }

  for (std::size_t i = 0; i < map.stop_lines.size(); ++i) {
    const sim::StopLine& line = map.stop_lines[i];
    const Vec2 center = (line.a + line.b) * 0.5 - line.direction * (0.5 * config.stop_line_depth_m);
    const OrientedBox box{center, std::atan2(line.direction.y, line.direction.x), config.stop_line_depth_m,
                          distance(line.a, line.b)};
    add(ShapeClass::kLight, box, light_intensity(map.light_state(static_cast<int>(i), world.time_s())));
  }

  for (const auto& other : world.others) {
    if (other.kind == sim::ActorKind::kVehicle) add(ShapeClass::kVehicle, other.footprint(), 1.0f);
  }
  for (const auto& other : world.others) {
    if (other.kind != sim::ActorKind::kPedestrian) continue;
    OrientedBox box = other.footprint();
    box.length *= config.pedestrian_scale;
    box.width *= config.pedestrian_scale;
    add(ShapeClass::kPedestrian, box, 1.0f);
  }
  add(ShapeClass::kEgo, world.ego.footprint(), 1.0f);
  return shapes;
}

BevObservation rasterize(const sim::WorldState& world, BevMode mode, const RenderConfig& config) {
  if (config.size <= 0 || config.meters_per_pixel <= 0.0) throw std::invalid_argument("bad render config");
  BevObservation obs;
  obs.mode = mode;
  obs.channels = channel_count(mode);
  obs.size = config.size;
  const std::size_t plane = static_cast<std::size_t>(config.size) * config.size;
  obs.data.assign(plane * obs.channels, 0.0f);
  const Pose& ego = world.ego.pose;
  const auto shapes = scene_shapes(world, config);
  const int k = config.size;

  for (const Shape& shape : shapes) {
    switch (mode) {
      case BevMode::kMulti: {
        float* ch = obs.data.data() + plane * multi_channel(shape.cls);
        fill_box(shape.box, ego, config, [&](int r, int c) {
          float& px = ch[static_cast<std::size_t>(r) * k + c];
          px = std::max(px, shape.intensity);
        });
        break;
      }
      case BevMode::kGray: {
        const float v = gray_value(shape.cls, shape.intensity);
        fill_box(shape.box, ego, config, [&](int r, int c) { obs.data[static_cast<std::size_t>(r) * k + c] = v; });
        break;
      }
      case BevMode::kRgb: {
        const auto v = rgb_value(shape.cls, shape.intensity);
        fill_box(shape.box, ego, config, [&](int r, int c) {
          const std::size_t at = static_cast<std::size_t>(r) * k + c;
          obs.data[at] = v[0];
          obs.data[plane + at] = v[1];
          obs.data[2 * plane + at] = v[2];
        });
        break;
      }
    }
  }
  return obs;
}

BevObservation stack_frames(std::span<const BevObservation> history, int length) {
  if (history.empty()) throw std::invalid_argument("frame history is empty");
  if (length < 1) throw std::invalid_argument("stack length must be positive");
  const BevObservation& ref = history.front();
  for (const auto& f : history) {
    if (f.mode != ref.mode || f.size != ref.size || f.channels != ref.channels) {
      throw std::invalid_argument("mixed modes in frame history");
    }
  }
  const int n = static_cast<int>(history.size());
  BevObservation out;
  out.mode = ref.mode;
  out.size = ref.size;
  out.channels = ref.channels * length;
  const std::size_t frame_size = ref.data.size();
  out.data.resize(frame_size * length);
  for (int block = 0; block < length; ++block) {
    const int src = std::max(0, n - length + block);
    std::copy(history[static_cast<std::size_t>(src)].data.begin(), history[static_cast<std::size_t>(src)].data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(frame_size * block));
  }
  return out;
}

void FrameStack::push(BevObservation frame) {
  frames_.push_back(std::move(frame));
  if (static_cast<int>(frames_.size()) > length_) frames_.erase(frames_.begin());
}

BevObservation FrameStack::stacked() const { return stack_frames(frames_, length_); }

}  // namespace rdn::bev
