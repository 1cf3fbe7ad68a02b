#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seannet/geometry.hpp"
#include "seannet/scene_graph.hpp"

namespace seannet {

// Grid pose: position (i·d, j·d) with one of four headings in degrees.
struct Pose {
  int i = 0;
  int j = 0;
  int heading = 0;  // 0, 90, 180, 270

  bool operator==(const Pose&) const = default;
};

inline bool valid_heading(int h) {
  return h == 0 || h == 90 || h == 180 || h == 270;
}

// Unit grid direction for a heading (0° points along +x).
inline std::pair<int, int> heading_dir(int heading) {
  switch (heading) {
    case 0: return {1, 0};
    case 90: return {0, 1};
    case 180: return {-1, 0};
    default: return {0, -1};
  }
}

enum class Dynamics : std::uint8_t { kStatic, kLowDynamic, kHighDynamic };

const char* dynamics_name(Dynamics d);
Dynamics dynamics_from_name(std::string_view name);

struct ObjectInstance {
  int id = 0;
  std::string class_label;
  Dynamics dynamics = Dynamics::kStatic;
  OrientedBox3 box;
  int texture_id = 0;

  bool operator==(const ObjectInstance&) const = default;
};

struct GridCell {
  int i = 0;
  int j = 0;
  auto operator<=>(const GridCell&) const = default;
};

struct ClassSpec {
  std::string label;
  Dynamics dynamics = Dynamics::kStatic;
  Vec3 half_extents;     // nominal, jittered per instance
  bool surface = false;  // other objects may rest on its top face
};

std::vector<ClassSpec> default_catalog();

struct WorldConfig {
  double width = 6.0;   // bounds [0, width] × [0, height] meters
  double height = 6.0;
  double cell = 0.25;   // grid cell length d
  int max_instances = 32;  // M
  int object_count = 12;
  int feature_dim = 64;    // procedural visual feature width
  double stack_prob = 0.5;
  double placement_margin = 0.3;
  std::vector<ClassSpec> catalog = default_catalog();
};

struct CameraConfig {
  int image_size = 224;
  double fov_deg = 90.0;
  double max_range = 5.0;
  double eye_height = 1.0;
  double near_plane = 0.05;
  // Detector noise: bbox corners jittered uniformly by up to this many
  // pixels, seeded by (world, pose, object) so a repeated render is
  // bit-identical. 0 keeps ground-truth boxes.
  double detection_noise_px = 0.0;
};

struct WorldState {
  std::uint64_t seed = 0;
  double width = 0.0;
  double height = 0.0;
  double cell = 0.25;
  int max_instances = 0;
  int feature_dim = 64;
  std::vector<ObjectInstance> objects;
  // (i, j): object j rests on object i.
  std::vector<std::pair<int, int>> support_pairs;
  std::vector<GridCell> reachable;  // sorted

  bool is_reachable(int i, int j) const;
  bool has_support(int supporter, int supported) const;
  std::optional<int> supporter_of(int object_id) const;
  const ObjectInstance& object(int id) const;
  Vec3 pose_position(const Pose& p, double z) const {
    return {p.i * cell, p.j * cell, z};
  }
};

struct Detection {
  int object_id = 0;
  std::string class_label;
  BBox2 bbox;
  std::vector<double> feature;

  bool operator==(const Detection&) const = default;
};

struct Observation {
  Pose pose;
  std::vector<Detection> detections;  // sorted by object id
  SceneGraph scene_graph;

  bool operator==(const Observation&) const = default;
};

// Deterministic synthetic world: objects drawn from the catalog, placed by
// rejection sampling, small items optionally stacked on static surfaces.
WorldState gen_world(std::uint64_t seed, const WorldConfig& config);

// Object-level dynamics. Static objects keep their exact boxes; low-dynamic
// objects move within their bounding-sphere radius; high-dynamic objects
// relocate anywhere in bounds. Placement conflicts resample up to 100 times,
// then the previous pose is kept.
WorldState apply_dynamics(const WorldState& world, std::uint64_t seed);

// Unit-norm state feature: normalize(base(class, id) + 0.25·perturb(texture,
// pose quantized to the grid and 90°)), components from seeded unit
// Gaussian streams.
std::vector<double> procedural_feature(const ObjectInstance& object,
                                       int feature_dim, double cell);

// Pinhole view from a reachable pose: one detection per object whose box
// center lies inside the frustum; no occlusion.
Observation render_observation(const WorldState& world, const Pose& pose,
                               const CameraConfig& camera);

// render_observation + scene-graph extraction.
Observation observe(const WorldState& world, const Pose& pose,
                    const CameraConfig& camera);

std::string serialize_world(const WorldState& world);
WorldState parse_world(const std::string& text);

std::string serialize_observation(const Observation& obs);
Observation parse_observation(const std::string& text);

}  // namespace seannet
