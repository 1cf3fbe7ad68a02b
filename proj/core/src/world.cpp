#include "seannet/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "json_codec.hpp"
#include "seannet/errors.hpp"
#include "seannet/rng.hpp"
#include "seannet/version.hpp"

namespace seannet {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kWorldTag = 0x5ea9e7001ULL;
constexpr double kRobotHeight = 1.5;

double object_clearance(const OrientedBox3& box) {
  return std::hypot(box.half.x, box.half.y);
}

bool z_ranges_overlap(const OrientedBox3& a, const OrientedBox3& b) {
  return a.center.z - a.half.z < b.center.z + b.half.z &&
         b.center.z - b.half.z < a.center.z + a.half.z;
}

// Conflict = footprints overlap at intersecting heights.
bool placement_conflict(const OrientedBox3& box, int self_id,
                        const std::vector<ObjectInstance>& objects,
                        const WorldState* world) {
  for (const ObjectInstance& other : objects) {
    if (other.id == self_id) continue;
    // Supported objects legitimately share their supporter's footprint.
    if (world != nullptr && (world->has_support(self_id, other.id) ||
                             world->has_support(other.id, self_id)))
      continue;
    if (z_ranges_overlap(box, other.box) && footprints_overlap(box, other.box))
      return true;
  }
  return false;
}

bool inside_bounds(const OrientedBox3& box, double width, double height,
                   double margin) {
  const double r = object_clearance(box);
  return box.center.x - r >= margin && box.center.x + r <= width - margin &&
         box.center.y - r >= margin && box.center.y + r <= height - margin;
}

}  // namespace

const char* dynamics_name(Dynamics d) {
  switch (d) {
    case Dynamics::kStatic: return "static";
    case Dynamics::kLowDynamic: return "low_dynamic";
    default: return "high_dynamic";
  }
}

Dynamics dynamics_from_name(std::string_view name) {
  if (name == "static") return Dynamics::kStatic;
  if (name == "low_dynamic") return Dynamics::kLowDynamic;
  if (name == "high_dynamic") return Dynamics::kHighDynamic;
  throw IoError("unknown dynamics category: " + std::string(name));
}

std::vector<ClassSpec> default_catalog() {
  return {
      {"desk", Dynamics::kStatic, {0.60, 0.35, 0.375}, true},
      {"shelf", Dynamics::kStatic, {0.40, 0.15, 0.75}, false},
      {"cabinet", Dynamics::kStatic, {0.30, 0.25, 0.45}, true},
      {"counter", Dynamics::kStatic, {0.75, 0.30, 0.45}, true},
      {"sink", Dynamics::kStatic, {0.30, 0.25, 0.425}, false},
      {"door", Dynamics::kStatic, {0.45, 0.04, 1.0}, false},
      {"window", Dynamics::kStatic, {0.50, 0.05, 0.5}, false},
      {"radiator", Dynamics::kStatic, {0.40, 0.08, 0.25}, false},
      {"monitor", Dynamics::kLowDynamic, {0.28, 0.04, 0.175}, false},
      {"lamp", Dynamics::kLowDynamic, {0.12, 0.12, 0.25}, false},
      {"keyboard", Dynamics::kLowDynamic, {0.22, 0.08, 0.015}, false},
      {"printer", Dynamics::kLowDynamic, {0.22, 0.20, 0.15}, false},
      {"telephone", Dynamics::kLowDynamic, {0.10, 0.08, 0.05}, false},
      {"plant", Dynamics::kLowDynamic, {0.15, 0.15, 0.30}, false},
      {"speaker", Dynamics::kLowDynamic, {0.08, 0.08, 0.125}, false},
      {"book_stack", Dynamics::kLowDynamic, {0.15, 0.10, 0.125}, false},
      {"mug", Dynamics::kHighDynamic, {0.045, 0.045, 0.055}, false},
      {"chair", Dynamics::kHighDynamic, {0.25, 0.25, 0.45}, false},
      {"notebook", Dynamics::kHighDynamic, {0.125, 0.09, 0.01}, false},
      {"backpack", Dynamics::kHighDynamic, {0.175, 0.10, 0.225}, false},
  };
}

bool WorldState::is_reachable(int i, int j) const {
  return std::binary_search(reachable.begin(), reachable.end(),
                            GridCell{i, j});
}

bool WorldState::has_support(int supporter, int supported) const {
  return std::find(support_pairs.begin(), support_pairs.end(),
                   std::make_pair(supporter, supported)) !=
         support_pairs.end();
}

std::optional<int> WorldState::supporter_of(int object_id) const {
  for (const auto& [sup, obj] : support_pairs)
    if (obj == object_id) return sup;
  return std::nullopt;
}

const ObjectInstance& WorldState::object(int id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < objects.size() &&
      objects[id].id == id)
    return objects[id];
  for (const ObjectInstance& o : objects)
    if (o.id == id) return o;
  throw DomainError("unknown object id " + std::to_string(id));
}

WorldState gen_world(std::uint64_t seed, const WorldConfig& config) {
  if (config.width <= 0.0 || config.height <= 0.0 || config.cell <= 0.0)
    throw ConfigError("world bounds and cell length must be positive");
  if (config.max_instances < 1) throw ConfigError("max_instances must be >= 1");
  if (config.object_count < 1 || config.object_count > config.max_instances)
    throw ConfigError("object_count must be in [1, max_instances]");
  if (config.catalog.empty()) throw ConfigError("empty class catalog");
  if (config.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");

  WorldState world;
  world.seed = seed;
  world.width = config.width;
  world.height = config.height;
  world.cell = config.cell;
  world.max_instances = config.max_instances;
  world.feature_dim = config.feature_dim;

  Rng rng(hash_values(kWorldTag, "gen", seed));

  // Instance indices are a random sample of [0, M): worlds occupy distinct
  // slots of the feature matrix, as sparse instance ids do at full scale.
  std::vector<int> ids(config.max_instances);
  for (int k = 0; k < config.max_instances; ++k) ids[k] = k;
  for (std::size_t k = ids.size(); k > 1; --k)
    std::swap(ids[k - 1], ids[rng.uniform_int(static_cast<std::int64_t>(k))]);
  ids.resize(config.object_count);
  std::sort(ids.begin(), ids.end());

  for (int slot = 0; slot < config.object_count; ++slot) {
    const int id = ids[slot];
    const ClassSpec& spec =
        config.catalog[rng.uniform_int(std::ssize(config.catalog))];
    ObjectInstance obj;
    obj.id = id;
    obj.class_label = spec.label;
    obj.dynamics = spec.dynamics;
    obj.texture_id = 0;
    obj.box.half = {spec.half_extents.x * rng.uniform(0.8, 1.2),
                    spec.half_extents.y * rng.uniform(0.8, 1.2),
                    spec.half_extents.z * rng.uniform(0.8, 1.2)};

    // Collect static surfaces already placed that could hold this object.
    std::vector<int> hosts;
    if (spec.dynamics != Dynamics::kStatic) {
      const double r = std::hypot(obj.box.half.x, obj.box.half.y);
      for (const ObjectInstance& cand : world.objects) {
        const ClassSpec* cs = nullptr;
        for (const ClassSpec& c : config.catalog)
          if (c.label == cand.class_label) cs = &c;
        if (cs == nullptr || !cs->surface) continue;
        if (cand.dynamics != Dynamics::kStatic) continue;
        if (r < std::min(cand.box.half.x, cand.box.half.y)) hosts.push_back(cand.id);
      }
    }

    bool placed = false;
    const bool try_stack = !hosts.empty() && rng.uniform() < config.stack_prob;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      OrientedBox3 box = obj.box;
      int host_id = -1;
      if (try_stack) {
        host_id = hosts[rng.uniform_int(std::ssize(hosts))];
        const OrientedBox3& host = world.object(host_id).box;
        const double r = std::hypot(box.half.x, box.half.y);
        const double lx = rng.uniform(-(host.half.x - r), host.half.x - r);
        const double ly = rng.uniform(-(host.half.y - r), host.half.y - r);
        const double c = std::cos(host.yaw), s = std::sin(host.yaw);
        box.center = {host.center.x + c * lx - s * ly,
                      host.center.y + s * lx + c * ly,
                      host.top_z() + box.half.z};
        box.yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      } else {
        box.yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
        box.center = {rng.uniform(0.0, config.width),
                      rng.uniform(0.0, config.height), box.half.z};
      }
      if (!inside_bounds(box, config.width, config.height,
                         config.placement_margin))
        continue;
      if (host_id >= 0) world.support_pairs.emplace_back(host_id, id);
      if (placement_conflict(box, id, world.objects, &world)) {
        if (host_id >= 0) world.support_pairs.pop_back();
        continue;
      }
      obj.box = box;
      placed = true;
    }
    if (!placed) {
      // Retry budget exhausted; accept a floor pose without overlap checks.
      obj.box.yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      obj.box.center = {rng.uniform(0.5, config.width - 0.5),
                        rng.uniform(0.5, config.height - 0.5), obj.box.half.z};
    }
    world.objects.push_back(std::move(obj));
  }
  std::sort(world.support_pairs.begin(), world.support_pairs.end());

  const int ni = static_cast<int>(std::floor(config.width / config.cell)) + 1;
  const int nj = static_cast<int>(std::floor(config.height / config.cell)) + 1;
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < nj; ++j) {
      const double x = i * config.cell, y = j * config.cell;
      if (x > config.width || y > config.height) continue;
      bool blocked = false;
      for (const ObjectInstance& obj : world.objects) {
        if (world.supporter_of(obj.id).has_value()) continue;  // not on floor
        if (obj.box.center.z - obj.box.half.z > kRobotHeight) continue;
        if (obj.box.footprint_contains(x, y, 0.05)) {
          blocked = true;
          break;
        }
      }
      if (!blocked) world.reachable.push_back({i, j});
    }
  }
  std::sort(world.reachable.begin(), world.reachable.end());
  if (world.reachable.empty())
    throw ConfigError("world has no reachable cells");
  return world;
}

WorldState apply_dynamics(const WorldState& world, std::uint64_t seed) {
  WorldState out = world;
  out.seed = hash_values(kWorldTag, "dynamics", world.seed, seed);

  for (ObjectInstance& obj : out.objects) {
    if (obj.dynamics == Dynamics::kStatic) continue;
    Rng rng(hash_values(kWorldTag, "move", seed, std::uint64_t(obj.id)));
    const std::optional<int> host = out.supporter_of(obj.id);

    for (int attempt = 0; attempt < 100; ++attempt) {
      OrientedBox3 box = obj.box;
      if (obj.dynamics == Dynamics::kLowDynamic) {
        // In-plane displacement at most the bounding-sphere radius.
        const double radius = obj.box.bounding_radius();
        const double rho = radius * std::sqrt(rng.uniform());
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        box.center.x = obj.box.center.x + rho * std::cos(phi);
        box.center.y = obj.box.center.y + rho * std::sin(phi);
        if (host.has_value() &&
            !out.object(*host).box.footprint_contains(box.center.x,
                                                      box.center.y))
          continue;
      } else {
        box.center = {rng.uniform(0.0, out.width), rng.uniform(0.0, out.height),
                      box.half.z};
        box.yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      if (!inside_bounds(box, out.width, out.height, 0.05)) continue;
      if (placement_conflict(box, obj.id, out.objects, &out)) continue;
      if (obj.dynamics == Dynamics::kHighDynamic && host.has_value()) {
        std::erase(out.support_pairs, std::make_pair(*host, obj.id));
      }
      obj.box = box;
      break;
      // On exhaustion the previous pose is kept.
    }
  }
  return out;
}

std::vector<double> procedural_feature(const ObjectInstance& object,
                                       int feature_dim, double cell) {
  const auto qi = std::llround(object.box.center.x / cell);
  const auto qj = std::llround(object.box.center.y / cell);
  const auto qk = std::llround(object.box.center.z / cell);
  const double quarter = std::numbers::pi / 2.0;
  const auto qyaw =
      ((std::llround(object.box.yaw / quarter) % 4) + 4) % 4;

  std::uint64_t base_state = hash_values(
      kWorldTag, "feature-base", object.class_label, std::uint64_t(object.id));
  std::uint64_t pert_state = hash_values(
      kWorldTag, "feature-perturb", std::uint64_t(object.id),
      std::uint64_t(object.texture_id), static_cast<std::uint64_t>(qi),
      static_cast<std::uint64_t>(qj), static_cast<std::uint64_t>(qk),
      static_cast<std::uint64_t>(qyaw));

  auto gaussian = [](std::uint64_t& state) {
    const double u1 =
        1.0 - static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    const double u2 =
        static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  };

  std::vector<double> f(feature_dim);
  double sq = 0.0;
  for (int i = 0; i < feature_dim; ++i) {
    f[i] = gaussian(base_state) + 0.25 * gaussian(pert_state);
    sq += f[i] * f[i];
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : f) v *= inv;
  return f;
}

Observation render_observation(const WorldState& world, const Pose& pose,
                               const CameraConfig& camera) {
  if (!valid_heading(pose.heading)) throw DomainError("invalid heading");
  if (!world.is_reachable(pose.i, pose.j))
    throw DomainError("pose is not reachable");

  const auto [di, dj] = heading_dir(pose.heading);
  const Vec3 eye = {pose.i * world.cell, pose.j * world.cell,
                    camera.eye_height};
  const Vec3 fwd = {double(di), double(dj), 0.0};
  const Vec3 right = {double(dj), -double(di), 0.0};
  const double tan_half =
      std::tan(camera.fov_deg * std::numbers::pi / 360.0);
  const double size = camera.image_size;
  const double focal = size / 2.0 / tan_half;
  const double cx = size / 2.0, cy = size / 2.0;
  const double edge = size - 1e-6;
  const double min_span = 1e-3;

  Observation obs;
  obs.pose = pose;
  for (const ObjectInstance& obj : world.objects) {
    const Vec3 d = obj.box.center - eye;
    const double depth = d.dot(fwd);
    if (depth < camera.near_plane || depth > camera.max_range) continue;
    if (std::abs(d.dot(right)) > depth * tan_half) continue;
    if (std::abs(d.z) > depth * tan_half) continue;

    double u_lo = 1e300, u_hi = -1e300, v_lo = 1e300, v_hi = -1e300;
    for (const Vec3& corner : obj.box.corners()) {
      const Vec3 cd = corner - eye;
      const double cdepth = std::max(cd.dot(fwd), camera.near_plane);
      const double u = cx + focal * cd.dot(right) / cdepth;
      const double v = cy - focal * cd.z / cdepth;
      u_lo = std::min(u_lo, u);
      u_hi = std::max(u_hi, u);
      v_lo = std::min(v_lo, v);
      v_hi = std::max(v_hi, v);
    }
    if (camera.detection_noise_px > 0.0) {
      Rng noise(hash_values(kWorldTag, "det-noise", world.seed,
                            std::uint64_t(pose.i), std::uint64_t(pose.j),
                            std::uint64_t(pose.heading),
                            std::uint64_t(obj.id)));
      const double a = camera.detection_noise_px;
      u_lo += noise.uniform(-a, a);
      u_hi += noise.uniform(-a, a);
      v_lo += noise.uniform(-a, a);
      v_hi += noise.uniform(-a, a);
      if (u_hi < u_lo) std::swap(u_lo, u_hi);
      if (v_hi < v_lo) std::swap(v_lo, v_hi);
    }
    BBox2 bbox;
    bbox.u1 = std::clamp(u_lo, 0.0, edge);
    bbox.u2 = std::clamp(u_hi, 0.0, edge);
    bbox.v1 = std::clamp(v_lo, 0.0, edge);
    bbox.v2 = std::clamp(v_hi, 0.0, edge);
    if (bbox.u2 - bbox.u1 < min_span)
      bbox.u2 = std::min(bbox.u1 + min_span, edge);
    if (bbox.u2 - bbox.u1 < min_span) bbox.u1 = bbox.u2 - min_span;
    if (bbox.v2 - bbox.v1 < min_span)
      bbox.v2 = std::min(bbox.v1 + min_span, edge);
    if (bbox.v2 - bbox.v1 < min_span) bbox.v1 = bbox.v2 - min_span;

    Detection det;
    det.object_id = obj.id;
    det.class_label = obj.class_label;
    det.bbox = bbox;
    det.feature = procedural_feature(obj, world.feature_dim, world.cell);
    obs.detections.push_back(std::move(det));
  }
  return obs;
}

Observation observe(const WorldState& world, const Pose& pose,
                    const CameraConfig& camera) {
  Observation obs = render_observation(world, pose, camera);
  obs.scene_graph = extract_scene_graph(obs, world);
  return obs;
}

namespace {

ordered_json box_to_json(const OrientedBox3& box) {
  return ordered_json{{"center", {box.center.x, box.center.y, box.center.z}},
                      {"half", {box.half.x, box.half.y, box.half.z}},
                      {"yaw", box.yaw}};
}

OrientedBox3 box_from_json(const json& j) {
  OrientedBox3 box;
  box.center = {j.at("center")[0], j.at("center")[1], j.at("center")[2]};
  box.half = {j.at("half")[0], j.at("half")[1], j.at("half")[2]};
  box.yaw = j.at("yaw");
  return box;
}

ordered_json scene_graph_to_json(const SceneGraph& sg) {
  ordered_json nodes = ordered_json::array();
  for (const SceneGraph::Node& n : sg.nodes)
    nodes.push_back(ordered_json{{"id", n.id}, {"class", n.class_label}});
  ordered_json edges = ordered_json::array();
  for (const auto& [pair, rel] : sg.edges)
    edges.push_back(
        ordered_json::array({pair.first, pair.second, relation_name(rel)}));
  return ordered_json{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

SceneGraph scene_graph_from_json(const json& j) {
  SceneGraph sg;
  for (const auto& n : j.at("nodes"))
    sg.nodes.push_back({n.at("id").get<int>(),
                        n.at("class").get<std::string>()});
  for (const auto& e : j.at("edges"))
    sg.edges[{e[0].get<int>(), e[1].get<int>()}] =
        relation_from_name(e[2].get<std::string>());
  return sg;
}

}  // namespace

namespace codec {

ordered_json observation_to_json(const Observation& obs) {
  ordered_json dets = ordered_json::array();
  for (const Detection& d : obs.detections) {
    dets.push_back(ordered_json{
        {"object_id", d.object_id},
        {"class", d.class_label},
        {"bbox", {d.bbox.u1, d.bbox.v1, d.bbox.u2, d.bbox.v2}},
        {"feature", d.feature}});
  }
  return ordered_json{{"pose",
                       {{"i", obs.pose.i},
                        {"j", obs.pose.j},
                        {"heading", obs.pose.heading}}},
                      {"detections", std::move(dets)},
                      {"scene_graph", scene_graph_to_json(obs.scene_graph)}};
}

Observation observation_from_json(const json& j) {
  Observation obs;
  obs.pose.i = j.at("pose").at("i");
  obs.pose.j = j.at("pose").at("j");
  obs.pose.heading = j.at("pose").at("heading");
  for (const auto& dj : j.at("detections")) {
    Detection d;
    d.object_id = dj.at("object_id");
    d.class_label = dj.at("class");
    d.bbox = {dj.at("bbox")[0], dj.at("bbox")[1], dj.at("bbox")[2],
              dj.at("bbox")[3]};
    d.feature = dj.at("feature").get<std::vector<double>>();
    obs.detections.push_back(std::move(d));
  }
  obs.scene_graph = scene_graph_from_json(j.at("scene_graph"));
  return obs;
}

}  // namespace codec

std::string serialize_world(const WorldState& world) {
  ordered_json j;
  j["format"] = "seannet-world";
  j["version"] = kWorldFormatVersion;
  j["seed"] = world.seed;
  j["d"] = world.cell;
  j["M"] = world.max_instances;
  j["feature_dim"] = world.feature_dim;
  j["bounds"] = {{"width", world.width}, {"height", world.height}};
  ordered_json objs = ordered_json::array();
  for (const ObjectInstance& o : world.objects) {
    ordered_json oj;
    oj["id"] = o.id;
    oj["class"] = o.class_label;
    oj["dynamics"] = dynamics_name(o.dynamics);
    oj["box"] = box_to_json(o.box);
    oj["texture_id"] = o.texture_id;
    objs.push_back(std::move(oj));
  }
  j["objects"] = std::move(objs);
  ordered_json pairs = ordered_json::array();
  for (const auto& [a, b] : world.support_pairs)
    pairs.push_back(ordered_json::array({a, b}));
  j["support_pairs"] = std::move(pairs);
  ordered_json cells = ordered_json::array();
  for (const GridCell& c : world.reachable)
    cells.push_back(ordered_json::array({c.i, c.j}));
  j["reachable"] = std::move(cells);
  return j.dump(2) + "\n";
}

WorldState parse_world(const std::string& text) {
  json j = json::parse(text, nullptr, true);
  if (j.value("format", "") != "seannet-world")
    throw IoError("not a world document");
  if (j.at("version").get<int>() != kWorldFormatVersion)
    throw IoError("unsupported world format version");
  WorldState world;
  world.seed = j.at("seed");
  world.cell = j.at("d");
  world.max_instances = j.at("M");
  world.feature_dim = j.at("feature_dim");
  world.width = j.at("bounds").at("width");
  world.height = j.at("bounds").at("height");
  for (const auto& oj : j.at("objects")) {
    ObjectInstance o;
    o.id = oj.at("id");
    o.class_label = oj.at("class");
    o.dynamics = dynamics_from_name(oj.at("dynamics").get<std::string>());
    o.box = box_from_json(oj.at("box"));
    o.texture_id = oj.at("texture_id");
    world.objects.push_back(std::move(o));
  }
  for (const auto& p : j.at("support_pairs"))
    world.support_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  for (const auto& c : j.at("reachable"))
    world.reachable.push_back({c[0].get<int>(), c[1].get<int>()});
  return world;
}

std::string serialize_observation(const Observation& obs) {
  return codec::observation_to_json(obs).dump();
}

Observation parse_observation(const std::string& text) {
  return codec::observation_from_json(json::parse(text));
}

}  // namespace seannet
