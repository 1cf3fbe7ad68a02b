#include "seannet/scene_graph.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "seannet/errors.hpp"
#include "seannet/world.hpp"

namespace seannet {

const char* relation_name(Relation r) {
  switch (r) {
    case Relation::kOn: return "on";
    case Relation::kIn: return "in";
    case Relation::kProximity: return "proximity";
    default: return "disjoint";
  }
}

Relation relation_from_name(std::string_view name) {
  if (name == "on") return Relation::kOn;
  if (name == "in") return Relation::kIn;
  if (name == "proximity") return Relation::kProximity;
  if (name == "disjoint") return Relation::kDisjoint;
  throw IoError("unknown relation: " + std::string(name));
}

Relation relate(const OrientedBox3& box_i, const OrientedBox3& box_j,
                bool j_rests_on_i) {
  if (j_rests_on_i) return Relation::kOn;
  bool inside = true;
  for (const Vec3& corner : box_i.corners()) {
    if (!box_j.contains(corner)) {
      inside = false;
      break;
    }
  }
  if (inside) return Relation::kIn;
  if (center_distance(box_i, box_j) <=
      box_i.bounding_radius() + box_j.bounding_radius())
    return Relation::kProximity;
  return Relation::kDisjoint;
}

SceneGraph extract_scene_graph(const Observation& obs,
                               const WorldState& world) {
  SceneGraph sg;
  for (const Detection& det : obs.detections)
    sg.nodes.push_back({det.object_id, det.class_label});
  std::sort(sg.nodes.begin(), sg.nodes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  for (const SceneGraph::Node& a : sg.nodes) {
    for (const SceneGraph::Node& b : sg.nodes) {
      if (a.id == b.id) continue;
      const OrientedBox3& box_a = world.object(a.id).box;
      const OrientedBox3& box_b = world.object(b.id).box;
      sg.edges[{a.id, b.id}] =
          relate(box_a, box_b, world.has_support(a.id, b.id));
    }
  }
  return sg;
}

AdjacencyMatrix build_adjacency(const SceneGraph& sg, int max_instances) {
  AdjacencyMatrix adj;
  adj.max_instances = max_instances;
  const std::size_t m = static_cast<std::size_t>(max_instances);
  adj.typed.assign(m * m, -1);
  adj.on = Tensor::zeros({m, m});
  adj.in = Tensor::zeros({m, m});
  adj.proximity = Tensor::zeros({m, m});
  adj.disjoint = Tensor::zeros({m, m});

  for (const SceneGraph::Node& n : sg.nodes) {
    if (n.id < 0 || n.id >= max_instances)
      throw DomainError("scene-graph node id outside [0, M)");
    adj.detected.push_back(n.id);
  }
  std::sort(adj.detected.begin(), adj.detected.end());

  for (const auto& [pair, rel] : sg.edges) {
    const auto [i, j] = pair;
    if (i < 0 || i >= max_instances || j < 0 || j >= max_instances)
      throw DomainError("scene-graph edge id outside [0, M)");
    const std::size_t idx = static_cast<std::size_t>(i) * m + j;
    adj.typed[idx] = static_cast<std::int8_t>(rel);
    switch (rel) {
      case Relation::kOn: adj.on.data[idx] = 1.0; break;
      case Relation::kIn: adj.in.data[idx] = 1.0; break;
      case Relation::kProximity: adj.proximity.data[idx] = 1.0; break;
      case Relation::kDisjoint: adj.disjoint.data[idx] = 1.0; break;
    }
  }
  return adj;
}

Tensor row_normalize(const Tensor& relation_matrix,
                     const std::vector<std::int32_t>& detected) {
  if (relation_matrix.rank() != 2 ||
      relation_matrix.rows() != relation_matrix.cols())
    throw ShapeError("row_normalize expects a square matrix");
  const std::size_t m = relation_matrix.rows();
  Tensor out = relation_matrix;
  for (std::int32_t id : detected) {
    if (id < 0 || static_cast<std::size_t>(id) >= m)
      throw DomainError("detected id outside matrix");
    out.data[static_cast<std::size_t>(id) * m + id] += 1.0;  // self-loop
  }
  for (std::size_t i = 0; i < m; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) row_sum += out.data[i * m + j];
    if (row_sum == 0.0) continue;
    const double inv = 1.0 / row_sum;
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] *= inv;
  }
  return out;
}

std::string serialize_scene_graph(const SceneGraph& sg) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const SceneGraph::Node& n : sg.nodes)
    nodes.push_back(
        nlohmann::ordered_json{{"id", n.id}, {"class", n.class_label}});
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const auto& [pair, rel] : sg.edges)
    edges.push_back(nlohmann::ordered_json::array(
        {pair.first, pair.second, relation_name(rel)}));
  nlohmann::ordered_json j{{"format", "seannet-scene-graph"},
                           {"nodes", std::move(nodes)},
                           {"edges", std::move(edges)}};
  return j.dump();
}

SceneGraph parse_scene_graph(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "seannet-scene-graph")
    throw IoError("not a scene-graph document");
  SceneGraph sg;
  for (const auto& n : j.at("nodes"))
    sg.nodes.push_back({n.at("id").get<int>(),
                        n.at("class").get<std::string>()});
  for (const auto& e : j.at("edges"))
    sg.edges[{e[0].get<int>(), e[1].get<int>()}] =
        relation_from_name(e[2].get<std::string>());
  return sg;
}

}  // namespace seannet
