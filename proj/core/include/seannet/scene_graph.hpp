#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "seannet/geometry.hpp"
#include "seannet/tensor.hpp"

namespace seannet {

struct WorldState;
struct Observation;

// Inter-object relations, mutually exclusive per ordered pair.
enum class Relation : std::uint8_t { kOn, kIn, kProximity, kDisjoint };

const char* relation_name(Relation r);
Relation relation_from_name(std::string_view name);

struct SceneGraph {
  struct Node {
    int id = 0;
    std::string class_label;
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;  // sorted by id
  // Every ordered pair of distinct detected objects has exactly one entry.
  std::map<std::pair<int, int>, Relation> edges;

  bool operator==(const SceneGraph&) const = default;
};

// M×M typed relation matrix and its per-relation binary decomposition.
// Rows and columns of undetected objects are all zero.
struct AdjacencyMatrix {
  int max_instances = 0;
  std::vector<std::int8_t> typed;  // -1 = no relation, else Relation value
  Tensor on;
  Tensor in;
  Tensor proximity;
  Tensor disjoint;
  std::vector<std::int32_t> detected;  // sorted object ids
};

// Relation for the ordered pair (i, j). 'on' comes from support ground
// truth (o_j rests on o_i) and wins over geometry; 'in' requires all eight
// corners of box_i inside box_j (closed); 'proximity' compares the center
// distance against the sum of bounding-sphere radii; otherwise 'disjoint'.
Relation relate(const OrientedBox3& box_i, const OrientedBox3& box_j,
                bool j_rests_on_i);

// Typed edges between every ordered pair of detected objects.
SceneGraph extract_scene_graph(const Observation& obs, const WorldState& world);

AdjacencyMatrix build_adjacency(const SceneGraph& sg, int max_instances);

// Â = D⁻¹(A + I_detected): self-loops only on detected rows, then each
// nonzero row scaled to sum 1. Rows of undetected objects stay zero.
Tensor row_normalize(const Tensor& relation_matrix,
                     const std::vector<std::int32_t>& detected);

std::string serialize_scene_graph(const SceneGraph& sg);
SceneGraph parse_scene_graph(const std::string& text);

}  // namespace seannet
