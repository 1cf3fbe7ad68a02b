#include "seannet/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "json_codec.hpp"
#include "seannet/errors.hpp"
#include "seannet/rng.hpp"
#include "seannet/version.hpp"

namespace seannet {

namespace {

constexpr std::uint64_t kNavTag = 0x5ea9e7005ULL;

int heading_index(int heading) {
  if (!valid_heading(heading)) throw DomainError("invalid heading");
  return heading / 90;
}

int sub_id(int node, int heading) { return node * 4 + heading_index(heading); }

int direction_between(const GridCell& from, const GridCell& to) {
  const int dx = to.i - from.i, dy = to.j - from.j;
  if (dx > 0 && dy == 0) return 0;
  if (dx == 0 && dy > 0) return 90;
  if (dx < 0 && dy == 0) return 180;
  if (dx == 0 && dy < 0) return 270;
  throw DomainError("places are not axis-aligned");
}

bool direction_feasible(int heading, int travel_dir) {
  return travel_dir != (heading + 180) % 360;
}

}  // namespace

const char* action_name(ActionKind a) {
  switch (a) {
    case ActionKind::kRotateLeft: return "rotate_left_90";
    case ActionKind::kRotateRight: return "rotate_right_90";
    case ActionKind::kForward: return "forward";
    case ActionKind::kLeftward: return "leftward";
    default: return "rightward";
  }
}

Pose apply_action(const Pose& pose, ActionKind action) {
  Pose out = pose;
  switch (action) {
    case ActionKind::kRotateLeft:
      out.heading = (pose.heading + 90) % 360;
      return out;
    case ActionKind::kRotateRight:
      out.heading = (pose.heading + 270) % 360;
      return out;
    case ActionKind::kForward: {
      const auto [di, dj] = heading_dir(pose.heading);
      out.i += di;
      out.j += dj;
      return out;
    }
    case ActionKind::kLeftward: {
      const auto [di, dj] = heading_dir((pose.heading + 90) % 360);
      out.i += di;
      out.j += dj;
      return out;
    }
    default: {
      const auto [di, dj] = heading_dir((pose.heading + 270) % 360);
      out.i += di;
      out.j += dj;
      return out;
    }
  }
}

const char* outcome_name(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::kSuccess: return "success";
    case TrialOutcome::kNavigationFailure: return "navigation_failure";
    case TrialOutcome::kLocalizationFailure: return "localization_failure";
    default: return "collision";
  }
}

const char* benchmark_mode_name(BenchmarkMode m) {
  return m == BenchmarkMode::kNeighbor ? "neighbor" : "arbitrary";
}

Pose TopoMap::subnode_pose(int node, int heading) const {
  const TopoNode& n = nodes.at(node);
  return {n.cell.i, n.cell.j, heading};
}

std::vector<GridCell> default_places(const WorldState& world, int stride) {
  if (stride < 1) throw UsageError("place stride must be >= 1");
  std::vector<GridCell> places;
  for (const GridCell& c : world.reachable)
    if (c.i % stride == 0 && c.j % stride == 0) places.push_back(c);
  return places;
}

TopoMap build_topo_map(const WorldState& world,
                       std::span<const GridCell> places,
                       const CameraConfig& camera) {
  if (places.empty()) throw UsageError("topological map needs places");
  TopoMap map;
  map.cell = world.cell;

  std::map<GridCell, int> index;
  for (const GridCell& place : places) {
    if (!world.is_reachable(place.i, place.j))
      throw DomainError("place is not reachable");
    if (index.contains(place)) continue;
    TopoNode node;
    node.id = static_cast<int>(map.nodes.size());
    node.cell = place;
    for (int h = 0; h < 4; ++h)
      node.observations[h] = observe(world, {place.i, place.j, 90 * h}, camera);
    index[place] = node.id;
    map.nodes.push_back(std::move(node));
  }

  // Nearest place along each clear straight corridor.
  for (const TopoNode& node : map.nodes) {
    for (int dir = 0; dir < 360; dir += 90) {
      const auto [di, dj] = heading_dir(dir);
      for (int t = 1;; ++t) {
        const GridCell cell{node.cell.i + t * di, node.cell.j + t * dj};
        if (!world.is_reachable(cell.i, cell.j)) break;
        const auto it = index.find(cell);
        if (it == index.end()) continue;
        if (node.id < it->second)
          map.edges.push_back({node.id, it->second, t});
        break;
      }
    }
  }
  std::sort(map.edges.begin(), map.edges.end(), [](const auto& x, const auto& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  map.edges.erase(std::unique(map.edges.begin(), map.edges.end(),
                              [](const auto& x, const auto& y) {
                                return x.a == y.a && x.b == y.b;
                              }),
                  map.edges.end());
  return map;
}

std::vector<SubNodeRef> plan(const TopoMap& map, SubNodeRef start,
                             SubNodeRef goal) {
  const int n = static_cast<int>(map.nodes.size());
  if (start.node < 0 || start.node >= n || goal.node < 0 || goal.node >= n)
    throw UsageError("plan endpoints outside the map");
  heading_index(start.heading);
  heading_index(goal.heading);

  std::vector<std::vector<std::pair<int, int>>> incident(n);  // node -> (other, cost)
  for (const TranslationEdge& e : map.edges) {
    incident[e.a].emplace_back(e.b, e.cost);
    incident[e.b].emplace_back(e.a, e.cost);
  }

  const int total = 4 * n;
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<int> dist(total, kInf);
  std::vector<int> parent(total, -1);
  std::vector<bool> done(total, false);

  using Entry = std::tuple<int, int, int>;  // dist, node, heading-index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  const int source = sub_id(start.node, start.heading);
  dist[source] = 0;
  queue.push({0, start.node, heading_index(start.heading)});

  while (!queue.empty()) {
    const auto [d, node, hidx] = queue.top();
    queue.pop();
    const int u = node * 4 + hidx;
    if (done[u]) continue;
    done[u] = true;

    auto relax = [&](int v, int w) {
      if (dist[u] != kInf && dist[u] + w < dist[v]) {
        dist[v] = dist[u] + w;
        parent[v] = u;
        queue.push({dist[v], v / 4, v % 4});
      }
    };

    for (int h = 0; h < 4; ++h)
      if (h != hidx) relax(node * 4 + h, map.rotation_cost);
    const int heading = hidx * 90;
    for (const auto& [other, cost] : incident[node]) {
      const int travel =
          direction_between(map.nodes[node].cell, map.nodes[other].cell);
      if (direction_feasible(heading, travel))
        relax(other * 4 + hidx, cost);
    }
  }

  const int target = sub_id(goal.node, goal.heading);
  if (dist[target] == kInf)
    throw NoPathError("goal sub-node is unreachable in the map");

  std::vector<SubNodeRef> path;
  for (int v = target; v != -1; v = parent[v])
    path.push_back({v / 4, (v % 4) * 90});
  std::reverse(path.begin(), path.end());
  return path;
}

int path_cost(const TopoMap& map, std::span<const SubNodeRef> path) {
  int cost = 0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const SubNodeRef& a = path[k - 1];
    const SubNodeRef& b = path[k];
    if (a.node == b.node) {
      cost += map.rotation_cost;
      continue;
    }
    bool found = false;
    for (const TranslationEdge& e : map.edges) {
      if ((e.a == a.node && e.b == b.node) ||
          (e.a == b.node && e.b == a.node)) {
        cost += e.cost;
        found = true;
        break;
      }
    }
    if (!found) throw UsageError("path elements are not edge-adjacent");
  }
  return cost;
}

ActionKind oracle_navigator(const Pose& current, const Pose& target,
                            double p_err, Rng& rng) {
  ActionKind correct;
  if (target.i == current.i && target.j == current.j) {
    if (target.heading == current.heading)
      throw UsageError("navigator target equals the current pose");
    const int turn = (target.heading - current.heading + 360) % 360;
    correct = turn == 270 ? ActionKind::kRotateRight : ActionKind::kRotateLeft;
  } else {
    const int dx = target.i - current.i, dy = target.j - current.j;
    if (std::abs(dx) + std::abs(dy) != 1 ||
        target.heading != current.heading)
      throw UsageError("navigator target is not one step away");
    const auto [fi, fj] = heading_dir(current.heading);
    const auto [li, lj] = heading_dir((current.heading + 90) % 360);
    if (dx == fi && dy == fj) {
      correct = ActionKind::kForward;
    } else if (dx == li && dy == lj) {
      correct = ActionKind::kLeftward;
    } else if (dx == -li && dy == -lj) {
      correct = ActionKind::kRightward;
    } else {
      throw UsageError("navigator target lies behind the robot");
    }
  }
  if (p_err > 0.0 && rng.uniform() < p_err) {
    auto r = rng.uniform_int(4);
    if (r >= static_cast<int>(correct)) ++r;
    return static_cast<ActionKind>(r);
  }
  return correct;
}

Localizer make_model_localizer(const TopoMap& map, const ModelParams& params,
                               const EmbeddingTable& words, double epsilon) {
  auto model = std::make_shared<ModelParams>(params);
  auto table = std::make_shared<EmbeddingTable>(words);
  // Embed every stored sub-node view once.
  auto stored = std::make_shared<std::vector<std::array<std::vector<double>, 4>>>();
  stored->resize(map.nodes.size());
  for (std::size_t n = 0; n < map.nodes.size(); ++n) {
    for (int h = 0; h < 4; ++h) {
      Tape tape;
      EmbedContext ctx = bind_model(tape, *model, *table, Mode::kEval, nullptr);
      const ValueId v = scene_embed(ctx, map.nodes[n].observations[h]);
      const Tensor& t = tape.value(v);
      (*stored)[n][h].assign(t.data.begin(), t.data.end());
    }
  }
  return [stored, model, table, epsilon](
             const Observation& current, const Pose&,
             SubNodeRef target) -> LocalizeDecision {
    Tape tape;
    EmbedContext ctx = bind_model(tape, *model, *table, Mode::kEval, nullptr);
    const ValueId v = scene_embed(ctx, current);
    const Tensor& t = tape.value(v);
    const auto& anchor = (*stored)[target.node][heading_index(target.heading)];
    const double s =
        std::clamp(cosine_similarity(t.data, anchor), -1.0, 1.0);
    return {localize(s, epsilon), s};
  };
}

Localizer make_ground_truth_localizer(const TopoMap& map) {
  std::vector<GridCell> cells;
  cells.reserve(map.nodes.size());
  for (const TopoNode& n : map.nodes) cells.push_back(n.cell);
  return [cells = std::move(cells)](const Observation&, const Pose& pose,
                                    SubNodeRef target) -> LocalizeDecision {
    const GridCell& cell = cells.at(target.node);
    const bool hit =
        pose.i == cell.i && pose.j == cell.j && pose.heading == target.heading;
    return {hit, hit ? 1.0 : -1.0};
  };
}

namespace {

// Next cell to aim for while crossing a translation segment: reduce the
// larger axis first, never step backward; recover heading in place when the
// cell already matches.
Pose one_step_target(const Pose& pose, const Pose& target) {
  const int ddx = target.i - pose.i, ddy = target.j - pose.j;
  if (ddx == 0 && ddy == 0) return {pose.i, pose.j, target.heading};

  const auto [hi, hj] = heading_dir(pose.heading);
  const int bi = -hi, bj = -hj;
  std::pair<int, int> steps[2];
  int count = 0;
  const std::pair<int, int> sx = {ddx > 0 ? 1 : -1, 0};
  const std::pair<int, int> sy = {0, ddy > 0 ? 1 : -1};
  if (std::abs(ddx) >= std::abs(ddy)) {
    if (ddx != 0) steps[count++] = sx;
    if (ddy != 0) steps[count++] = sy;
  } else {
    if (ddy != 0) steps[count++] = sy;
    if (ddx != 0) steps[count++] = sx;
  }
  for (int k = 0; k < count; ++k) {
    if (steps[k].first == bi && steps[k].second == bj) continue;
    return {pose.i + steps[k].first, pose.j + steps[k].second, pose.heading};
  }
  const auto [li, lj] = heading_dir((pose.heading + 90) % 360);
  return {pose.i + li, pose.j + lj, pose.heading};
}

}  // namespace

TrialResult run_trial(const WorldState& nav_world, const TopoMap& map,
                      const Localizer& localizer, SubNodeRef start,
                      SubNodeRef goal, int k_max, double p_err,
                      std::uint64_t seed, const CameraConfig& camera,
                      std::optional<int> trial_step_cap) {
  const std::vector<SubNodeRef> path = plan(map, start, goal);
  TrialResult result;
  Pose pose = map.subnode_pose(start.node, start.heading);
  Rng rng(hash_values(kNavTag, "trial", seed));

  bool last_segment_translated = false;
  for (std::size_t seg = 1; seg < path.size(); ++seg) {
    const SubNodeRef& next = path[seg];
    if (path[seg - 1].node == next.node) {
      // Structural rotation: the edge itself fixes the heading.
      const int turn = (next.heading - pose.heading + 360) % 360;
      const ActionKind act =
          turn == 270 ? ActionKind::kRotateRight : ActionKind::kRotateLeft;
      pose.heading = next.heading;
      result.steps += map.rotation_cost;
      result.segments_completed += 1;
      result.log.push_back(
          {static_cast<int>(seg), pose, 1.0, false, static_cast<int>(act)});
      last_segment_translated = false;
      continue;
    }

    const Pose target = map.subnode_pose(next.node, next.heading);
    int seg_steps = 0;
    while (true) {
      const Observation obs = observe(nav_world, pose, camera);
      const LocalizeDecision dec = localizer(obs, pose, next);
      const bool at_target = pose == target;
      result.log.push_back(
          {static_cast<int>(seg), pose, dec.similarity, dec.localized, -1});

      if (dec.localized && at_target) {
        result.segments_completed += 1;
        break;
      }
      if (dec.localized != at_target) {
        // False positive away from the target or false negative on it.
        result.outcome = TrialOutcome::kLocalizationFailure;
        return result;
      }
      if (seg_steps >= k_max ||
          (trial_step_cap && result.steps >= *trial_step_cap)) {
        result.outcome = TrialOutcome::kNavigationFailure;
        return result;
      }

      const Pose desired = one_step_target(pose, target);
      const ActionKind action = oracle_navigator(pose, desired, p_err, rng);
      const Pose moved = apply_action(pose, action);
      result.log.push_back({static_cast<int>(seg), pose, dec.similarity,
                            false, static_cast<int>(action)});
      if (moved.i != pose.i || moved.j != pose.j) {
        if (!nav_world.is_reachable(moved.i, moved.j)) {
          result.outcome = TrialOutcome::kCollision;
          return result;
        }
      }
      pose = moved;
      result.steps += 1;
      seg_steps += 1;
    }
    last_segment_translated = true;
  }

  if (!last_segment_translated) {
    // Rotation-only tail (or start == goal): confirm localization at the
    // goal view before declaring success.
    const Observation obs = observe(nav_world, pose, camera);
    const LocalizeDecision dec = localizer(obs, pose, goal);
    result.log.push_back({static_cast<int>(path.size()), pose, dec.similarity,
                          dec.localized, -1});
    if (!dec.localized) {
      result.outcome = TrialOutcome::kLocalizationFailure;
      return result;
    }
  }
  result.outcome = TrialOutcome::kSuccess;
  return result;
}

BenchmarkRow run_benchmark(std::span<const WorldState> worlds,
                           const LocalizerFactory& localizer_factory,
                           BenchmarkMode mode, const BenchmarkOptions& options,
                           const CameraConfig& camera) {
  if (worlds.empty()) throw UsageError("benchmark needs at least one world");
  if (options.n_trials < 1) throw UsageError("n_trials must be >= 1");

  std::vector<TopoMap> maps;
  for (const WorldState& world : worlds)
    maps.push_back(build_topo_map(
        world, default_places(world, options.place_stride), camera));
  std::vector<Localizer> localizers;
  for (const TopoMap& map : maps) localizers.push_back(localizer_factory(map));

  int outcomes[4] = {0, 0, 0, 0};
  for (int t = 0; t < options.n_trials; ++t) {
    Rng rng(hash_values(kNavTag, "setup", options.seed, std::uint64_t(t)));
    const auto w = rng.uniform_int(std::ssize(worlds));
    const TopoMap& map = maps[w];
    const int n = static_cast<int>(map.nodes.size());

    const SubNodeRef start{static_cast<int>(rng.uniform_int(n)),
                           90 * static_cast<int>(rng.uniform_int(4))};
    SubNodeRef goal = start;
    if (mode == BenchmarkMode::kNeighbor) {
      // Any edge-adjacent sub-node: a rotation within the node or a feasible
      // translation neighbor.
      std::vector<SubNodeRef> neighbors;
      for (int h = 0; h < 360; h += 90)
        if (h != start.heading) neighbors.push_back({start.node, h});
      for (const TranslationEdge& e : map.edges) {
        int other = -1;
        if (e.a == start.node) other = e.b;
        if (e.b == start.node) other = e.a;
        if (other < 0) continue;
        const int travel = direction_between(map.nodes[start.node].cell,
                                             map.nodes[other].cell);
        if (direction_feasible(start.heading, travel))
          neighbors.push_back({other, start.heading});
      }
      goal = neighbors[rng.uniform_int(std::ssize(neighbors))];
    } else {
      for (int attempt = 0; attempt < 50; ++attempt) {
        SubNodeRef candidate{static_cast<int>(rng.uniform_int(n)),
                             90 * static_cast<int>(rng.uniform_int(4))};
        if (candidate == start) continue;
        try {
          plan(map, start, candidate);
          goal = candidate;
          break;
        } catch (const NoPathError&) {
          continue;
        }
      }
      if (goal == start) goal = {start.node, (start.heading + 90) % 360};
    }

    const WorldState nav_world = apply_dynamics(
        worlds[w], hash_values(kNavTag, "bench-dyn", options.seed,
                               std::uint64_t(t)));
    const TrialResult trial = run_trial(
        nav_world, map, localizers[w], start, goal, options.k_max,
        options.p_err, hash_values(options.seed, "exec", std::uint64_t(t)),
        camera);
    outcomes[static_cast<int>(trial.outcome)] += 1;
  }

  BenchmarkRow row;
  row.mode = benchmark_mode_name(mode);
  row.total = options.n_trials;
  const double total = options.n_trials;
  row.success_rate = outcomes[0] / total;
  row.navigation_failure_rate = outcomes[1] / total;
  row.localization_failure_rate = outcomes[2] / total;
  row.collision_rate = outcomes[3] / total;
  return row;
}

std::string serialize_topo_map(const TopoMap& map) {
  nlohmann::ordered_json j;
  j["format"] = "seannet-topomap";
  j["version"] = kTopoMapFormatVersion;
  j["d"] = map.cell;
  j["rotation_cost"] = map.rotation_cost;
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const TopoNode& n : map.nodes) {
    nlohmann::ordered_json nj;
    nj["id"] = n.id;
    nj["cell"] = {n.cell.i, n.cell.j};
    nlohmann::ordered_json views = nlohmann::ordered_json::array();
    for (int h = 0; h < 4; ++h)
      views.push_back(codec::observation_to_json(n.observations[h]));
    nj["observations"] = std::move(views);
    nodes.push_back(std::move(nj));
  }
  j["nodes"] = std::move(nodes);
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const TranslationEdge& e : map.edges)
    edges.push_back(nlohmann::ordered_json::array({e.a, e.b, e.cost}));
  j["translation_edges"] = std::move(edges);
  return j.dump();
}

TopoMap parse_topo_map(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "seannet-topomap")
    throw IoError("not a topological map document");
  if (j.at("version").get<int>() != kTopoMapFormatVersion)
    throw IoError("unsupported topomap version");
  TopoMap map;
  map.cell = j.at("d");
  map.rotation_cost = j.at("rotation_cost");
  for (const auto& nj : j.at("nodes")) {
    TopoNode n;
    n.id = nj.at("id");
    n.cell = {nj.at("cell")[0].get<int>(), nj.at("cell")[1].get<int>()};
    const auto& views = nj.at("observations");
    if (views.size() != 4) throw IoError("node must carry 4 observations");
    for (int h = 0; h < 4; ++h)
      n.observations[h] = codec::observation_from_json(views[h]);
    map.nodes.push_back(std::move(n));
  }
  for (const auto& ej : j.at("translation_edges"))
    map.edges.push_back(
        {ej[0].get<int>(), ej[1].get<int>(), ej[2].get<int>()});
  return map;
}

std::string report_table(std::span<const BenchmarkRow> rows) {
  std::ostringstream out;
  char buf[200];
  for (const BenchmarkRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-9s total=%-5d success=%.1f%% "
                  "nav_fail=%.1f%% loc_fail=%.1f%% collision=%.1f%%\n",
                  r.mode.c_str(), r.total, 100.0 * r.success_rate,
                  100.0 * r.navigation_failure_rate,
                  100.0 * r.localization_failure_rate,
                  100.0 * r.collision_rate);
    out << buf;
  }
  return out.str();
}

std::string report_csv(std::span<const BenchmarkRow> rows) {
  std::ostringstream out;
  out << "mode,total,success_rate,navigation_failure_rate,"
         "localization_failure_rate,collision_rate\n";
  char buf[240];
  for (const BenchmarkRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g,%.17g,%.17g\n",
                  r.mode.c_str(), r.total, r.success_rate,
                  r.navigation_failure_rate, r.localization_failure_rate,
                  r.collision_rate);
    out << buf;
  }
  return out.str();
}

}  // namespace seannet
