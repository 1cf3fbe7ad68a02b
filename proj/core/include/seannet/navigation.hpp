#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seannet/model.hpp"
#include "seannet/world.hpp"

namespace seannet {

enum class ActionKind : std::uint8_t {
  kRotateLeft,   // +90° counter-clockwise
  kRotateRight,  // -90°
  kForward,
  kLeftward,
  kRightward,
};

const char* action_name(ActionKind a);

Pose apply_action(const Pose& pose, ActionKind action);

// Topological place: four heading sub-nodes, each holding the observation
// captured during mapping.
struct TopoNode {
  int id = 0;
  GridCell cell;
  std::array<Observation, 4> observations;  // indexed by heading / 90
};

struct TranslationEdge {
  int a = 0;
  int b = 0;
  int cost = 0;  // Manhattan distance along a clear straight corridor
};

struct TopoMap {
  double cell = 0.25;
  int rotation_cost = 1;  // sub-nodes within a node are fully interconnected
  std::vector<TopoNode> nodes;
  std::vector<TranslationEdge> edges;

  Pose subnode_pose(int node, int heading) const;
};

struct SubNodeRef {
  int node = 0;
  int heading = 0;  // degrees

  bool operator==(const SubNodeRef&) const = default;
};

// Every stride-th reachable cell.
std::vector<GridCell> default_places(const WorldState& world, int stride = 2);

// One node per place with all four views rendered; translation edges join
// the nearest place in each grid direction when every cell between is
// reachable, at Manhattan-distance cost.
TopoMap build_topo_map(const WorldState& world, std::span<const GridCell> places,
                       const CameraConfig& camera);

// Dijkstra over sub-nodes. Translation edges run between same-heading
// sub-nodes when the travel direction is not behind the robot; rotation
// edges stay within a node. Ties break on (node id, heading).
std::vector<SubNodeRef> plan(const TopoMap& map, SubNodeRef start,
                             SubNodeRef goal);

int path_cost(const TopoMap& map, std::span<const SubNodeRef> path);

// Ground-truth one-step navigator with error injection: returns the correct
// action for a target one translation step away (or a rotation in place);
// with probability p_err returns a uniformly random different action.
ActionKind oracle_navigator(const Pose& current, const Pose& target,
                            double p_err, Rng& rng);

enum class TrialOutcome : std::uint8_t {
  kSuccess,
  kNavigationFailure,
  kLocalizationFailure,
  kCollision,
};

const char* outcome_name(TrialOutcome o);

struct LocalizeDecision {
  bool localized = false;
  double similarity = 0.0;
};

// Decides whether the current view matches a target sub-node.
using Localizer = std::function<LocalizeDecision(
    const Observation& current, const Pose& current_pose, SubNodeRef target)>;

// Scene-embedding localizer: stored sub-node views are embedded once; a
// query embeds the current view and thresholds the cosine similarity.
Localizer make_model_localizer(const TopoMap& map, const ModelParams& params,
                               const EmbeddingTable& words, double epsilon);

// Pose-equality oracle (always right).
Localizer make_ground_truth_localizer(const TopoMap& map);

struct StepRecord {
  int segment = 0;
  Pose pose;
  double similarity = 0.0;
  bool localized = false;
  int action = -1;  // ActionKind, -1 for localization-only records
};

struct TrialResult {
  TrialOutcome outcome = TrialOutcome::kSuccess;
  int steps = 0;
  int segments_completed = 0;
  std::vector<StepRecord> log;
};

// Executes the planned path segment by segment. Rotation segments apply the
// structural rotation; translation segments loop render → localize → act
// with at most k_max navigator steps per segment. Localization faults are
// classified against simulator ground truth.
TrialResult run_trial(const WorldState& nav_world, const TopoMap& map,
                      const Localizer& localizer, SubNodeRef start,
                      SubNodeRef goal, int k_max, double p_err,
                      std::uint64_t seed, const CameraConfig& camera,
                      std::optional<int> trial_step_cap = std::nullopt);

enum class BenchmarkMode : std::uint8_t { kNeighbor, kArbitrary };

const char* benchmark_mode_name(BenchmarkMode m);

struct BenchmarkRow {
  std::string mode;
  int total = 0;
  double success_rate = 0.0;
  double navigation_failure_rate = 0.0;
  double localization_failure_rate = 0.0;
  double collision_rate = 0.0;
};

using LocalizerFactory = std::function<Localizer(const TopoMap& map)>;

struct BenchmarkOptions {
  int n_trials = 50;
  int k_max = 12;
  double p_err = 0.05;
  int place_stride = 2;
  std::uint64_t seed = 0;
};

// Maps each world once, applies fresh object dynamics per trial, and runs
// start→goal trials in the requested mode. Trial setups depend only on
// (seed, trial index), so different localizers see identical cases.
BenchmarkRow run_benchmark(std::span<const WorldState> worlds,
                           const LocalizerFactory& localizer_factory,
                           BenchmarkMode mode, const BenchmarkOptions& options,
                           const CameraConfig& camera);

std::string serialize_topo_map(const TopoMap& map);
TopoMap parse_topo_map(const std::string& text);

std::string report_table(std::span<const BenchmarkRow> rows);
std::string report_csv(std::span<const BenchmarkRow> rows);

}  // namespace seannet
