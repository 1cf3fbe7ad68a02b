#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "seannet/world.hpp"

namespace seannet {

// Pose offset from the anchor: grid steps and quarter turns (0..3).
struct Deviation {
  int dx = 0;
  int dy = 0;
  int dtheta = 0;

  int manhattan() const { return std::abs(dx) + std::abs(dy); }
  bool operator==(const Deviation&) const = default;
};

struct Triplet {
  Observation anchor;
  Observation positive;
  Observation negative;
  int tier = 1;  // 1..5
  Deviation positive_dev;
  Deviation negative_dev;
  int world_index = 0;
};

struct TripletDataset {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> world_ids;
  std::array<std::size_t, 5> tier_histogram{};
  std::vector<Triplet> triplets;
};

struct TripletOptions {
  int offset_retries = 50;
  // When set, tiers 2-5 also render positives after object dynamics;
  // default keeps them layout-identical to the anchor.
  bool dynamic_positives = false;
  // Anchors must see at least this many objects (best effort).
  int min_anchor_detections = 1;
};

// Exact tier sizes for a dataset of n triplets: tiers 2-5 rounded from the
// 20/15/10/5 percent shares, remainder to tier 1.
std::array<std::size_t, 5> tier_counts(std::size_t n);

// One cascaded triplet. Tier 1 pairs the anchor pose with a
// dynamics-perturbed layout; higher tiers step the positive/negative poses
// out by Manhattan distance per the cascade; tier-5 negatives rotate in
// place. Offsets are resampled while poses land outside the reachable set.
Triplet sample_triplet(const WorldState& world, int tier, std::uint64_t seed,
                       const CameraConfig& camera,
                       const TripletOptions& options = {});

TripletDataset gen_dataset(std::span<const WorldState> worlds, std::size_t n,
                           std::uint64_t seed, const CameraConfig& camera,
                           const TripletOptions& options = {});

void save_dataset(const std::filesystem::path& path,
                  const TripletDataset& dataset);
TripletDataset load_dataset(const std::filesystem::path& path);

// World-level split (train/val/test follow their source world).
struct DatasetSplit {
  TripletDataset train;
  TripletDataset val;
  TripletDataset test;
};
DatasetSplit split_by_world(const TripletDataset& dataset, double train_frac,
                            double val_frac, std::uint64_t seed);

}  // namespace seannet
