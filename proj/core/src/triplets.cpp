#include "seannet/triplets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "json_codec.hpp"
#include "seannet/errors.hpp"
#include "seannet/rng.hpp"
#include "seannet/version.hpp"

namespace seannet {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kTripletTag = 0x5ea9e7003ULL;

Pose random_reachable_pose(const WorldState& world, Rng& rng) {
  const GridCell& cell =
      world.reachable[rng.uniform_int(std::ssize(world.reachable))];
  const int heading = 90 * static_cast<int>(rng.uniform_int(4));
  return {cell.i, cell.j, heading};
}

// Uniform over the 4k lattice offsets with |dx|+|dy| = k.
Deviation random_offset(int k, Rng& rng) {
  const auto pick = rng.uniform_int(4L * k);
  const int side = static_cast<int>(pick / k);
  const int step = static_cast<int>(pick % k);
  switch (side) {
    case 0: return {k - step, step, 0};
    case 1: return {-step, k - step, 0};
    case 2: return {step - k, -step, 0};
    default: return {step, step - k, 0};
  }
}

Pose offset_pose(const Pose& anchor, const Deviation& dev) {
  const int heading = (anchor.heading + 90 * dev.dtheta) % 360;
  return {anchor.i + dev.dx, anchor.j + dev.dy, heading};
}

// Offset at Manhattan distance k whose pose stays reachable.
Deviation sample_reachable_offset(const WorldState& world, const Pose& anchor,
                                  int k, Rng& rng, int retries) {
  for (int attempt = 0; attempt < retries; ++attempt) {
    Deviation dev = random_offset(k, rng);
    const Pose p = offset_pose(anchor, dev);
    if (world.is_reachable(p.i, p.j)) return dev;
  }
  throw SamplingError("no reachable pose at Manhattan distance " +
                      std::to_string(k));
}

}  // namespace

std::array<std::size_t, 5> tier_counts(std::size_t n) {
  const double shares[4] = {0.20, 0.15, 0.10, 0.05};
  std::array<std::size_t, 5> counts{};
  std::size_t rest = 0;
  for (int t = 0; t < 4; ++t) {
    counts[t + 1] = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * shares[t]));
    rest += counts[t + 1];
  }
  if (rest > n) throw UsageError("dataset too small for tier shares");
  counts[0] = n - rest;
  return counts;
}

Triplet sample_triplet(const WorldState& world, int tier, std::uint64_t seed,
                       const CameraConfig& camera,
                       const TripletOptions& options) {
  if (tier < 1 || tier > 5) throw UsageError("tier must be in 1..5");
  Rng rng(hash_values(kTripletTag, "sample", seed, std::uint64_t(tier)));

  Triplet triplet;
  triplet.tier = tier;

  // Anchor views must contain something to anchor on; tier 1 additionally
  // needs a dynamic object in sight so a perturbed layout actually differs.
  // Tier-1 anchors need a dynamic object in sight (so the perturbed layout
  // differs) and a static one (so something remains to match against).
  auto anchor_ok = [&](const Pose& pose) {
    const Observation probe = render_observation(world, pose, camera);
    if (std::ssize(probe.detections) <
        std::max(1, options.min_anchor_detections))
      return false;
    if (tier != 1) return true;
    bool has_static = false, has_dynamic = false;
    for (const Detection& det : probe.detections) {
      if (world.object(det.object_id).dynamics == Dynamics::kStatic)
        has_static = true;
      else
        has_dynamic = true;
    }
    return has_static && has_dynamic;
  };

  // Anchor must admit the tier's offsets; resample a few anchors if the
  // local neighborhood is too cramped.
  for (int anchor_try = 0;; ++anchor_try) {
    Pose anchor = random_reachable_pose(world, rng);
    if (anchor_try < 40 && !anchor_ok(anchor)) continue;
    try {
      if (tier == 1) {
        triplet.positive_dev = {0, 0, 0};
        triplet.negative_dev =
            sample_reachable_offset(world, anchor, 1, rng, options.offset_retries);
      } else {
        triplet.positive_dev = sample_reachable_offset(
            world, anchor, tier - 1, rng, options.offset_retries);
        if (tier == 5) {
          triplet.negative_dev = {0, 0,
                                  1 + static_cast<int>(rng.uniform_int(3))};
        } else {
          triplet.negative_dev = sample_reachable_offset(
              world, anchor, tier, rng, options.offset_retries);
        }
      }
    } catch (const SamplingError&) {
      if (anchor_try >= 60) throw;
      continue;
    }

    triplet.anchor = observe(world, anchor, camera);

    const bool positive_moves = tier == 1 || options.dynamic_positives;
    const Pose positive_pose = offset_pose(anchor, triplet.positive_dev);
    if (positive_moves) {
      // Re-perturb until the serialized view actually changes; a world with
      // no dynamic object in sight leaves nothing to move.
      const std::string anchor_bytes = serialize_observation(triplet.anchor);
      for (int shake = 0; shake < 20; ++shake) {
        const WorldState moved = apply_dynamics(
            world, hash_values(kTripletTag, "dyn", seed, std::uint64_t(shake)));
        triplet.positive = observe(moved, positive_pose, camera);
        if (tier != 1 ||
            serialize_observation(triplet.positive) != anchor_bytes)
          break;
      }
    } else {
      triplet.positive = observe(world, positive_pose, camera);
    }

    triplet.negative =
        observe(world, offset_pose(anchor, triplet.negative_dev), camera);
    return triplet;
  }
}

TripletDataset gen_dataset(std::span<const WorldState> worlds, std::size_t n,
                           std::uint64_t seed, const CameraConfig& camera,
                           const TripletOptions& options) {
  if (worlds.empty()) throw UsageError("gen_dataset needs at least one world");
  if (n < 20) throw UsageError("gen_dataset needs n >= 20");

  TripletDataset ds;
  ds.seed = seed;
  for (const WorldState& w : worlds) ds.world_ids.push_back(w.seed);
  ds.tier_histogram = tier_counts(n);

  std::size_t index = 0;
  for (int tier = 1; tier <= 5; ++tier) {
    for (std::size_t k = 0; k < ds.tier_histogram[tier - 1]; ++k, ++index) {
      const std::uint64_t record_seed =
          hash_values(kTripletTag, "record", seed, std::uint64_t(index));
      Rng pick(record_seed);
      const int world_index =
          static_cast<int>(pick.uniform_int(std::ssize(worlds)));
      Triplet t = sample_triplet(worlds[world_index], tier, record_seed,
                                 camera, options);
      t.world_index = world_index;
      ds.triplets.push_back(std::move(t));
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path,
                  const TripletDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing: " + path.string());
  ordered_json header;
  header["format"] = "seannet-triplets";
  header["version"] = kDatasetFormatVersion;
  header["seed"] = dataset.seed;
  header["n"] = dataset.triplets.size();
  header["world_ids"] = dataset.world_ids;
  header["tier_histogram"] = dataset.tier_histogram;
  out << header.dump() << "\n";
  for (const Triplet& t : dataset.triplets) {
    ordered_json rec;
    rec["tier"] = t.tier;
    rec["world_index"] = t.world_index;
    rec["positive_dev"] = {t.positive_dev.dx, t.positive_dev.dy,
                           t.positive_dev.dtheta};
    rec["negative_dev"] = {t.negative_dev.dx, t.negative_dev.dy,
                           t.negative_dev.dtheta};
    rec["anchor"] = codec::observation_to_json(t.anchor);
    rec["positive"] = codec::observation_to_json(t.positive);
    rec["negative"] = codec::observation_to_json(t.negative);
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("short write to dataset: " + path.string());
}

TripletDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset: " + path.string());
  json header = json::parse(line);
  if (header.value("format", "") != "seannet-triplets")
    throw IoError("not a triplet dataset");
  if (header.at("version").get<int>() != kDatasetFormatVersion)
    throw IoError("unsupported dataset version");

  TripletDataset ds;
  ds.seed = header.at("seed");
  ds.world_ids = header.at("world_ids").get<std::vector<std::uint64_t>>();
  const auto hist = header.at("tier_histogram").get<std::vector<std::size_t>>();
  if (hist.size() != 5) throw IoError("tier histogram must have 5 entries");
  std::copy(hist.begin(), hist.end(), ds.tier_histogram.begin());

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Triplet t;
    t.tier = rec.at("tier");
    t.world_index = rec.at("world_index");
    t.positive_dev = {rec.at("positive_dev")[0], rec.at("positive_dev")[1],
                      rec.at("positive_dev")[2]};
    t.negative_dev = {rec.at("negative_dev")[0], rec.at("negative_dev")[1],
                      rec.at("negative_dev")[2]};
    t.anchor = codec::observation_from_json(rec.at("anchor"));
    t.positive = codec::observation_from_json(rec.at("positive"));
    t.negative = codec::observation_from_json(rec.at("negative"));
    ds.triplets.push_back(std::move(t));
  }
  return ds;
}

DatasetSplit split_by_world(const TripletDataset& dataset, double train_frac,
                            double val_frac, std::uint64_t seed) {
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw UsageError("split fractions must be nonnegative and sum <= 1");
  const std::size_t w = dataset.world_ids.size();
  if (w == 0) throw UsageError("dataset has no world references");

  std::vector<std::size_t> order(w);
  for (std::size_t i = 0; i < w; ++i) order[i] = i;
  Rng rng(hash_values(kTripletTag, "split", seed));
  for (std::size_t i = w; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(static_cast<std::int64_t>(i))]);

  auto n_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(w) * val_frac));
  auto n_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(w) * (1.0 - train_frac - val_frac)));
  if (n_val + n_test > w) n_test = w - n_val;

  enum { kTrain, kVal, kTest };
  std::vector<int> bucket(w, kTrain);
  for (std::size_t r = 0; r < n_val; ++r) bucket[order[r]] = kVal;
  for (std::size_t r = n_val; r < n_val + n_test; ++r)
    bucket[order[r]] = kTest;

  DatasetSplit split;
  split.train.seed = split.val.seed = split.test.seed = dataset.seed;
  split.train.world_ids = split.val.world_ids = split.test.world_ids =
      dataset.world_ids;
  for (const Triplet& t : dataset.triplets) {
    TripletDataset* target = &split.train;
    if (bucket[t.world_index] == kVal) target = &split.val;
    if (bucket[t.world_index] == kTest) target = &split.test;
    target->tier_histogram[t.tier - 1] += 1;
    target->triplets.push_back(t);
  }
  return split;
}

}  // namespace seannet
