#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string_view>
#include <tuple>
#include <vector>

#include "seannet/model.hpp"
#include "seannet/triplets.hpp"

namespace seannet {

struct HyperParams {
  double lr = 0.01;
  double momentum = 0.9;      // γ
  double decay = 0.7;         // β, applied every decay_every epochs
  int decay_every = 10;
  int epochs = 60;
  double margin = 0.1;        // α
  double dropout_p = 0.2;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Learning rate at a given epoch: lr · β^⌊epoch/decay_every⌋.
double scheduled_lr(const HyperParams& hp, int epoch);

// max{0, s_AN + α − s_AP}; zero exactly when the margin is satisfied.
double triplet_loss(double s_ap, double s_an, double margin);

struct SgdState {
  std::vector<Tensor> velocity;

  static SgdState init(const ModelParams& params);
};

// v ← γ·v + g; θ ← θ − lr·v
void sgd_step(ModelParams& params, const std::vector<Tensor>& grads,
              SgdState& state, double lr, double momentum);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = -1;  // -1 when no epochs ran
  std::vector<EpochMetrics> metrics;
};

// Mini-batch SGD over triplet losses; gradients are batch means. Keeps the
// checkpoint with the best validation triplet accuracy (earliest epoch on
// ties).
TrainResult train(const TripletDataset& train_set, const TripletDataset& val_set,
                  const ModelConfig& config, const HyperParams& hp,
                  const EmbeddingTable& words);

// Fraction of triplets with S(A,P) strictly greater than S(A,N).
double eval_triplet_accuracy(const ModelParams& params,
                             const EmbeddingTable& words,
                             const TripletDataset& dataset);

struct BucketStats {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

// Keyed by pose deviation (dx, dy, dtheta-quarters).
struct SimilarityStats {
  std::map<std::tuple<int, int, int>, BucketStats> buckets;
};

// Similarity of pose pairs per deviation bucket dx, dy in [-4, 4] at equal
// heading. The (0,0) bucket pairs a pose with itself across object dynamics.
SimilarityStats similarity_stats(const ModelParams& params,
                                 const EmbeddingTable& words,
                                 const WorldState& world,
                                 const CameraConfig& camera, int n_pairs,
                                 std::uint64_t seed);

// Localization threshold from the same-pose bucket; default method
// "mean-minus-std". Result is clamped inside (-1, 1).
double select_threshold(const SimilarityStats& stats,
                        std::string_view method = "mean-minus-std");

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& metrics);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

void write_stats_csv(const std::filesystem::path& path,
                     const SimilarityStats& stats);
SimilarityStats read_stats_csv(const std::filesystem::path& path);

}  // namespace seannet
