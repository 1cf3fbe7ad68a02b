#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "seannet/errors.hpp"
#include "seannet/training.hpp"

using namespace seannet;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.max_instances = 8;
  cfg.pe_dim = 8;
  cfg.visual_dim = 8;
  cfg.word_dim = 8;
  cfg.object_dim = 16;
  cfg.gcn_dims = {8, 8, 4};
  cfg.sg_embed_dim = 16;
  cfg.scene_embed_dim = 16;
  return cfg;
}

WorldConfig tiny_world_config() {
  WorldConfig cfg;
  cfg.object_count = 6;
  cfg.max_instances = 8;
  cfg.feature_dim = 8;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("triplet loss identities") {
  CHECK(triplet_loss(0.9, 0.5, 0.1) == 0.0);
  CHECK(triplet_loss(0.6, 0.6, 0.1) == doctest::Approx(0.1));
  CHECK(triplet_loss(0.2, 0.7, 0.1) == doctest::Approx(0.6));
  // Zero exactly when the margin is met (binary-exact operands).
  CHECK(triplet_loss(0.75, 0.5, 0.25) == 0.0);
  CHECK(triplet_loss(0.749, 0.5, 0.25) > 0.0);
}

TEST_CASE("hinge gradients are ±1 when active, 0 when closed") {
  auto grads = [](double ap, double an, double margin) {
    Tape tape;
    ValueId s_ap = tape.leaf(Tensor::scalar(ap), true);
    ValueId s_an = tape.leaf(Tensor::scalar(an), true);
    ValueId loss = tape.relu(tape.add_scalar(tape.sub(s_an, s_ap), margin));
    tape.backward(loss);
    return std::pair(tape.grad(s_ap)[0], tape.grad(s_an)[0]);
  };
  auto [gp_active, gn_active] = grads(0.2, 0.7, 0.1);
  CHECK(gp_active == -1.0);
  CHECK(gn_active == 1.0);
  auto [gp_closed, gn_closed] = grads(0.9, 0.5, 0.1);
  CHECK(gp_closed == 0.0);
  CHECK(gn_closed == 0.0);
  // Exactly at the hinge, the subgradient is 0 (binary-exact operands).
  auto [gp_edge, gn_edge] = grads(0.75, 0.5, 0.25);
  CHECK(gp_edge == 0.0);
  CHECK(gn_edge == 0.0);
}

TEST_CASE("sgd with momentum") {
  ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 1);
  for (Tensor& t : params.values) std::fill(t.data.begin(), t.data.end(), 0.0);
  SgdState state = SgdState::init(params);

  std::vector<Tensor> grads;
  for (const Tensor& t : params.values) grads.push_back(Tensor::zeros(t.shape));
  grads[0].data[0] = 1.0;

  sgd_step(params, grads, state, 1.0, 0.0);
  CHECK(params.values[0].data[0] == doctest::Approx(-1.0));

  // Constant unit gradient, γ=0.9: second step adds 1.9.
  for (Tensor& t : params.values) std::fill(t.data.begin(), t.data.end(), 0.0);
  state = SgdState::init(params);
  sgd_step(params, grads, state, 1.0, 0.9);
  sgd_step(params, grads, state, 1.0, 0.9);
  CHECK(params.values[0].data[0] == doctest::Approx(-2.9));

  // Zero gradients leave parameters alone.
  const double before = params.values[0].data[0];
  std::vector<Tensor> zero;
  for (const Tensor& t : params.values) zero.push_back(Tensor::zeros(t.shape));
  sgd_step(params, zero, state, 1.0, 0.0);
  CHECK(params.values[0].data[0] == before);

  grads[0].data[0] = std::nan("");
  CHECK_THROWS_AS(sgd_step(params, grads, state, 1.0, 0.0), TrainingError);
}

TEST_CASE("lr schedule is bit-exact") {
  HyperParams hp;
  for (int e = 0; e < 60; ++e) {
    CHECK(scheduled_lr(hp, e) ==
          0.01 * std::pow(0.7, static_cast<double>(e / 10)));
  }
  CHECK(scheduled_lr(hp, 0) == 0.01);
  CHECK(scheduled_lr(hp, 10) == doctest::Approx(0.007));
  CHECK(scheduled_lr(hp, 20) == doctest::Approx(0.0049));
}

TEST_CASE("zero-epoch training returns the initialization") {
  const WorldState world = gen_world(3, tiny_world_config());
  const CameraConfig cam;
  const std::vector<WorldState> worlds = {world};
  const TripletDataset ds = gen_dataset(worlds, 20, 5, cam);
  HyperParams hp;
  hp.epochs = 0;
  hp.seed = 11;
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(8);
  const TrainResult result = train(ds, ds, tiny_config(), hp, words);
  CHECK(result.metrics.empty());
  CHECK(result.best_epoch == -1);
  // Matches a fresh init with the same derivation.
  const TrainResult again = train(ds, ds, tiny_config(), hp, words);
  for (std::size_t i = 0; i < result.best.values.size(); ++i)
    CHECK(result.best.values[i].data == again.best.values[i].data);
}

TEST_CASE("accuracy conventions: constant model ties, oracle wins") {
  const WorldState world = gen_world(13, tiny_world_config());
  const CameraConfig cam;
  const std::vector<WorldState> worlds = {world};
  TripletDataset ds = gen_dataset(worlds, 20, 7, cam);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(8);

  // All-zero weights with a positive bias embed every view identically.
  ModelParams constant = ModelParams::init(tiny_config(), 2);
  for (Tensor& t : constant.values) std::fill(t.data.begin(), t.data.end(), 0.0);
  for (double& v : constant.at("scene_fusion.bias").data) v = 1.0;
  CHECK(eval_triplet_accuracy(constant, words, ds) == 0.0);

  // Duplicating the anchor as positive makes every triplet a win, as long
  // as the negative view genuinely differs (taken from another world).
  const WorldState other = gen_world(14, tiny_world_config());
  TripletDataset oracle_ds = ds;
  for (std::size_t k = 0; k < oracle_ds.triplets.size(); ++k) {
    Triplet& t = oracle_ds.triplets[k];
    t.positive = t.anchor;
    const GridCell cell = other.reachable[k % other.reachable.size()];
    t.negative = observe(other, {cell.i, cell.j, 0}, CameraConfig{});
  }
  const ModelParams random_model = ModelParams::init(tiny_config(), 3);
  CHECK(eval_triplet_accuracy(random_model, words, oracle_ds) == 1.0);
}

TEST_CASE("training determinism and learning smoke test") {
  WorldConfig wc = tiny_world_config();
  const std::vector<WorldState> worlds = {gen_world(21, wc), gen_world(22, wc)};
  const CameraConfig cam;
  const TripletDataset train_ds = gen_dataset(worlds, 120, 31, cam);
  const TripletDataset val_ds = gen_dataset(worlds, 40, 32, cam);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(8);

  HyperParams hp;
  hp.epochs = 8;
  hp.batch_size = 16;
  hp.seed = 5;

  const TrainResult a = train(train_ds, val_ds, tiny_config(), hp, words);
  const TrainResult b = train(train_ds, val_ds, tiny_config(), hp, words);
  CHECK(a.metrics.size() == b.metrics.size());
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    CHECK(a.metrics[e].train_loss == b.metrics[e].train_loss);
    CHECK(a.metrics[e].val_accuracy == b.metrics[e].val_accuracy);
    CHECK(a.metrics[e].lr == b.metrics[e].lr);
  }

  const ModelParams untrained = ModelParams::init(tiny_config(), 999);
  const double before = eval_triplet_accuracy(untrained, words, val_ds);
  const double after = eval_triplet_accuracy(a.best, words, val_ds);
  CHECK(after > before);

  // Untrained hinge stays open on average: positive initial loss.
  CHECK(a.metrics[0].train_loss > 0.0);
}

TEST_CASE("similarity stats cover the requested buckets") {
  const WorldState world = gen_world(41, tiny_world_config());
  const CameraConfig cam;
  const ModelParams params = ModelParams::init(tiny_config(), 4);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(8);
  const SimilarityStats stats =
      similarity_stats(params, words, world, cam, 81 * 2, 9);

  CHECK(stats.buckets.contains({0, 0, 0}));
  CHECK(stats.buckets.contains({1, 0, 0}));
  CHECK(stats.buckets.contains({-1, 0, 0}));
  for (const auto& [key, bs] : stats.buckets) {
    CHECK(bs.count >= 1);
    CHECK(bs.stddev >= 0.0);
    CHECK(bs.mean >= -1.0);
    CHECK(bs.mean <= 1.0);
  }
}

TEST_CASE("threshold selection") {
  SimilarityStats stats;
  stats.buckets[{0, 0, 0}] = {0.95, 0.05, 100};
  CHECK(select_threshold(stats) == 0.90);

  stats.buckets[{0, 0, 0}] = {1.0, 0.0, 100};
  CHECK(select_threshold(stats) == 1.0 - 1e-6);

  stats.buckets[{0, 0, 0}] = {0.0, 1.5, 100};
  CHECK(select_threshold(stats) == -1.0 + 1e-6);

  CHECK_THROWS_AS(select_threshold(SimilarityStats{}), UsageError);
  CHECK_THROWS_AS(select_threshold(stats, "quantile"), UsageError);
}

TEST_CASE("metrics and stats files round-trip") {
  std::vector<EpochMetrics> metrics = {{0, 0.01, 0.41, 0.5},
                                       {1, 0.01, 0.33, 0.625}};
  const std::filesystem::path mp = "metrics_test.csv";
  write_metrics_csv(mp, metrics);
  const auto back = read_metrics_csv(mp);
  REQUIRE(back.size() == 2);
  CHECK(back[1].lr == metrics[1].lr);
  CHECK(back[1].train_loss == metrics[1].train_loss);
  CHECK(back[1].val_accuracy == metrics[1].val_accuracy);
  std::filesystem::remove(mp);

  SimilarityStats stats;
  stats.buckets[{0, 0, 0}] = {0.95, 0.05, 10};
  stats.buckets[{1, -2, 0}] = {0.5, 0.25, 7};
  const std::filesystem::path sp = "stats_test.csv";
  write_stats_csv(sp, stats);
  const SimilarityStats sback = read_stats_csv(sp);
  CHECK(sback.buckets.at({1, -2, 0}).mean == 0.5);
  CHECK(sback.buckets.at({0, 0, 0}).count == 10);
  std::filesystem::remove(sp);
}

TEST_SUITE_END();
