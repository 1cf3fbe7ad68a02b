#include "seannet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seannet/errors.hpp"
#include "seannet/rng.hpp"

namespace seannet {

namespace {

constexpr std::uint64_t kTrainTag = 0x5ea9e7004ULL;

// Decimal re-rounding keeps reported thresholds free of 1-ulp binary
// subtraction residue (0.95 - 0.05 lands one ulp under 0.9).
double round_significant(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

struct TripletGraph {
  ValueId loss;
  double s_ap;
  double s_an;
};

TripletGraph build_triplet_loss(EmbedContext& ctx, const Triplet& triplet,
                                double margin) {
  Tape& tape = *ctx.tape;
  ValueId va = scene_embed(ctx, triplet.anchor);
  ValueId vp = scene_embed(ctx, triplet.positive);
  ValueId vn = scene_embed(ctx, triplet.negative);
  ValueId s_ap = tape.cosine(va, vp);
  ValueId s_an = tape.cosine(va, vn);
  ValueId loss = tape.relu(tape.add_scalar(tape.sub(s_an, s_ap), margin));
  return {loss, tape.value(s_ap).data[0], tape.value(s_an).data[0]};
}

}  // namespace

void HyperParams::validate() const {
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must be in [0, 1)");
  if (decay <= 0.0 || decay > 1.0) throw ConfigError("decay must be in (0, 1]");
  if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (margin < 0.0) throw ConfigError("margin must be >= 0");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("dropout_p must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double scheduled_lr(const HyperParams& hp, int epoch) {
  return hp.lr * std::pow(hp.decay, static_cast<double>(epoch / hp.decay_every));
}

double triplet_loss(double s_ap, double s_an, double margin) {
  return std::max(0.0, s_an + margin - s_ap);
}

SgdState SgdState::init(const ModelParams& params) {
  SgdState state;
  for (const Tensor& t : params.values)
    state.velocity.push_back(Tensor::zeros(t.shape));
  return state;
}

void sgd_step(ModelParams& params, const std::vector<Tensor>& grads,
              SgdState& state, double lr, double momentum) {
  if (grads.size() != params.values.size() ||
      state.velocity.size() != params.values.size())
    throw ShapeError("sgd_step tensor count mismatch");
  for (std::size_t p = 0; p < params.values.size(); ++p) {
    Tensor& theta = params.values[p];
    const Tensor& g = grads[p];
    Tensor& v = state.velocity[p];
    if (!g.same_shape(theta)) throw ShapeError("gradient shape mismatch");
    if (!g.all_finite())
      throw TrainingError("non-finite gradient in " + params.names[p]);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v.data[i] = momentum * v.data[i] + g.data[i];
      theta.data[i] -= lr * v.data[i];
    }
  }
}

TrainResult train(const TripletDataset& train_set,
                  const TripletDataset& val_set, const ModelConfig& config,
                  const HyperParams& hp, const EmbeddingTable& words) {
  hp.validate();
  if (train_set.triplets.empty()) throw UsageError("empty training set");

  ModelConfig cfg = config;
  cfg.dropout_p = hp.dropout_p;
  ModelParams params =
      ModelParams::init(cfg, hash_values(kTrainTag, "init", hp.seed));
  SgdState state = SgdState::init(params);

  TrainResult result;
  result.best = params;

  const std::size_t n = train_set.triplets.size();
  std::vector<std::size_t> order(n);
  double best_acc = -1.0;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = scheduled_lr(hp, epoch);

    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(hash_values(kTrainTag, "shuffle", hp.seed,
                            std::uint64_t(epoch)));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1],
                order[shuffle.uniform_int(static_cast<std::int64_t>(i))]);

    double epoch_loss = 0.0;
    for (std::size_t batch_start = 0; batch_start < n;
         batch_start += hp.batch_size) {
      const std::size_t batch_end =
          std::min(batch_start + hp.batch_size, n);
      const auto batch_n = static_cast<double>(batch_end - batch_start);

      std::vector<Tensor> grads;
      for (const Tensor& t : params.values)
        grads.push_back(Tensor::zeros(t.shape));

      for (std::size_t k = batch_start; k < batch_end; ++k) {
        const Triplet& triplet = train_set.triplets[order[k]];
        Tape tape;
        Rng dropout(hash_values(kTrainTag, "dropout", hp.seed,
                                std::uint64_t(epoch), order[k]));
        EmbedContext ctx =
            bind_model(tape, params, words, Mode::kTrain, &dropout);
        TripletGraph graph = build_triplet_loss(ctx, triplet, hp.margin);
        const double loss = tape.value(graph.loss).data[0];
        if (!std::isfinite(loss))
          throw TrainingError("non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(batch_start / hp.batch_size));
        epoch_loss += loss;
        tape.backward(graph.loss);
        for (std::size_t p = 0; p < params.values.size(); ++p) {
          const auto g = tape.grad(ctx.param_handles[p]);
          for (std::size_t i = 0; i < g.size(); ++i)
            grads[p].data[i] += g[i];
        }
      }
      for (Tensor& g : grads)
        for (double& x : g.data) x /= batch_n;
      sgd_step(params, grads, state, lr, hp.momentum);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = epoch_loss / static_cast<double>(n);
    m.val_accuracy = val_set.triplets.empty()
                         ? 0.0
                         : eval_triplet_accuracy(params, words, val_set);
    result.metrics.push_back(m);

    if (m.val_accuracy > best_acc) {
      best_acc = m.val_accuracy;
      result.best = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

double eval_triplet_accuracy(const ModelParams& params,
                             const EmbeddingTable& words,
                             const TripletDataset& dataset) {
  if (dataset.triplets.empty())
    throw UsageError("cannot evaluate an empty dataset");
  std::size_t wins = 0;
  for (const Triplet& triplet : dataset.triplets) {
    Tape tape;
    EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
    ValueId va = scene_embed(ctx, triplet.anchor);
    ValueId vp = scene_embed(ctx, triplet.positive);
    ValueId vn = scene_embed(ctx, triplet.negative);
    const double s_ap = tape.value(tape.cosine(va, vp)).data[0];
    const double s_an = tape.value(tape.cosine(va, vn)).data[0];
    if (s_ap > s_an) ++wins;  // ties count as failures
  }
  return static_cast<double>(wins) /
         static_cast<double>(dataset.triplets.size());
}

SimilarityStats similarity_stats(const ModelParams& params,
                                 const EmbeddingTable& words,
                                 const WorldState& world,
                                 const CameraConfig& camera, int n_pairs,
                                 std::uint64_t seed) {
  if (n_pairs < 1) throw UsageError("n_pairs must be >= 1");
  constexpr int kSpan = 4;
  const int buckets = (2 * kSpan + 1) * (2 * kSpan + 1);
  const int per_bucket = std::max(1, n_pairs / buckets);

  SimilarityStats stats;
  Rng rng(hash_values(kTrainTag, "stats", seed));
  int dyn_counter = 0;
  for (int dx = -kSpan; dx <= kSpan; ++dx) {
    for (int dy = -kSpan; dy <= kSpan; ++dy) {
      double sum = 0.0, sum_sq = 0.0;
      int count = 0;
      for (int k = 0; k < per_bucket; ++k) {
        Pose anchor;
        bool found = false;
        for (int attempt = 0; attempt < 50; ++attempt) {
          const GridCell& cell =
              world.reachable[rng.uniform_int(std::ssize(world.reachable))];
          anchor = {cell.i, cell.j,
                    90 * static_cast<int>(rng.uniform_int(4))};
          if (world.is_reachable(anchor.i + dx, anchor.j + dy)) {
            found = true;
            break;
          }
        }
        if (!found) continue;

        const Observation a = observe(world, anchor, camera);
        Observation b;
        if (dx == 0 && dy == 0) {
          const WorldState moved = apply_dynamics(
              world,
              hash_values(kTrainTag, "stats-dyn", seed,
                          std::uint64_t(dyn_counter++)));
          b = observe(moved, anchor, camera);
        } else {
          b = observe(world, {anchor.i + dx, anchor.j + dy, anchor.heading},
                      camera);
        }
        const double s = similarity(a, b, params, words);
        sum += s;
        sum_sq += s * s;
        ++count;
      }
      if (count > 0) {
        BucketStats bs;
        bs.count = count;
        bs.mean = sum / count;
        const double var = std::max(0.0, sum_sq / count - bs.mean * bs.mean);
        bs.stddev = std::sqrt(var);
        stats.buckets[{dx, dy, 0}] = bs;
      }
    }
  }
  return stats;
}

double select_threshold(const SimilarityStats& stats,
                        std::string_view method) {
  if (stats.buckets.empty()) throw UsageError("empty similarity stats");
  if (method != "mean-minus-std")
    throw UsageError("unknown threshold method: " + std::string(method));
  const auto it = stats.buckets.find({0, 0, 0});
  if (it == stats.buckets.end())
    throw UsageError("stats carry no same-pose bucket");
  const double raw = it->second.mean - it->second.stddev;
  const double eps = round_significant(raw, 12);
  return std::clamp(eps, -1.0 + 1e-6, 1.0 - 1e-6);
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& metrics) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open metrics file: " + path.string());
  out << "epoch,lr,train_loss,val_accuracy\n";
  char buf[160];
  for (const EpochMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", m.epoch, m.lr,
                  m.train_loss, m.val_accuracy);
    out << buf;
  }
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochMetrics m;
    if (std::sscanf(line.c_str(), "%d,%lg,%lg,%lg", &m.epoch, &m.lr,
                    &m.train_loss, &m.val_accuracy) != 4)
      throw IoError("malformed metrics row: " + line);
    out.push_back(m);
  }
  return out;
}

void write_stats_csv(const std::filesystem::path& path,
                     const SimilarityStats& stats) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open stats file: " + path.string());
  out << "dx,dy,dtheta,mean,std,count\n";
  char buf[200];
  for (const auto& [key, bs] : stats.buckets) {
    const auto [dx, dy, dtheta] = key;
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%d\n", dx, dy,
                  dtheta, bs.mean, bs.stddev, bs.count);
    out << buf;
  }
}

SimilarityStats read_stats_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stats file: " + path.string());
  std::string line;
  std::getline(in, line);
  SimilarityStats stats;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int dx, dy, dtheta, count;
    double mean, stddev;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lg,%lg,%d", &dx, &dy, &dtheta,
                    &mean, &stddev, &count) != 6)
      throw IoError("malformed stats row: " + line);
    stats.buckets[{dx, dy, dtheta}] = {mean, stddev, count};
  }
  return stats;
}

}  // namespace seannet
