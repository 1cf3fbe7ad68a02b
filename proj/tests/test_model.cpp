#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "seannet/errors.hpp"
#include "seannet/model.hpp"
#include "support/oracles.hpp"

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
  cfg.dropout_p = 0.2;
  return cfg;
}

WorldConfig tiny_world_config() {
  WorldConfig cfg;
  cfg.object_count = 5;
  cfg.max_instances = 8;
  cfg.feature_dim = 8;
  return cfg;
}

Observation tiny_observation(std::uint64_t seed, int min_detections = 2) {
  const WorldConfig wc = tiny_world_config();
  const CameraConfig cam;
  for (std::uint64_t s = seed;; ++s) {
    const WorldState world = gen_world(s, wc);
    for (const GridCell& cell : world.reachable) {
      for (int h = 0; h < 360; h += 90) {
        Observation obs = observe(world, {cell.i, cell.j, h}, cam);
        if (static_cast<int>(obs.detections.size()) >= min_detections)
          return obs;
      }
    }
  }
}

double vec_cos(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("positional encoding identities") {
  const auto pe0 = positional_encode(0.0, 8);
  CHECK(pe0 == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});

  for (double p : {0.0, 1.5, 100.0, 223.0}) {
    const auto pe = positional_encode(p, 64);
    const double sq = std::inner_product(pe.begin(), pe.end(), pe.begin(), 0.0);
    CHECK(sq == doctest::Approx(32.0));
  }

  // Nearby coordinates embed closer than distant ones.
  const auto a = positional_encode(100.0, 64);
  const auto b = positional_encode(101.0, 64);
  const auto c = positional_encode(150.0, 64);
  CHECK(vec_cos(a, b) > vec_cos(a, c));
}

TEST_CASE("bbox embedding") {
  const BBox2 box{10, 20, 50, 60};
  CHECK(bbox_embed(box, 64).size() == 256);
  CHECK(bbox_embed(box, 64) == bbox_embed(box, 64));

  const BBox2 near{11, 21, 51, 61};
  const BBox2 far{60, 70, 100, 110};
  const auto e = bbox_embed(box, 64);
  CHECK(vec_cos(e, bbox_embed(near, 64)) > vec_cos(e, bbox_embed(far, 64)));
}

TEST_CASE("word embeddings: lookup, fallback, strictness") {
  const EmbeddingTable fallback = EmbeddingTable::seeded_fallback(32);
  CHECK(fallback.lookup("mug") == fallback.lookup("mug"));

  // 20 distinct labels: mean |cosine| stays small.
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 20; ++k)
    rows.push_back(fallback.lookup("label_" + std::to_string(k)));
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      total += std::abs(vec_cos(rows[i], rows[j]));
      ++pairs;
    }
  CHECK(total / pairs < 0.3);

  const char* path = "word_table_test.txt";
  {
    std::ofstream out(path);
    out << "mug 1 0 0\n";
    out << "desk 0.5 0.25 -0.125\n";
  }
  const EmbeddingTable table = EmbeddingTable::load(path, /*strict=*/true);
  CHECK(table.lookup("mug") == std::vector<double>{1, 0, 0});
  CHECK(table.lookup("desk") == std::vector<double>{0.5, 0.25, -0.125});
  CHECK_THROWS_AS(table.lookup("unknown"), LookupError);
  std::remove(path);
}

TEST_CASE("object embedding basics") {
  const ModelConfig cfg = tiny_config();
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);
  Detection det;
  det.object_id = 1;
  det.class_label = "mug";
  det.bbox = {5, 6, 40, 40};
  det.feature.assign(cfg.visual_dim, 0.3);

  ModelParams zeroed = ModelParams::init(cfg, 1);
  for (Tensor& t : zeroed.values) std::fill(t.data.begin(), t.data.end(), 0.0);
  {
    Tape tape;
    EmbedContext ctx = bind_model(tape, zeroed, words, Mode::kEval, nullptr);
    const Tensor& out = tape.value(object_embed(ctx, det));
    CHECK(out.data == std::vector<double>(cfg.object_dim, 0.0));
  }

  const ModelParams params = ModelParams::init(cfg, 2);
  Tape t1, t2;
  EmbedContext c1 = bind_model(t1, params, words, Mode::kEval, nullptr);
  EmbedContext c2 = bind_model(t2, params, words, Mode::kEval, nullptr);
  CHECK(t1.value(object_embed(c1, det)).data ==
        t2.value(object_embed(c2, det)).data);
}

TEST_CASE("object embedding reaches all three input segments") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = ModelParams::init(cfg, 3);
  Rng rng(5);
  Tensor input = Tensor::zeros({1, static_cast<std::size_t>(cfg.object_input_dim())});
  for (double& v : input.data) v = rng.normal();

  Tape tape;
  ValueId in = tape.leaf(input, true);
  ValueId w = tape.constant(params.at("object.weight"));
  ValueId b = tape.constant(params.at("object.bias"));
  ValueId probe = tape.constant(
      Tensor({static_cast<std::size_t>(cfg.object_dim), 1},
             std::vector<double>(cfg.object_dim, 1.0)));
  ValueId out = tape.relu(tape.add_row(tape.matmul(in, w), b));
  tape.backward(tape.sum(tape.matmul(out, probe)));

  const auto g = tape.grad(in);
  const int bb = cfg.bbox_dim();
  auto max_abs = [&](int lo, int hi) {
    double m = 0.0;
    for (int i = lo; i < hi; ++i) m = std::max(m, std::abs(g[i]));
    return m;
  };
  CHECK(max_abs(0, bb) > 0.0);
  CHECK(max_abs(bb, bb + cfg.visual_dim) > 0.0);
  CHECK(max_abs(bb + cfg.visual_dim, cfg.object_input_dim()) > 0.0);
}

TEST_CASE("gcn pathway: zero adjacency, isolated node, permutation") {
  const ModelConfig cfg = tiny_config();
  const std::size_t m = cfg.max_instances;
  const std::size_t v = cfg.object_dim;
  const ModelParams params = ModelParams::init(cfg, 4);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);

  SUBCASE("all-zero adjacency gives all-zero output") {
    Tape tape;
    EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
    ValueId x0 = tape.constant(Tensor::zeros({m, v}));
    const Tensor& out =
        tape.value(gcn_pathway(ctx, Tensor::zeros({m, m}), x0, 0));
    CHECK(out.shape == std::vector<std::size_t>{m, std::size_t(cfg.gcn_dims[2])});
    for (double x : out.data) CHECK(x == 0.0);
  }

  SUBCASE("isolated self-loop node equals a per-node transform") {
    Rng rng(6);
    Tensor x0 = Tensor::zeros({m, v});
    const int node = 3;
    for (std::size_t k = 0; k < v; ++k) x0.at(node, k) = rng.normal();
    Tensor a_hat = Tensor::zeros({m, m});
    a_hat.at(node, node) = 1.0;

    Tape tape;
    EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
    const Tensor& out =
        tape.value(gcn_pathway(ctx, a_hat, tape.constant(x0), 0));

    // Expected: relu(relu(relu(x W1) W2) W3) computed by hand.
    std::vector<double> row(x0.data.begin() + node * v,
                            x0.data.begin() + (node + 1) * v);
    for (int layer = 1; layer <= 3; ++layer) {
      const Tensor& w = params.at("gcn.on.w" + std::to_string(layer));
      std::vector<double> next(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
          next[j] += row[i] * w.at(i, j);
      for (double& x : next) x = std::max(0.0, x);
      row = std::move(next);
    }
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < row.size(); ++c)
        CHECK(out.at(r, c) ==
              doctest::Approx(r == node ? row[c] : 0.0).epsilon(1e-12));
  }

  SUBCASE("permutation equivariance") {
    Rng rng(7);
    // Random detected set with random symmetric edges, then a permutation.
    std::vector<std::int32_t> detected = {0, 2, 3, 6};
    Tensor adj = Tensor::zeros({m, m});
    for (std::int32_t a : detected)
      for (std::int32_t b : detected)
        if (a < b && rng.uniform() < 0.6) adj.at(a, b) = adj.at(b, a) = 1.0;
    Tensor x0 = Tensor::zeros({m, v});
    for (std::int32_t id : detected)
      for (std::size_t k = 0; k < v; ++k) x0.at(id, k) = rng.normal();

    std::vector<int> perm(m);
    for (std::size_t i = 0; i < m; ++i) perm[i] = static_cast<int>((i + 3) % m);
    Tensor adj_p = Tensor::zeros({m, m});
    Tensor x0_p = Tensor::zeros({m, v});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j)
        adj_p.at(perm[i], perm[j]) = adj.at(i, j);
      for (std::size_t k = 0; k < v; ++k) x0_p.at(perm[i], k) = x0.at(i, k);
    }
    std::vector<std::int32_t> detected_p;
    for (std::int32_t id : detected) detected_p.push_back(perm[id]);
    std::sort(detected_p.begin(), detected_p.end());

    const Tensor a_hat = row_normalize(adj, detected);
    const Tensor a_hat_p = row_normalize(adj_p, detected_p);

    Tape tape;
    EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
    const Tensor& out =
        tape.value(gcn_pathway(ctx, a_hat, tape.constant(x0), 2));
    const Tensor& out_p =
        tape.value(gcn_pathway(ctx, a_hat_p, tape.constant(x0_p), 2));

    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < out.cols(); ++c)
        CHECK(out_p.at(perm[i], c) ==
              doctest::Approx(out.at(i, c)).epsilon(1e-12));
  }
}

TEST_CASE("scene-graph embedding: empty views and disjoint exclusion") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = ModelParams::init(cfg, 8);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);

  Observation empty;
  empty.pose = {0, 0, 0};
  Tape t1, t2;
  EmbedContext c1 = bind_model(t1, params, words, Mode::kEval, nullptr);
  EmbedContext c2 = bind_model(t2, params, words, Mode::kEval, nullptr);
  CHECK(t1.value(scene_embed(c1, empty)).data ==
        t2.value(scene_embed(c2, empty)).data);

  // Turning every disjoint edge into no edge leaves the embedding unchanged.
  Observation obs = tiny_observation(100, 3);
  Observation stripped = obs;
  std::erase_if(stripped.scene_graph.edges, [](const auto& entry) {
    return entry.second == Relation::kDisjoint;
  });
  Tape t3, t4;
  EmbedContext c3 = bind_model(t3, params, words, Mode::kEval, nullptr);
  EmbedContext c4 = bind_model(t4, params, words, Mode::kEval, nullptr);
  CHECK(t3.value(scene_embed(c3, obs)).data ==
        t4.value(scene_embed(c4, stripped)).data);
}

TEST_CASE("pre-fusion concat width matches the full-scale layout") {
  ModelConfig cfg = ModelConfig::paper_scale();
  CHECK(cfg.pathway_concat_dim() == 6144);
  cfg.validate();
}

TEST_CASE("scene embedding reaches every parameter group") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = ModelParams::init(cfg, 9);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);
  const Observation a = tiny_observation(200, 2);
  const Observation b = tiny_observation(300, 2);

  Tape tape;
  EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
  ValueId va = scene_embed(ctx, a);
  ValueId vb = scene_embed(ctx, b);
  tape.backward(tape.cosine(va, vb));

  for (std::size_t p = 0; p < params.values.size(); ++p) {
    const auto g = tape.grad(ctx.param_handles[p]);
    double peak = 0.0;
    for (double x : g) peak = std::max(peak, std::abs(x));
    INFO("parameter ", params.names[p]);
    CHECK(peak > 0.0);
  }
}

TEST_CASE("similarity: reflexivity, symmetry, range, scale invariance") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = ModelParams::init(cfg, 10);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);
  const Observation a = tiny_observation(400, 2);
  const Observation b = tiny_observation(500, 2);

  CHECK(similarity(a, a, params, words) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(similarity(a, b, params, words) ==
        doctest::Approx(similarity(b, a, params, words)).epsilon(1e-12));
  const double s = similarity(a, b, params, words);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);

  ModelParams scaled = params;
  for (double& v : scaled.at("scene_fusion.weight").data) v *= 3.0;
  for (double& v : scaled.at("scene_fusion.bias").data) v *= 3.0;
  CHECK(similarity(a, b, scaled, words) == doctest::Approx(s).epsilon(1e-9));
}

TEST_CASE("localize thresholding is strict") {
  CHECK(localize(0.95, 0.90));
  CHECK_FALSE(localize(0.90, 0.90));
  CHECK_FALSE(localize(-1.0, 0.0));
}

TEST_CASE("end-to-end similarity gradient vs finite differences (tiny)") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = ModelParams::init(cfg, 11);
  const EmbeddingTable words = EmbeddingTable::seeded_fallback(cfg.word_dim);
  const Observation a = tiny_observation(600, 2);
  const Observation b = tiny_observation(700, 2);

  Tape tape;
  EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
  tape.backward(tape.cosine(scene_embed(ctx, a), scene_embed(ctx, b)));

  auto eval = [&]() {
    Tape t;
    EmbedContext c = bind_model(t, params, words, Mode::kEval, nullptr);
    return t.value(t.cosine(scene_embed(c, a), scene_embed(c, b))).data[0];
  };

  Rng pick(12);
  double worst = 0.0;
  for (int probe = 0; probe < 120; ++probe) {
    const auto p = static_cast<std::size_t>(
        pick.uniform_int(std::ssize(params.values)));
    const auto i = static_cast<std::size_t>(
        pick.uniform_int(std::ssize(params.values[p].data)));
    const double fd =
        oracle::central_difference(eval, &params.values[p].data[i], 1e-5);
    worst = std::max(
        worst, oracle::relative_error(tape.grad(ctx.param_handles[p])[i], fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round-trip preserves parameters and config") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = ModelParams::init(cfg, 13);
  const char* path = "model_ckpt_test.bin";
  save_checkpoint(path, params);
  const ModelParams back = load_checkpoint(path);
  CHECK(back.config == cfg);
  CHECK(back.names == params.names);
  for (std::size_t i = 0; i < params.values.size(); ++i)
    CHECK(back.values[i].data == params.values[i].data);
  std::remove(path);
}

TEST_SUITE_END();
