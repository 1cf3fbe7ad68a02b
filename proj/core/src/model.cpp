#include "seannet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "seannet/checkpoint.hpp"
#include "seannet/errors.hpp"
#include "seannet/rng.hpp"

namespace seannet {

namespace {

constexpr std::uint64_t kModelTag = 0x5ea9e7002ULL;

const char* kPathwayNames[3] = {"on", "in", "proximity"};

}  // namespace

void ModelConfig::validate() const {
  if (max_instances < 1) throw ConfigError("max_instances must be >= 1");
  if (pe_dim < 2 || pe_dim % 2 != 0)
    throw ConfigError("pe_dim must be even and >= 2");
  if (visual_dim < 1 || word_dim < 1 || object_dim < 1 || sg_embed_dim < 1 ||
      scene_embed_dim < 1)
    throw ConfigError("embedding widths must be >= 1");
  for (int d : gcn_dims)
    if (d < 1) throw ConfigError("gcn layer widths must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw ConfigError("dropout_p must be in [0, 1)");
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.max_instances = 256;
  c.pe_dim = 64;
  c.visual_dim = 2048;
  c.word_dim = 300;
  c.object_dim = 2048;
  c.gcn_dims = {512, 64, 8};
  c.sg_embed_dim = 2048;
  c.scene_embed_dim = 2048;
  c.dropout_p = 0.2;
  return c;
}

std::string model_config_to_json(const ModelConfig& config) {
  nlohmann::ordered_json j;
  j["M"] = config.max_instances;
  j["pe_dim"] = config.pe_dim;
  j["visual_dim"] = config.visual_dim;
  j["word_dim"] = config.word_dim;
  j["object_dim"] = config.object_dim;
  j["gcn_dims"] = config.gcn_dims;
  j["sg_embed_dim"] = config.sg_embed_dim;
  j["scene_embed_dim"] = config.scene_embed_dim;
  j["dropout_p"] = config.dropout_p;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.max_instances = j.at("M");
  c.pe_dim = j.at("pe_dim");
  c.visual_dim = j.at("visual_dim");
  c.word_dim = j.at("word_dim");
  c.object_dim = j.at("object_dim");
  const auto dims = j.at("gcn_dims").get<std::vector<int>>();
  if (dims.size() != 3) throw IoError("gcn_dims must have 3 entries");
  std::copy(dims.begin(), dims.end(), c.gcn_dims.begin());
  c.sg_embed_dim = j.at("sg_embed_dim");
  c.scene_embed_dim = j.at("scene_embed_dim");
  c.dropout_p = j.at("dropout_p");
  c.validate();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;

  // Glorot-style uniform for weights; biases start near zero so no large
  // shared component drags every embedding into the same direction. fan_in
  // is the producing layer's input width (x·W convention).
  auto add = [&p, seed](const std::string& name, Tensor t,
                        std::size_t fan_in) {
    const bool is_bias = t.shape.size() == 1;
    const double bound = (is_bias ? 0.1 : std::sqrt(6.0)) /
                         std::sqrt(static_cast<double>(fan_in));
    Rng rng(hash_values(kModelTag, "init", seed, name));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    p.names.push_back(name);
    p.values.push_back(std::move(t));
  };

  const std::size_t in_dim = config.object_input_dim();
  const std::size_t v = config.object_dim;
  add("object.weight", Tensor::zeros({in_dim, v}), in_dim);
  add("object.bias", Tensor::zeros({v}), in_dim);

  for (int pathway = 0; pathway < 3; ++pathway) {
    std::size_t width = v;
    for (int layer = 0; layer < 3; ++layer) {
      const std::string name = std::string("gcn.") + kPathwayNames[pathway] +
                               ".w" + std::to_string(layer + 1);
      const auto out = static_cast<std::size_t>(config.gcn_dims[layer]);
      add(name, Tensor::zeros({width, out}), width);
      width = out;
    }
  }

  const auto concat = static_cast<std::size_t>(config.pathway_concat_dim());
  const auto sg = static_cast<std::size_t>(config.sg_embed_dim);
  add("graph_fusion.weight", Tensor::zeros({concat, sg}), concat);
  add("graph_fusion.bias", Tensor::zeros({sg}), concat);

  const auto fuse_in =
      static_cast<std::size_t>(config.visual_dim + config.sg_embed_dim);
  const auto scene = static_cast<std::size_t>(config.scene_embed_dim);
  add("scene_fusion.weight", Tensor::zeros({fuse_in, scene}), fuse_in);
  add("scene_fusion.bias", Tensor::zeros({scene}), fuse_in);
  return p;
}

std::size_t ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw UsageError("unknown parameter: " + std::string(name));
}

Tensor& ModelParams::at(std::string_view name) {
  return values[index_of(name)];
}

const Tensor& ModelParams::at(std::string_view name) const {
  return values[index_of(name)];
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values) n += t.size();
  return n;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParams& params) {
  Archive archive;
  archive.meta_json = model_config_to_json(params.config);
  for (std::size_t i = 0; i < params.names.size(); ++i)
    archive.tensors.push_back({params.names[i], params.values[i]});
  save_archive(path, archive);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  Archive archive = load_archive(path);
  ModelParams params;
  params.config = model_config_from_json(archive.meta_json);
  for (NamedTensor& nt : archive.tensors) {
    params.names.push_back(std::move(nt.name));
    params.values.push_back(std::move(nt.tensor));
  }
  return params;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path,
                                    bool strict) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table: " + path.string());
  int dim = -1;
  EmbeddingTable table(0, strict);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string label;
    ss >> label;
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty()) throw IoError("embedding row without values: " + label);
    if (dim < 0) dim = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != dim)
      throw IoError("inconsistent embedding width at label: " + label);
    table.rows_[label] = std::move(row);
  }
  if (dim < 0) throw IoError("empty embedding table: " + path.string());
  table.dim_ = dim;
  return table;
}

bool EmbeddingTable::has(std::string_view label) const {
  return rows_.find(label) != rows_.end();
}

std::vector<double> EmbeddingTable::lookup(std::string_view label) const {
  auto it = rows_.find(label);
  if (it != rows_.end()) return it->second;
  if (strict_)
    throw LookupError("label not in embedding table: " + std::string(label));
  // Deterministic pseudo-vector: unit-norm seeded Gaussian per label.
  std::uint64_t state = hash_values(kModelTag, "word-fallback", label);
  std::vector<double> row(dim_);
  double sq = 0.0;
  for (double& x : row) {
    const double u1 =
        1.0 - static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    const double u2 =
        static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = std::sqrt(-2.0 * std::log(u1)) *
        std::cos(2.0 * std::numbers::pi * u2);
    sq += x * x;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : row) x *= inv;
  return row;
}

std::vector<double> positional_encode(double p, int pe_dim) {
  if (pe_dim < 2 || pe_dim % 2 != 0)
    throw DomainError("pe_dim must be even and >= 2");
  std::vector<double> out(pe_dim);
  for (int i = 0; i < pe_dim / 2; ++i) {
    const double rate =
        std::pow(10000.0, (2.0 * i) / static_cast<double>(pe_dim));
    out[2 * i] = std::sin(p / rate);
    out[2 * i + 1] = std::cos(p / rate);
  }
  return out;
}

std::vector<double> bbox_embed(const BBox2& bbox, int pe_dim) {
  std::vector<double> out;
  out.reserve(4 * pe_dim);
  for (double c : {bbox.u1, bbox.v1, bbox.u2, bbox.v2}) {
    std::vector<double> pe = positional_encode(c, pe_dim);
    out.insert(out.end(), pe.begin(), pe.end());
  }
  return out;
}

std::vector<double> word_embed(std::string_view label,
                               const EmbeddingTable& table) {
  return table.lookup(label);
}

ValueId EmbedContext::param(std::string_view name) const {
  return param_handles[params->index_of(name)];
}

EmbedContext bind_model(Tape& tape, const ModelParams& params,
                        const EmbeddingTable& words, Mode mode,
                        Rng* dropout_rng) {
  if (mode == Mode::kTrain && params.config.dropout_p > 0.0 &&
      dropout_rng == nullptr)
    throw UsageError("train mode with dropout needs an rng");
  if (words.dim() != params.config.word_dim)
    throw ShapeError("embedding table width does not match word_dim");
  EmbedContext ctx;
  ctx.tape = &tape;
  ctx.params = &params;
  ctx.words = &words;
  ctx.mode = mode;
  ctx.dropout_rng = dropout_rng;
  ctx.param_handles.reserve(params.values.size());
  for (const Tensor& t : params.values)
    ctx.param_handles.push_back(tape.leaf(t, /*requires_grad=*/true));
  return ctx;
}

namespace {

// Rows of the detection-feature matrix, one per detection: concat[x_b x_v
// x_w]. Detections are taken in stored (id-sorted) order.
Tensor detection_inputs(const EmbedContext& ctx,
                        const std::vector<Detection>& detections) {
  const ModelConfig& cfg = ctx.params->config;
  const std::size_t in_dim = cfg.object_input_dim();
  Tensor input = Tensor::zeros({detections.size(), in_dim});
  for (std::size_t r = 0; r < detections.size(); ++r) {
    const Detection& det = detections[r];
    if (static_cast<int>(det.feature.size()) != cfg.visual_dim)
      throw ShapeError("detection feature width does not match visual_dim");
    const std::vector<double> xb = bbox_embed(det.bbox, cfg.pe_dim);
    const std::vector<double> xw = word_embed(det.class_label, *ctx.words);
    double* row = input.data.data() + r * in_dim;
    std::copy(xb.begin(), xb.end(), row);
    std::copy(det.feature.begin(), det.feature.end(), row + xb.size());
    std::copy(xw.begin(), xw.end(), row + xb.size() + det.feature.size());
  }
  return input;
}

ValueId object_rows(EmbedContext& ctx, Tensor input) {
  Tape& tape = *ctx.tape;
  ValueId x = tape.constant(std::move(input));
  x = tape.matmul(x, ctx.param("object.weight"));
  x = tape.add_row(x, ctx.param("object.bias"));
  return tape.relu(x);
}

std::vector<std::int32_t> nonzero_rows(const Tensor& a_hat) {
  std::vector<std::int32_t> ids;
  const std::size_t m = a_hat.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a_hat.data.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      if (row[j] != 0.0) {
        ids.push_back(static_cast<std::int32_t>(i));
        break;
      }
    }
  }
  return ids;
}

// Compact a_hat onto its nonzero rows/columns. Zero rows and columns of
// undetected objects contribute nothing, so the compact product scattered
// back equals the full product exactly.
Tensor compact_square(const Tensor& a_hat,
                      const std::vector<std::int32_t>& ids) {
  const std::size_t d = ids.size();
  Tensor out = Tensor::zeros({d, d});
  const std::size_t m = a_hat.rows();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c)
      out.data[r * d + c] =
          a_hat.data[static_cast<std::size_t>(ids[r]) * m + ids[c]];
  return out;
}

ValueId pathway_impl(EmbedContext& ctx, const Tensor& a_hat, ValueId x0,
                     int pathway, bool scatter_back) {
  Tape& tape = *ctx.tape;
  const ModelConfig& cfg = ctx.params->config;
  const std::size_t m = static_cast<std::size_t>(cfg.max_instances);
  if (a_hat.rank() != 2 || a_hat.rows() != m || a_hat.cols() != m)
    throw ShapeError("pathway adjacency must be M x M");
  if (tape.value(x0).rank() != 2 || tape.value(x0).rows() != m)
    throw ShapeError("pathway features must be M x V");
  if (pathway < 0 || pathway > 2) throw UsageError("pathway must be 0..2");

  const std::vector<std::int32_t> ids = nonzero_rows(a_hat);
  const std::size_t out_dim = static_cast<std::size_t>(cfg.gcn_dims[2]);
  if (ids.empty()) return tape.constant(Tensor::zeros({m, out_dim}));

  ValueId x = tape.gather_rows(x0, ids);
  ValueId a = tape.constant(compact_square(a_hat, ids));
  for (int layer = 0; layer < 3; ++layer) {
    const std::string name = std::string("gcn.") + kPathwayNames[pathway] +
                             ".w" + std::to_string(layer + 1);
    x = tape.matmul(a, x);
    x = tape.matmul(x, ctx.param(name));
    x = tape.relu(x);
    if (ctx.mode == Mode::kTrain && cfg.dropout_p > 0.0)
      x = tape.dropout(x, cfg.dropout_p, ctx.mode, *ctx.dropout_rng);
  }
  if (!scatter_back) return x;
  return tape.scatter_rows(x, ids, m);
}

}  // namespace

ValueId object_embed(EmbedContext& ctx, const Detection& det) {
  ValueId rows = object_rows(ctx, detection_inputs(ctx, {det}));
  return ctx.tape->flatten(rows);
}

ValueId gcn_pathway(EmbedContext& ctx, const Tensor& a_hat, ValueId x0,
                    int pathway) {
  return pathway_impl(ctx, a_hat, x0, pathway, /*scatter_back=*/true);
}

ValueId scene_graph_embed(EmbedContext& ctx, const AdjacencyMatrix& adj,
                          ValueId x0) {
  Tape& tape = *ctx.tape;
  const ModelConfig& cfg = ctx.params->config;
  if (adj.max_instances != cfg.max_instances)
    throw ShapeError("adjacency M does not match model config");

  const Tensor* matrices[3] = {&adj.on, &adj.in, &adj.proximity};
  std::vector<ValueId> flat;
  for (int pathway = 0; pathway < 3; ++pathway) {
    const Tensor a_hat = row_normalize(*matrices[pathway], adj.detected);
    flat.push_back(tape.flatten(gcn_pathway(ctx, a_hat, x0, pathway)));
  }
  ValueId z = tape.concat(flat);
  z = tape.reshape(z, {1, static_cast<std::size_t>(cfg.pathway_concat_dim())});
  z = tape.matmul(z, ctx.param("graph_fusion.weight"));
  z = tape.add_row(z, ctx.param("graph_fusion.bias"));
  z = tape.relu(z);
  return tape.flatten(z);
}

ValueId scene_embed(EmbedContext& ctx, const Observation& obs) {
  Tape& tape = *ctx.tape;
  const ModelConfig& cfg = ctx.params->config;
  const std::size_t m = static_cast<std::size_t>(cfg.max_instances);

  // Node features X^(0): one learned row per detection, zeros elsewhere.
  ValueId x0;
  if (obs.detections.empty()) {
    x0 = tape.constant(
        Tensor::zeros({m, static_cast<std::size_t>(cfg.object_dim)}));
  } else {
    std::vector<std::int32_t> ids;
    for (const Detection& det : obs.detections) {
      if (det.object_id < 0 || det.object_id >= cfg.max_instances)
        throw DomainError("detection object id outside [0, M)");
      ids.push_back(det.object_id);
    }
    ValueId rows = object_rows(ctx, detection_inputs(ctx, obs.detections));
    x0 = tape.scatter_rows(rows, ids, m);
  }

  const AdjacencyMatrix adj =
      build_adjacency(obs.scene_graph, cfg.max_instances);
  ValueId sg_vec = scene_graph_embed(ctx, adj, x0);

  // Mean detection feature; zero vector for an empty view.
  Tensor visual = Tensor::zeros({static_cast<std::size_t>(cfg.visual_dim)});
  if (!obs.detections.empty()) {
    for (const Detection& det : obs.detections)
      for (int k = 0; k < cfg.visual_dim; ++k)
        visual.data[k] += det.feature[k];
    for (double& v : visual.data)
      v /= static_cast<double>(obs.detections.size());
  }

  std::array<ValueId, 2> parts = {tape.constant(std::move(visual)), sg_vec};
  ValueId z = tape.concat(parts);
  z = tape.reshape(
      z, {1, static_cast<std::size_t>(cfg.visual_dim + cfg.sg_embed_dim)});
  z = tape.matmul(z, ctx.param("scene_fusion.weight"));
  z = tape.add_row(z, ctx.param("scene_fusion.bias"));
  z = tape.relu(z);
  return tape.flatten(z);
}

double similarity(const Observation& a, const Observation& b,
                  const ModelParams& params, const EmbeddingTable& words) {
  Tape tape;
  EmbedContext ctx = bind_model(tape, params, words, Mode::kEval, nullptr);
  ValueId va = scene_embed(ctx, a);
  ValueId vb = scene_embed(ctx, b);
  ValueId s = tape.cosine(va, vb);
  return std::clamp(tape.value(s).data[0], -1.0, 1.0);
}

}  // namespace seannet
