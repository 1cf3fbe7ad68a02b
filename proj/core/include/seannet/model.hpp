#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seannet/scene_graph.hpp"
#include "seannet/tensor.hpp"
#include "seannet/world.hpp"

namespace seannet {

struct ModelConfig {
  int max_instances = 32;   // M
  int pe_dim = 64;          // per pixel coordinate
  int visual_dim = 64;      // detection feature width
  int word_dim = 32;        // label embedding width
  int object_dim = 96;      // V, width of X^(0) rows
  std::array<int, 3> gcn_dims{64, 32, 8};  // per-pathway layer widths
  int sg_embed_dim = 128;
  int scene_embed_dim = 128;
  double dropout_p = 0.2;

  int bbox_dim() const { return 4 * pe_dim; }
  int object_input_dim() const { return bbox_dim() + visual_dim + word_dim; }
  // Flattened on|in|proximity pathway outputs, pre-fusion.
  int pathway_concat_dim() const { return 3 * max_instances * gcn_dims[2]; }

  void validate() const;
  static ModelConfig paper_scale();

  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// All trainable weights, in a fixed registration order.
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> values;

  // Seeded uniform in ±1/sqrt(fan_in) for every tensor.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  std::size_t index_of(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t scalar_count() const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Label -> vector table with a seeded deterministic fallback for labels the
// table does not carry. Strict tables refuse unknown labels instead.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, bool strict) : dim_(dim), strict_(strict) {}

  // Text file, one row per line: "label v1 v2 ... vD".
  static EmbeddingTable load(const std::filesystem::path& path, bool strict);
  static EmbeddingTable seeded_fallback(int dim) { return {dim, false}; }

  std::vector<double> lookup(std::string_view label) const;
  int dim() const { return dim_; }
  bool has(std::string_view label) const;

 private:
  int dim_;
  bool strict_;
  std::map<std::string, std::vector<double>, std::less<>> rows_;
};

// Sinusoidal position code: even slots sin(p / 10000^(2i/pe_dim)), odd
// slots the matching cos.
std::vector<double> positional_encode(double p, int pe_dim);

// [PE(u1) PE(v1) PE(u2) PE(v2)] in corner order.
std::vector<double> bbox_embed(const BBox2& bbox, int pe_dim);

std::vector<double> word_embed(std::string_view label,
                               const EmbeddingTable& table);

// One forward pass: model parameters bound as tape leaves.
struct EmbedContext {
  Tape* tape = nullptr;
  const ModelParams* params = nullptr;
  const EmbeddingTable* words = nullptr;
  Mode mode = Mode::kEval;
  Rng* dropout_rng = nullptr;
  std::vector<ValueId> param_handles;  // parallel to params->values

  ValueId param(std::string_view name) const;
};

EmbedContext bind_model(Tape& tape, const ModelParams& params,
                        const EmbeddingTable& words, Mode mode,
                        Rng* dropout_rng);

// ReLU(concat[x_b x_v x_w] · W + b), one row per detection.
ValueId object_embed(EmbedContext& ctx, const Detection& det);

// Three propagation layers X ← ReLU(Â X W) with dropout after each ReLU in
// train mode. Undetected rows stay exactly zero. a_hat must be
// row-normalized (see row_normalize).
ValueId gcn_pathway(EmbedContext& ctx, const Tensor& a_hat, ValueId x0,
                    int pathway);  // 0 = on, 1 = in, 2 = proximity

// on/in/proximity pathways, flattened, concatenated and fused. The disjoint
// decomposition never enters.
ValueId scene_graph_embed(EmbedContext& ctx, const AdjacencyMatrix& adj,
                          ValueId x0);

// Full scene embedding: mean detection feature fused with the graph branch.
ValueId scene_embed(EmbedContext& ctx, const Observation& obs);

// Cosine of the two scene embeddings, evaluated without dropout.
double similarity(const Observation& a, const Observation& b,
                  const ModelParams& params, const EmbeddingTable& words);

inline bool localize(double similarity_value, double epsilon) {
  return similarity_value > epsilon;
}

}  // namespace seannet
