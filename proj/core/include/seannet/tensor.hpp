#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "seannet/errors.hpp"
#include "seannet/rng.hpp"

namespace seannet {

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor scalar(double v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

enum class Mode { kTrain, kEval };

struct ValueId {
  std::uint32_t index = 0;
};

// Reverse-mode tape. Nodes are recorded in topological order by
// construction; backward() sweeps them exactly once in reverse, starting
// from a scalar root. Gradients of fan-out nodes accumulate.
//
// A tape owns one forward pass. Independent tapes are independent objects
// and may run on separate threads; parameter gradients are read out per
// tape and reduced by the caller.
class Tape {
 public:
  ValueId leaf(Tensor value, bool requires_grad = false);
  ValueId constant(Tensor value) { return leaf(std::move(value), false); }

  // a[m,k] · b[k,n] -> [m,n]
  ValueId matmul(ValueId a, ValueId b);
  // Elementwise; shapes must match.
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  // mat[m,n] + row[n] broadcast over rows (bias addition).
  ValueId add_row(ValueId mat, ValueId row);
  ValueId add_scalar(ValueId a, double c);
  ValueId relu(ValueId a);
  // Rank-1 inputs, concatenated in order.
  ValueId concat(std::span<const ValueId> parts);
  ValueId flatten(ValueId a);
  ValueId reshape(ValueId a, std::vector<std::size_t> shape);
  // Inverted dropout: train mode zeroes entries with probability p and
  // scales survivors by 1/(1-p); eval mode is the identity.
  ValueId dropout(ValueId a, double p, Mode mode, Rng& rng);
  // Select rows of mat[m,n] by index -> [|ids|, n].
  ValueId gather_rows(ValueId mat, std::vector<std::int32_t> ids);
  // Place rows of mat[d,n] at the given indices of an [m,n] zero matrix.
  ValueId scatter_rows(ValueId mat, std::vector<std::int32_t> ids,
                       std::size_t m);
  // Rank-1 a, b -> scalar a·b / (|a||b|). Zero-norm input is a DomainError.
  ValueId cosine(ValueId a, ValueId b);
  ValueId sum(ValueId a);

  // Root must be scalar; every recorded node is visited once.
  void backward(ValueId root);
  void zero_grad();

  const Tensor& value(ValueId id) const;
  // Gradient w.r.t. a node's value; zeros when the node was never reached.
  std::span<const double> grad(ValueId id) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatMul,
    kAdd,
    kSub,
    kAddRow,
    kAddScalar,
    kRelu,
    kConcat,
    kReshape,
    kDropout,
    kGatherRows,
    kScatterRows,
    kCosine,
    kSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    ValueId a{};
    ValueId b{};
    std::vector<ValueId> inputs;      // concat
    std::vector<std::int32_t> ids;    // gather/scatter
    std::vector<double> aux;          // dropout mask, cosine cache
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  ValueId push(Node n);
  Node& node(ValueId id) { return nodes_[id.index]; }
  const Node& node(ValueId id) const { return nodes_[id.index]; }
  void backward_node(Node& n);

  std::deque<Node> nodes_;  // stable addresses: value()/grad() stay valid
};

namespace detail {
// c[m,n] += a[m,k] · b[k,n]
void matmul_accumulate(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);
// c[k,n] += aᵀ[k,m] · b[m,n]   (a given as [m,k])
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);
// c[m,k] += a[m,n] · bᵀ[n,k]   (b given as [k,n])
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n);
}  // namespace detail

// Forward-only cosine of two equal-length vectors.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace seannet
