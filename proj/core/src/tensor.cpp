#include "seannet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace seannet {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_size(shape) != data.size())
    throw ShapeError("tensor data size does not match shape " +
                     shape_str(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::vector(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return data[i * cols() + j];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace detail {

void matmul_accumulate(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace detail

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw DomainError("cosine of a zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ValueId Tape::push(Node n) {
  n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
    throw ShapeError("matmul shape mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = Tensor::zeros({ta.rows(), tb.cols()});
  detail::matmul_accumulate(ta.data.data(), tb.data.data(), n.value.data.data(),
                            ta.rows(), ta.cols(), tb.cols());
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (!ta.same_shape(tb)) throw ShapeError("add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = ta;
  for (std::size_t i = 0; i < tb.size(); ++i) n.value.data[i] += tb.data[i];
  return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (!ta.same_shape(tb)) throw ShapeError("sub shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = ta;
  for (std::size_t i = 0; i < tb.size(); ++i) n.value.data[i] -= tb.data[i];
  return push(std::move(n));
}

ValueId Tape::add_row(ValueId mat, ValueId row) {
  const Tensor& tm = node(mat).value;
  const Tensor& tr = node(row).value;
  if (tm.rank() != 2 || tr.rank() != 1 || tr.size() != tm.cols())
    throw ShapeError("add_row shape mismatch");
  Node n;
  n.op = Op::kAddRow;
  n.a = mat;
  n.b = row;
  n.requires_grad = node(mat).requires_grad || node(row).requires_grad;
  n.value = tm;
  for (std::size_t i = 0; i < tm.rows(); ++i)
    for (std::size_t j = 0; j < tm.cols(); ++j)
      n.value.data[i * tm.cols() + j] += tr.data[j];
  return push(std::move(n));
}

ValueId Tape::add_scalar(ValueId a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

ValueId Tape::relu(ValueId a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

ValueId Tape::concat(std::span<const ValueId> parts) {
  if (parts.empty()) throw UsageError("concat of zero parts");
  std::size_t total = 0;
  for (ValueId p : parts) {
    if (node(p).value.rank() != 1)
      throw ShapeError("concat expects rank-1 parts");
    total += node(p).value.size();
  }
  Node n;
  n.op = Op::kConcat;
  n.inputs.assign(parts.begin(), parts.end());
  n.value = Tensor::zeros({total});
  std::size_t off = 0;
  for (ValueId p : parts) {
    const Tensor& t = node(p).value;
    std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + off);
    off += t.size();
    n.requires_grad = n.requires_grad || node(p).requires_grad;
  }
  return push(std::move(n));
}

ValueId Tape::flatten(ValueId a) {
  return reshape(a, {node(a).value.size()});
}

ValueId Tape::reshape(ValueId a, std::vector<std::size_t> shape) {
  if (shape_size(shape) != node(a).value.size())
    throw ShapeError("reshape size mismatch");
  Node n;
  n.op = Op::kReshape;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor(std::move(shape), node(a).value.data);
  return push(std::move(n));
}

ValueId Tape::dropout(ValueId a, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout p must be in [0, 1)");
  Node n;
  n.op = Op::kDropout;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  if (mode == Mode::kTrain && p > 0.0) {
    const double keep_scale = 1.0 / (1.0 - p);
    n.aux.resize(n.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      const double m = rng.uniform() < p ? 0.0 : keep_scale;
      n.aux[i] = m;
      n.value.data[i] *= m;
    }
  }
  return push(std::move(n));
}

ValueId Tape::gather_rows(ValueId mat, std::vector<std::int32_t> ids) {
  const Tensor& tm = node(mat).value;
  if (tm.rank() != 2) throw ShapeError("gather_rows expects a matrix");
  for (std::int32_t id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= tm.rows())
      throw DomainError("gather_rows index out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.a = mat;
  n.requires_grad = node(mat).requires_grad;
  n.value = Tensor::zeros({ids.size(), tm.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tm.data.begin() + ids[r] * tm.cols(), tm.cols(),
                n.value.data.begin() + r * tm.cols());
  n.ids = std::move(ids);
  return push(std::move(n));
}

ValueId Tape::scatter_rows(ValueId mat, std::vector<std::int32_t> ids,
                           std::size_t m) {
  const Tensor& tm = node(mat).value;
  if (tm.rank() != 2 || tm.rows() != ids.size())
    throw ShapeError("scatter_rows expects one id per row");
  for (std::int32_t id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= m)
      throw DomainError("scatter_rows index out of range");
  Node n;
  n.op = Op::kScatterRows;
  n.a = mat;
  n.requires_grad = node(mat).requires_grad;
  n.value = Tensor::zeros({m, tm.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tm.data.begin() + r * tm.cols(), tm.cols(),
                n.value.data.begin() + ids[r] * tm.cols());
  n.ids = std::move(ids);
  return push(std::move(n));
}

ValueId Tape::cosine(ValueId a, ValueId b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() != 1 || tb.rank() != 1 || ta.size() != tb.size())
    throw ShapeError("cosine expects two equal-length vectors");
  double dot = 0.0, qa = 0.0, qb = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    dot += ta.data[i] * tb.data[i];
    qa += ta.data[i] * ta.data[i];
    qb += tb.data[i] * tb.data[i];
  }
  if (qa == 0.0 || qb == 0.0)
    throw DomainError("cosine of a zero-norm vector");
  const double na = std::sqrt(qa), nb = std::sqrt(qb);
  Node n;
  n.op = Op::kCosine;
  n.a = a;
  n.b = b;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = Tensor::scalar(dot / (na * nb));
  n.aux = {dot, na, nb};
  return push(std::move(n));
}

ValueId Tape::sum(ValueId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  double acc = 0.0;
  for (double v : node(a).value.data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

void Tape::backward(ValueId root) {
  Node& r = node(root);
  if (r.value.size() != 1)
    throw UsageError("backward root must be a scalar");
  r.grad[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    backward_node(n);
  }
}

void Tape::backward_node(Node& n) {
  const std::vector<double>& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      Node& na = node(n.a);
      Node& nb = node(n.b);
      const std::size_t m = na.value.rows(), k = na.value.cols(),
                        c = nb.value.cols();
      if (na.requires_grad)
        detail::matmul_a_bt(g.data(), nb.value.data.data(), na.grad.data(), m,
                            k, c);
      if (nb.requires_grad)
        detail::matmul_at_b(na.value.data.data(), g.data(), nb.grad.data(), m,
                            k, c);
      break;
    }
    case Op::kAdd: {
      Node& na = node(n.a);
      Node& nb = node(n.b);
      if (na.requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
      if (nb.requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) nb.grad[i] += g[i];
      break;
    }
    case Op::kSub: {
      Node& na = node(n.a);
      Node& nb = node(n.b);
      if (na.requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
      if (nb.requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) nb.grad[i] -= g[i];
      break;
    }
    case Op::kAddRow: {
      Node& na = node(n.a);
      Node& nb = node(n.b);
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      if (na.requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
      if (nb.requires_grad)
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            nb.grad[j] += g[i * cols + j];
      break;
    }
    case Op::kAddScalar:
    case Op::kReshape: {
      Node& na = node(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
      break;
    }
    case Op::kRelu: {
      Node& na = node(n.a);
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < g.size(); ++i)
        if (na.value.data[i] > 0.0) na.grad[i] += g[i];
      break;
    }
    case Op::kConcat: {
      std::size_t off = 0;
      for (ValueId p : n.inputs) {
        Node& np = node(p);
        if (np.requires_grad)
          for (std::size_t i = 0; i < np.value.size(); ++i)
            np.grad[i] += g[off + i];
        off += np.value.size();
      }
      break;
    }
    case Op::kDropout: {
      Node& na = node(n.a);
      if (n.aux.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i)
          na.grad[i] += g[i] * n.aux[i];
      }
      break;
    }
    case Op::kGatherRows: {
      Node& na = node(n.a);
      const std::size_t cols = n.value.cols();
      for (std::size_t r = 0; r < n.ids.size(); ++r)
        for (std::size_t j = 0; j < cols; ++j)
          na.grad[n.ids[r] * cols + j] += g[r * cols + j];
      break;
    }
    case Op::kScatterRows: {
      Node& na = node(n.a);
      const std::size_t cols = n.value.cols();
      for (std::size_t r = 0; r < n.ids.size(); ++r)
        for (std::size_t j = 0; j < cols; ++j)
          na.grad[r * cols + j] += g[n.ids[r] * cols + j];
      break;
    }
    case Op::kCosine: {
      Node& na = node(n.a);
      Node& nb = node(n.b);
      const double dot = n.aux[0], norm_a = n.aux[1], norm_b = n.aux[2];
      const double gs = g[0];
      const double inv = 1.0 / (norm_a * norm_b);
      const double ca = dot / (norm_a * norm_a * norm_a * norm_b);
      const double cb = dot / (norm_a * norm_b * norm_b * norm_b);
      if (na.requires_grad)
        for (std::size_t i = 0; i < na.value.size(); ++i)
          na.grad[i] += gs * (nb.value.data[i] * inv - na.value.data[i] * ca);
      if (nb.requires_grad)
        for (std::size_t i = 0; i < nb.value.size(); ++i)
          nb.grad[i] += gs * (na.value.data[i] * inv - nb.value.data[i] * cb);
      break;
    }
    case Op::kSum: {
      Node& na = node(n.a);
      for (std::size_t i = 0; i < na.value.size(); ++i) na.grad[i] += g[0];
      break;
    }
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

std::span<const double> Tape::grad(ValueId id) const {
  return node(id).grad;
}

}  // namespace seannet
