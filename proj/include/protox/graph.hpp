#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// Nodes are appended in evaluation order, so the node vector is already a
// topological order and backward() is a single reverse sweep. Parameters are
// bound as leaves that remember their source tensor; backward() adds the
// leaf gradient into that tensor's grad buffer, so repeated backward calls
// accumulate until the caller zeroes the buffers.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "protox/tensor.hpp"

namespace protox {

template <typename T>
class Graph {
 public:
  struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
  };

  /// With record_gradients=false no backward closures are kept; the graph
  /// is a plain forward evaluator and backward() is a usage error.
  explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Tensor<T> value);
  /// Leaf whose gradient is accumulated into `source.grad()` by backward().
  Var parameter(Tensor<T>& source);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  const Shape& shape(Var v) const { return nodes_[v.id].value.shape(); }
  /// Gradient of the last backward() w.r.t. this node; empty before that.
  std::span<const T> grad(Var v) const { return nodes_[v.id].grad; }

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Adds a length-cols bias to every row.
  Var add_row(Var a, Var bias);
  Var scale(Var a, T s);
  Var add_scalar(Var a, T s);
  /// Elementwise quotient of two same-shape tensors.
  Var div(Var a, Var b);

  // Nonlinearities.
  Var softmax_lastdim(Var a);
  Var log_softmax_lastdim(Var a);
  Var layernorm(Var x, Var gain, Var bias, T eps);
  Var gelu(Var a);
  Var exp(Var a);
  Var log(Var a);
  /// Elementwise f with caller-supplied derivative df.
  Var map(Var a, std::function<T(T)> f, std::function<T(T)> df);

  // Reductions and distances.
  /// Mean over rows: [r x d] -> [d].
  Var mean_rows(Var a);
  Var sum(Var a);
  /// Scalar sum_i w_i * a_i.
  Var weighted_sum(Var a, std::vector<T> weights);
  /// Scalar sum_i (a_i - b_i)^2.
  Var squared_l2(Var a, Var b);
  /// [m x d], [n x d] -> [m x n] squared Euclidean distances.
  Var pairwise_sq_dist(Var a, Var b);

  // Structure.
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);

  /// Reverse sweep from a scalar loss. Node gradients are recomputed from
  /// scratch on every call; parameter gradients accumulate.
  void backward(Var loss);

 private:
  using Backward = std::function<void(Graph&, std::uint32_t)>;

  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    Backward backward;
    Tensor<T>* source = nullptr;
  };

  Var push(Tensor<T> value, Backward backward);
  std::vector<T>& grad_buf(std::uint32_t id) { return nodes_[id].grad; }
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool recording_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace protox
