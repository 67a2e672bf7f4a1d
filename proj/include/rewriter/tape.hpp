#pragma once

#include <functional>
#include <vector>

#include "rewriter/array.hpp"

namespace rewriter {

// Reverse-mode autodiff over DenseArray values. Nodes are appended in
// construction order, which is already a topological order, so the backward
// pass is a single reverse sweep visiting each node exactly once.
//
// A Tape instance is single-threaded. Independent tapes (one per batch
// example) may run on separate threads against shared read-only parameters.

class Tape;
using NodeRef = int;

struct TapeNode {
  std::size_t rows = 0, cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily by backward()
  int param_id = -1;         // >= 0 marks a parameter leaf
  std::function<void(Tape&)> back;  // empty for leaves
};

class Tape {
 public:
  // Leaves.
  NodeRef constant(const DenseArray& a);
  NodeRef constant_row(std::vector<double> values);
  NodeRef scalar(double x);
  NodeRef param(const DenseArray& a, int param_id);

  // Primitives. Shapes are validated; mismatches raise DimensionError.
  NodeRef matmul(NodeRef a, NodeRef b);
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);       // elementwise
  NodeRef tanh(NodeRef a);
  NodeRef sigmoid(NodeRef a);
  NodeRef log(NodeRef a);                  // elementwise natural log
  NodeRef softmax(NodeRef a);              // over the last axis, per row
  NodeRef concat(const std::vector<NodeRef>& xs);  // row vectors, side by side
  NodeRef concat_rows(const std::vector<NodeRef>& xs);  // stack 1 x c rows into a matrix
  NodeRef slice_cols(NodeRef a, std::size_t c0, std::size_t c1);  // row vector slice
  NodeRef reshape(NodeRef a, std::size_t rows, std::size_t cols);
  NodeRef lookup(NodeRef table, std::size_t row);  // embedding row as 1 x dim
  NodeRef pick(NodeRef a, std::size_t index);      // scalar element of a row vector
  NodeRef scale(NodeRef s, NodeRef a);             // scalar node times array node
  NodeRef sum(NodeRef a);                          // reduce to scalar
  // out[target_ids[l]] += a[l]; the copy-distribution aggregation over
  // duplicate source identities.
  NodeRef scatter_sum(NodeRef a, std::vector<int> target_ids, std::size_t out_size);
  NodeRef add_broadcast_row(NodeRef mat, NodeRef row);

  // Populates grad on every node reachable from `loss`, which must be 1x1.
  // Parameter leaves that do not feed the loss keep an all-zero gradient.
  void backward(NodeRef loss);

  const TapeNode& node(NodeRef r) const { return nodes_[r]; }
  TapeNode& node(NodeRef r) { return nodes_[r]; }
  const std::vector<double>& value(NodeRef r) const { return nodes_[r].val; }
  double scalar_value(NodeRef r) const { return nodes_[r].val[0]; }
  const std::vector<double>& gradient(NodeRef r) const { return nodes_[r].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  NodeRef push(std::size_t rows, std::size_t cols);
  void want_grad(NodeRef r);
  static void check_same_shape(const char* op, const TapeNode& a, const TapeNode& b);

  std::vector<TapeNode> nodes_;
};

}  // namespace rewriter
