#include "rewriter/tape.hpp"

#include <cmath>

#include "rewriter/kernels.hpp"

namespace rewriter {

NodeRef Tape::push(std::size_t rows, std::size_t cols) {
  nodes_.emplace_back();
  TapeNode& n = nodes_.back();
  n.rows = rows;
  n.cols = cols;
  n.val.assign(rows * cols, 0.0);
  return static_cast<NodeRef>(nodes_.size() - 1);
}

void Tape::check_same_shape(const char* op, const TapeNode& a, const TapeNode& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DimensionError(op,
                         std::to_string(a.rows) + "x" + std::to_string(a.cols),
                         std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

NodeRef Tape::constant(const DenseArray& a) {
  NodeRef r = push(a.rows, a.cols);
  nodes_[r].val = a.v;
  return r;
}

NodeRef Tape::constant_row(std::vector<double> values) {
  std::size_t n = values.size();
  NodeRef r = push(1, n);
  nodes_[r].val = std::move(values);
  return r;
}

NodeRef Tape::scalar(double x) {
  NodeRef r = push(1, 1);
  nodes_[r].val[0] = x;
  return r;
}

NodeRef Tape::param(const DenseArray& a, int param_id) {
  NodeRef r = constant(a);
  nodes_[r].param_id = param_id;
  return r;
}

NodeRef Tape::matmul(NodeRef a, NodeRef b) {
  const TapeNode& na = nodes_[a];
  const TapeNode& nb = nodes_[b];
  if (na.cols != nb.rows)
    throw DimensionError("matmul",
                         std::to_string(na.rows) + "x" + std::to_string(na.cols),
                         std::to_string(nb.rows) + "x" + std::to_string(nb.cols));
  std::size_t m = na.rows, k = na.cols, n = nb.cols;
  NodeRef r = push(m, n);
  kernels::matmul(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[r].val.data(), m, k, n);
  nodes_[r].back = [a, b, r, m, k, n](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& av = t.nodes_[a].val;
    const auto& bv = t.nodes_[b].val;
    auto& ga = t.nodes_[a].grad;
    auto& gb = t.nodes_[b].grad;
    // dA += dC * B^T ; dB += A^T * dC
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t x = 0; x < n; ++x) s += g[i * n + x] * bv[j * n + x];
        ga[i * k + j] += s;
      }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t x = 0; x < m; ++x) s += av[x * k + i] * g[x * n + j];
        gb[i * n + j] += s;
      }
  };
  return r;
}

NodeRef Tape::add(NodeRef a, NodeRef b) {
  check_same_shape("add", nodes_[a], nodes_[b]);
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  kernels::add(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[r].val.data(), nodes_[r].val.size());
  nodes_[r].back = [a, b, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& ga = t.nodes_[a].grad;
    auto& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return r;
}

NodeRef Tape::sub(NodeRef a, NodeRef b) {
  check_same_shape("sub", nodes_[a], nodes_[b]);
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  kernels::sub(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[r].val.data(), nodes_[r].val.size());
  nodes_[r].back = [a, b, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& ga = t.nodes_[a].grad;
    auto& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return r;
}

NodeRef Tape::mul(NodeRef a, NodeRef b) {
  check_same_shape("mul", nodes_[a], nodes_[b]);
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  kernels::mul(nodes_[a].val.data(), nodes_[b].val.data(), nodes_[r].val.data(), nodes_[r].val.size());
  nodes_[r].back = [a, b, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& av = t.nodes_[a].val;
    const auto& bv = t.nodes_[b].val;
    auto& ga = t.nodes_[a].grad;
    auto& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  };
  return r;
}

NodeRef Tape::tanh(NodeRef a) {
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  kernels::tanh(nodes_[a].val.data(), nodes_[r].val.data(), nodes_[r].val.size());
  nodes_[r].back = [a, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& y = t.nodes_[r].val;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return r;
}

NodeRef Tape::sigmoid(NodeRef a) {
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  kernels::sigmoid(nodes_[a].val.data(), nodes_[r].val.data(), nodes_[r].val.size());
  nodes_[r].back = [a, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& y = t.nodes_[r].val;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return r;
}

NodeRef Tape::log(NodeRef a) {
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  for (std::size_t i = 0; i < nodes_[a].val.size(); ++i)
    nodes_[r].val[i] = std::log(nodes_[a].val[i]);
  nodes_[r].back = [a, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& av = t.nodes_[a].val;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
  };
  return r;
}

NodeRef Tape::softmax(NodeRef a) {
  std::size_t rows = nodes_[a].rows, cols = nodes_[a].cols;
  NodeRef r = push(rows, cols);
  kernels::softmax_rows(nodes_[a].val.data(), nodes_[r].val.data(), rows, cols);
  nodes_[r].back = [a, r, rows, cols](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& y = t.nodes_[r].val;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        ga[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
    }
  };
  return r;
}

NodeRef Tape::concat(const std::vector<NodeRef>& xs) {
  std::size_t total = 0;
  for (NodeRef x : xs) {
    if (nodes_[x].rows != 1)
      throw DimensionError("concat", nodes_[x].rows == 0 ? "empty" : "matrix", "row vector expected");
    total += nodes_[x].cols;
  }
  NodeRef r = push(1, total);
  std::size_t off = 0;
  for (NodeRef x : xs) {
    for (std::size_t i = 0; i < nodes_[x].cols; ++i) nodes_[r].val[off + i] = nodes_[x].val[i];
    off += nodes_[x].cols;
  }
  nodes_[r].back = [xs, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    std::size_t off = 0;
    for (NodeRef x : xs) {
      auto& gx = t.nodes_[x].grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[off + i];
      off += gx.size();
    }
  };
  return r;
}

NodeRef Tape::concat_rows(const std::vector<NodeRef>& xs) {
  if (xs.empty()) throw DimensionError("concat_rows", "0 rows", "at least 1");
  std::size_t cols = nodes_[xs[0]].cols;
  for (NodeRef x : xs)
    check_same_shape("concat_rows", nodes_[xs[0]], nodes_[x]);
  NodeRef r = push(xs.size(), cols);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) nodes_[r].val[i * cols + j] = nodes_[xs[i]].val[j];
  nodes_[r].back = [xs, r, cols](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto& gx = t.nodes_[xs[i]].grad;
      for (std::size_t j = 0; j < cols; ++j) gx[j] += g[i * cols + j];
    }
  };
  return r;
}

NodeRef Tape::slice_cols(NodeRef a, std::size_t c0, std::size_t c1) {
  if (nodes_[a].rows != 1 || c1 > nodes_[a].cols || c0 >= c1)
    throw DimensionError("slice_cols",
                         std::to_string(nodes_[a].rows) + "x" + std::to_string(nodes_[a].cols),
                         "[" + std::to_string(c0) + "," + std::to_string(c1) + ")");
  NodeRef r = push(1, c1 - c0);
  for (std::size_t i = c0; i < c1; ++i) nodes_[r].val[i - c0] = nodes_[a].val[i];
  nodes_[r].back = [a, r, c0](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[c0 + i] += g[i];
  };
  return r;
}

NodeRef Tape::reshape(NodeRef a, std::size_t rows, std::size_t cols) {
  if (rows * cols != nodes_[a].val.size())
    throw DimensionError("reshape",
                         std::to_string(nodes_[a].rows) + "x" + std::to_string(nodes_[a].cols),
                         std::to_string(rows) + "x" + std::to_string(cols));
  NodeRef r = push(rows, cols);
  nodes_[r].val = nodes_[a].val;
  nodes_[r].back = [a, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return r;
}

NodeRef Tape::lookup(NodeRef table, std::size_t row) {
  if (row >= nodes_[table].rows)
    throw DimensionError("lookup", nodes_[table].rows == 0 ? "empty" : std::to_string(nodes_[table].rows) + " rows",
                         "row " + std::to_string(row));
  std::size_t cols = nodes_[table].cols;
  NodeRef r = push(1, cols);
  for (std::size_t i = 0; i < cols; ++i) nodes_[r].val[i] = nodes_[table].val[row * cols + i];
  nodes_[r].back = [table, r, row, cols](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& gt = t.nodes_[table].grad;
    for (std::size_t i = 0; i < cols; ++i) gt[row * cols + i] += g[i];
  };
  return r;
}

NodeRef Tape::pick(NodeRef a, std::size_t index) {
  if (index >= nodes_[a].val.size())
    throw DimensionError("pick", std::to_string(nodes_[a].val.size()) + " values",
                         "index " + std::to_string(index));
  NodeRef r = push(1, 1);
  nodes_[r].val[0] = nodes_[a].val[index];
  nodes_[r].back = [a, r, index](Tape& t) {
    t.nodes_[a].grad[index] += t.nodes_[r].grad[0];
  };
  return r;
}

NodeRef Tape::scale(NodeRef s, NodeRef a) {
  if (nodes_[s].val.size() != 1)
    throw DimensionError("scale", std::to_string(nodes_[s].val.size()) + " values", "scalar expected");
  NodeRef r = push(nodes_[a].rows, nodes_[a].cols);
  double sv = nodes_[s].val[0];
  for (std::size_t i = 0; i < nodes_[a].val.size(); ++i) nodes_[r].val[i] = sv * nodes_[a].val[i];
  nodes_[r].back = [s, a, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    const auto& av = t.nodes_[a].val;
    double sv = t.nodes_[s].val[0];
    auto& ga = t.nodes_[a].grad;
    double gs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += sv * g[i];
      gs += g[i] * av[i];
    }
    t.nodes_[s].grad[0] += gs;
  };
  return r;
}

NodeRef Tape::sum(NodeRef a) {
  NodeRef r = push(1, 1);
  double s = 0.0;
  for (double x : nodes_[a].val) s += x;
  nodes_[r].val[0] = s;
  nodes_[r].back = [a, r](Tape& t) {
    double g = t.nodes_[r].grad[0];
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return r;
}

NodeRef Tape::scatter_sum(NodeRef a, std::vector<int> target_ids, std::size_t out_size) {
  if (target_ids.size() != nodes_[a].val.size())
    throw DimensionError("scatter_sum", std::to_string(nodes_[a].val.size()) + " values",
                         std::to_string(target_ids.size()) + " targets");
  NodeRef r = push(1, out_size);
  for (std::size_t i = 0; i < target_ids.size(); ++i)
    nodes_[r].val[static_cast<std::size_t>(target_ids[i])] += nodes_[a].val[i];
  nodes_[r].back = [a, r, ids = std::move(target_ids)](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) ga[i] += g[static_cast<std::size_t>(ids[i])];
  };
  return r;
}

NodeRef Tape::add_broadcast_row(NodeRef mat, NodeRef row) {
  const TapeNode& m = nodes_[mat];
  const TapeNode& v = nodes_[row];
  if (v.rows != 1 || v.cols != m.cols)
    throw DimensionError("add_broadcast_row",
                         std::to_string(m.rows) + "x" + std::to_string(m.cols),
                         std::to_string(v.rows) + "x" + std::to_string(v.cols));
  NodeRef r = push(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      nodes_[r].val[i * m.cols + j] = nodes_[mat].val[i * m.cols + j] + nodes_[row].val[j];
  nodes_[r].back = [mat, row, r](Tape& t) {
    const auto& g = t.nodes_[r].grad;
    auto& gm = t.nodes_[mat].grad;
    auto& gv = t.nodes_[row].grad;
    std::size_t rows = t.nodes_[mat].rows, cols = t.nodes_[mat].cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        gm[i * cols + j] += g[i * cols + j];
        gv[j] += g[i * cols + j];
      }
  };
  return r;
}

void Tape::backward(NodeRef loss) {
  if (nodes_[loss].val.size() != 1)
    throw UsageError("backward requires a scalar loss node, got " +
                     std::to_string(nodes_[loss].rows) + "x" + std::to_string(nodes_[loss].cols));
  for (auto& n : nodes_) n.grad.assign(n.val.size(), 0.0);
  nodes_[loss].grad[0] = 1.0;
  for (NodeRef r = loss; r >= 0; --r)
    if (nodes_[r].back) nodes_[r].back(*this);
}

}  // namespace rewriter
