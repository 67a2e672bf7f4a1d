#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rewriter/array.hpp"
#include "rewriter/rng.hpp"

namespace rewriter {

// Ordered collection of named parameter arrays. The order is the creation
// order and is part of the checkpoint layout.
class ParamStore {
 public:
  int add(const std::string& name, std::size_t rows, std::size_t cols);
  int index_of(const std::string& name) const;  // -1 if absent

  DenseArray& operator[](int id) { return arrays_[id]; }
  const DenseArray& operator[](int id) const { return arrays_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  int count() const { return static_cast<int>(arrays_.size()); }
  std::size_t total_values() const;

  // Uniform init in [lo, hi] for every array, deterministic per seed.
  void init_uniform(Rng& rng, double lo = -0.1, double hi = 0.1);

 private:
  std::vector<std::string> names_;
  std::vector<DenseArray> arrays_;
};

// Per-example (or per-batch) gradients, aligned with a ParamStore by index.
using Gradients = std::vector<std::vector<double>>;

Gradients zero_gradients(const ParamStore& params);
void accumulate(Gradients& into, const Gradients& from);
double global_norm(const Gradients& g);
void clip_by_global_norm(Gradients& g, double max_norm);

struct AdagradState {
  double learning_rate = 0.15;
  double epsilon = 1e-10;
  std::vector<DenseArray> accum;  // squared-gradient accumulators

  static AdagradState create(const ParamStore& params, double lr = 0.15, double eps = 1e-10);
};

// accum += g^2 ; param -= lr * g / sqrt(accum + eps), elementwise.
// A non-finite gradient aborts the step naming the offending parameter.
void adagrad_step(ParamStore& params, const Gradients& grads, AdagradState& state);

// Versioned binary checkpoint: a metadata JSON blob (model config, vocab),
// every parameter by name/shape/raw values, and optionally the optimizer
// accumulators. load(save(p)) reproduces values bit for bit.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json,
                     const AdagradState* optimizer = nullptr);

struct Checkpoint {
  ParamStore params;
  std::string metadata_json;
  std::optional<AdagradState> optimizer;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace rewriter
