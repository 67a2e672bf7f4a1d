#include "rewriter/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace rewriter {

int ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (index_of(name) >= 0) throw UsageError("duplicate parameter name: " + name);
  names_.push_back(name);
  arrays_.emplace_back(rows, cols);
  return static_cast<int>(arrays_.size() - 1);
}

int ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += a.size();
  return n;
}

void ParamStore::init_uniform(Rng& rng, double lo, double hi) {
  for (auto& a : arrays_)
    for (auto& x : a.v) x = rng.uniform(lo, hi);
}

Gradients zero_gradients(const ParamStore& params) {
  Gradients g(params.count());
  for (int i = 0; i < params.count(); ++i) g[i].assign(params[i].size(), 0.0);
  return g;
}

void accumulate(Gradients& into, const Gradients& from) {
  for (std::size_t i = 0; i < into.size(); ++i)
    for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j] += from[i][j];
}

double global_norm(const Gradients& g) {
  double ss = 0.0;
  for (const auto& v : g)
    for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

void clip_by_global_norm(Gradients& g, double max_norm) {
  double norm = global_norm(g);
  if (norm <= max_norm || norm == 0.0) return;
  double s = max_norm / norm;
  for (auto& v : g)
    for (double& x : v) x *= s;
}

AdagradState AdagradState::create(const ParamStore& params, double lr, double eps) {
  AdagradState st;
  st.learning_rate = lr;
  st.epsilon = eps;
  st.accum.reserve(params.count());
  for (int i = 0; i < params.count(); ++i)
    st.accum.emplace_back(params[i].rows, params[i].cols);
  return st;
}

void adagrad_step(ParamStore& params, const Gradients& grads, AdagradState& state) {
  if (static_cast<int>(grads.size()) != params.count() ||
      static_cast<int>(state.accum.size()) != params.count())
    throw DimensionError("adagrad_step", std::to_string(params.count()) + " params",
                         std::to_string(grads.size()) + " grads");
  for (int p = 0; p < params.count(); ++p) {
    if (grads[p].size() != params[p].size())
      throw DimensionError("adagrad_step", params[p].shape_str(),
                           std::to_string(grads[p].size()) + " grad values for " + params.name(p));
    for (double gx : grads[p])
      if (!std::isfinite(gx))
        throw TrainingError("non-finite gradient for parameter " + params.name(p));
  }
  for (int p = 0; p < params.count(); ++p) {
    auto& w = params[p].v;
    auto& acc = state.accum[p].v;
    const auto& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc[i] += g[i] * g[i];
      w[i] -= state.learning_rate * g[i] / std::sqrt(acc[i] + state.epsilon);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'R', 'W', 'R', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw DataError("checkpoint truncated");
  return x;
}

void write_array(std::ostream& os, const DenseArray& a) {
  write_pod<std::uint64_t>(os, a.rows);
  write_pod<std::uint64_t>(os, a.cols);
  os.write(reinterpret_cast<const char*>(a.v.data()),
           static_cast<std::streamsize>(a.v.size() * sizeof(double)));
}

DenseArray read_array(std::istream& is) {
  auto rows = read_pod<std::uint64_t>(is);
  auto cols = read_pod<std::uint64_t>(is);
  DenseArray a(rows, cols);
  is.read(reinterpret_cast<char*>(a.v.data()),
          static_cast<std::streamsize>(a.v.size() * sizeof(double)));
  if (!is) throw DataError("checkpoint truncated");
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json, const AdagradState* optimizer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod<std::uint64_t>(os, metadata_json.size());
  os.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.count()));
  for (int p = 0; p < params.count(); ++p) {
    const std::string& name = params.name(p);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_array(os, params[p]);
  }
  write_pod<std::uint8_t>(os, optimizer ? 1 : 0);
  if (optimizer) {
    write_pod(os, optimizer->learning_rate);
    write_pod(os, optimizer->epsilon);
    for (const auto& acc : optimizer->accum) write_array(os, acc);
  }
  if (!os) throw DataError("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path);
  auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  auto meta_len = read_pod<std::uint64_t>(is);
  ck.metadata_json.resize(meta_len);
  is.read(ck.metadata_json.data(), static_cast<std::streamsize>(meta_len));
  auto n = read_pod<std::uint32_t>(is);
  for (std::uint32_t p = 0; p < n; ++p) {
    auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    DenseArray a = read_array(is);
    int id = ck.params.add(name, a.rows, a.cols);
    ck.params[id] = std::move(a);
  }
  if (read_pod<std::uint8_t>(is)) {
    AdagradState st;
    st.learning_rate = read_pod<double>(is);
    st.epsilon = read_pod<double>(is);
    for (std::uint32_t p = 0; p < n; ++p) st.accum.push_back(read_array(is));
    ck.optimizer = std::move(st);
  }
  return ck;
}

}  // namespace rewriter
