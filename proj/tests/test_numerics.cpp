#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rewriter/kernels.hpp"
#include "rewriter/tape.hpp"

using namespace rewriter;
using test_helpers::max_gradient_error;
using test_helpers::rel_err;

namespace {

DenseArray random_array(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                        double hi = 1.0) {
  DenseArray a(r, c);
  for (auto& x : a.v) x = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("serial and parallel kernels agree bitwise") {
  Rng rng(42);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, {17, 31, 9}, {64, 64, 64}, {1, 128, 1}}) {
    auto a = random_array(rng, m, k);
    auto b = random_array(rng, k, n);
    std::vector<double> cs(static_cast<std::size_t>(m * n)), cp(cs.size());
    kernels::serial::matmul(a.v.data(), b.v.data(), cs.data(), m, k, n);
    kernels::parallel::matmul(a.v.data(), b.v.data(), cp.data(), m, k, n);
    CHECK(cs == cp);
  }
  auto x = random_array(rng, 1, 4096, -3, 3);
  auto y = random_array(rng, 1, 4096, -3, 3);
  std::vector<double> outs(4096), outp(4096);
  kernels::serial::tanh(x.v.data(), outs.data(), 4096);
  kernels::parallel::tanh(x.v.data(), outp.data(), 4096);
  CHECK(outs == outp);
  kernels::serial::sigmoid(x.v.data(), outs.data(), 4096);
  kernels::parallel::sigmoid(x.v.data(), outp.data(), 4096);
  CHECK(outs == outp);
  kernels::serial::mul(x.v.data(), y.v.data(), outs.data(), 4096);
  kernels::parallel::mul(x.v.data(), y.v.data(), outp.data(), 4096);
  CHECK(outs == outp);
  kernels::serial::softmax_rows(x.v.data(), outs.data(), 64, 64);
  kernels::parallel::softmax_rows(x.v.data(), outp.data(), 64, 64);
  CHECK(outs == outp);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(7);
  auto a = random_array(rng, 20, 13, -8, 8);
  std::vector<double> out(a.size());
  kernels::softmax_rows(a.v.data(), out.data(), 20, 13);
  for (std::size_t r = 0; r < 20; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 13; ++c) {
      CHECK(out[r * 13 + c] >= 0.0);
      sum += out[r * 13 + c];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("softmax of a constant row is uniform") {
  Tape t;
  NodeRef s = t.softmax(t.constant_row({0.0, 0.0, 0.0}));
  for (double v : t.value(s)) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(t.value(s)[0] == t.value(s)[1]);
  CHECK(t.value(s)[1] == t.value(s)[2]);
}

TEST_CASE("matmul by identity is exact") {
  Rng rng(3);
  auto a = random_array(rng, 4, 4);
  DenseArray eye(4, 4);
  for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  Tape t;
  NodeRef r = t.matmul(t.constant(eye), t.constant(a));
  CHECK(t.value(r) == a.v);
}

TEST_CASE("matmul shape mismatch raises DimensionError with both shapes") {
  Tape t;
  NodeRef a = t.constant(DenseArray(2, 3));
  NodeRef b = t.constant(DenseArray(2, 3));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("backward requires a scalar") {
  Tape t;
  NodeRef a = t.constant_row({1, 2, 3});
  CHECK_THROWS_AS(t.backward(a), UsageError);
}

TEST_CASE("loss = sum(p) gives all-ones gradient; unused params get zero") {
  DenseArray p0(2, 3, {1, 2, 3, 4, 5, 6});
  DenseArray p1(1, 4, {1, 1, 2, 2});
  Tape t;
  NodeRef a = t.param(p0, 0);
  NodeRef b = t.param(p1, 1);
  (void)b;
  t.backward(t.sum(a));
  CHECK(t.gradient(a) == std::vector<double>(6, 1.0));
  CHECK(t.gradient(b) == std::vector<double>(4, 0.0));
}

// Every primitive's analytic gradient against central finite differences on
// random 3x4 (and compatible) inputs.
TEST_CASE("primitive gradients match finite differences") {
  Rng rng(11);
  ParamStore params;
  int a_id = params.add("a", 3, 4);
  int b_id = params.add("b", 3, 4);
  int m_id = params.add("m", 4, 3);
  Rng init(5);
  params.init_uniform(init, -0.9, 0.9);
  // keep log() inputs positive
  for (auto& x : params[b_id].v) x = std::fabs(x) + 0.5;

  // weights folding each op's output into a scalar, fixed across evals
  DenseArray w34 = random_array(rng, 3, 4);
  DenseArray w33 = random_array(rng, 3, 3);
  DenseArray w13 = random_array(rng, 1, 3);
  DenseArray w18 = random_array(rng, 1, 8);
  DenseArray w1 = random_array(rng, 1, 5);

  struct Case {
    const char* name;
    std::function<NodeRef(Tape&, NodeRef, NodeRef, NodeRef)> build;
  };
  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, NodeRef a, NodeRef, NodeRef m) {
         return t.sum(t.mul(t.matmul(a, m), t.constant(w33)));
       }},
      {"add", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         return t.sum(t.mul(t.add(a, b), t.constant(w34)));
       }},
      {"sub", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         return t.sum(t.mul(t.sub(a, b), t.constant(w34)));
       }},
      {"mul", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         return t.sum(t.mul(t.mul(a, b), t.constant(w34)));
       }},
      {"tanh", [&](Tape& t, NodeRef a, NodeRef, NodeRef) {
         return t.sum(t.mul(t.tanh(a), t.constant(w34)));
       }},
      {"sigmoid", [&](Tape& t, NodeRef a, NodeRef, NodeRef) {
         return t.sum(t.mul(t.sigmoid(a), t.constant(w34)));
       }},
      {"log", [&](Tape& t, NodeRef, NodeRef b, NodeRef) {
         return t.sum(t.mul(t.log(b), t.constant(w34)));
       }},
      {"softmax", [&](Tape& t, NodeRef a, NodeRef, NodeRef) {
         return t.sum(t.mul(t.softmax(a), t.constant(w34)));
       }},
      {"concat", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         return t.sum(t.mul(t.concat({t.slice_cols(t.reshape(a, 1, 12), 0, 4),
                                      t.slice_cols(t.reshape(b, 1, 12), 0, 4)}),
                            t.constant(w18)));
       }},
      {"lookup-pick", [&](Tape& t, NodeRef a, NodeRef, NodeRef m) {
         NodeRef row = t.lookup(m, 2);  // m is 4x3
         return t.add(t.pick(t.lookup(a, 1), 3), t.sum(t.mul(row, t.constant(w13))));
       }},
      {"scale", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         NodeRef s = t.pick(t.reshape(b, 1, 12), 5);
         return t.sum(t.mul(t.scale(s, a), t.constant(w34)));
       }},
      {"scatter_sum", [&](Tape& t, NodeRef a, NodeRef, NodeRef) {
         NodeRef row = t.reshape(a, 1, 12);
         return t.sum(t.mul(t.scatter_sum(row, {0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1}, 5),
                            t.constant(w1)));
       }},
      {"add_broadcast_row", [&](Tape& t, NodeRef a, NodeRef b, NodeRef) {
         NodeRef row = t.slice_cols(t.reshape(b, 1, 12), 0, 4);
         return t.sum(t.mul(t.add_broadcast_row(a, row), t.constant(w34)));
       }},
      {"concat_rows", [&](Tape& t, NodeRef a, NodeRef, NodeRef) {
         NodeRef r0 = t.slice_cols(t.reshape(a, 1, 12), 0, 4);
         NodeRef r1 = t.slice_cols(t.reshape(a, 1, 12), 4, 8);
         return t.sum(t.mul(t.concat_rows({r0, r1}),
                            t.constant(DenseArray(2, 4, std::vector<double>(w18.v.begin(),
                                                                            w18.v.begin() + 8)))));
       }},
  };

  for (auto& c : cases) {
    CAPTURE(c.name);
    auto run = [&](bool want_grads, Gradients* out) {
      Tape t;
      NodeRef a = t.param(params[a_id], a_id);
      NodeRef b = t.param(params[b_id], b_id);
      NodeRef m = t.param(params[m_id], m_id);
      NodeRef loss = c.build(t, a, b, m);
      if (want_grads) {
        t.backward(loss);
        *out = {t.gradient(a), t.gradient(b), t.gradient(m)};
      }
      return t.scalar_value(loss);
    };
    Gradients analytic;
    run(true, &analytic);
    double err = max_gradient_error(params, analytic, [&] { return run(false, nullptr); });
    CHECK_MESSAGE(err <= 1e-6, c.name << " max rel err " << err);
  }
}

TEST_CASE("adagrad: zero gradient leaves everything unchanged") {
  ParamStore params;
  int id = params.add("w", 2, 2);
  params[id].v = {1, 2, 3, 4};
  auto st = AdagradState::create(params);
  Gradients g = zero_gradients(params);
  adagrad_step(params, g, st);
  CHECK(params[id].v == std::vector<double>{1, 2, 3, 4});
  CHECK(st.accum[0].v == std::vector<double>(4, 0.0));
}

TEST_CASE("adagrad first step matches the closed form") {
  ParamStore params;
  int id = params.add("w", 1, 3);
  params[id].v = {0.5, -0.25, 2.0};
  auto st = AdagradState::create(params, 0.15, 1e-10);
  Gradients g = zero_gradients(params);
  g[0] = {0.3, -1.7, 0.0001};
  std::vector<double> expect(3);
  for (int i = 0; i < 3; ++i)
    expect[static_cast<std::size_t>(i)] =
        params[id].v[static_cast<std::size_t>(i)] -
        0.15 * g[0][static_cast<std::size_t>(i)] /
            std::sqrt(g[0][static_cast<std::size_t>(i)] * g[0][static_cast<std::size_t>(i)] +
                      1e-10);
  adagrad_step(params, g, st);
  for (int i = 0; i < 3; ++i)
    CHECK(params[id].v[static_cast<std::size_t>(i)] ==
          doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
  // near sign(g) * lr for grads far from zero
  CHECK(std::fabs((0.5 - params[id].v[0]) - 0.15) < 1e-4);
}

TEST_CASE("adagrad: second equal-gradient step is smaller") {
  ParamStore params;
  int id = params.add("w", 1, 1);
  params[id].v = {0.0};
  auto st = AdagradState::create(params);
  Gradients g = zero_gradients(params);
  g[0] = {1.0};
  adagrad_step(params, g, st);
  double first = -params[id].v[0];
  adagrad_step(params, g, st);
  double second = -params[id].v[0] - first;
  CHECK(second < first);
  CHECK(second > 0);
}

TEST_CASE("adagrad rejects non-finite gradients naming the parameter") {
  ParamStore params;
  params.add("embed", 1, 2);
  auto st = AdagradState::create(params);
  Gradients g = zero_gradients(params);
  g[0][1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(adagrad_step(params, g, st), doctest::Contains("embed"), TrainingError);
}

TEST_CASE("uniform init is deterministic and in range") {
  ParamStore a, b;
  a.add("x", 8, 8);
  a.add("y", 3, 5);
  b.add("x", 8, 8);
  b.add("y", 3, 5);
  Rng r1(99), r2(99);
  a.init_uniform(r1);
  b.init_uniform(r2);
  for (int p = 0; p < a.count(); ++p) {
    CHECK(a[p].v == b[p].v);
    for (double x : a[p].v) {
      CHECK(x >= -0.1);
      CHECK(x <= 0.1);
    }
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  ParamStore params;
  params.add("w", 1, 2);
  Gradients g = zero_gradients(params);
  g[0] = {3.0, 4.0};  // norm 5
  clip_by_global_norm(g, 2.0);
  CHECK(global_norm(g) == doctest::Approx(2.0).epsilon(1e-12));
  Gradients small = zero_gradients(params);
  small[0] = {0.3, 0.4};
  clip_by_global_norm(small, 2.0);
  CHECK(small[0] == std::vector<double>{0.3, 0.4});
}

TEST_CASE("checkpoint round trip is bitwise") {
  std::string dir = test_helpers::temp_dir("ckpt");
  ParamStore params;
  int a = params.add("alpha", 3, 4);
  int b = params.add("beta", 2, 2);
  Rng rng(1234);
  params.init_uniform(rng, -5, 5);
  auto st = AdagradState::create(params, 0.15);
  st.accum[static_cast<std::size_t>(a)].v[2] = 0.125;
  st.accum[static_cast<std::size_t>(b)].v[0] = 7.5;

  std::string path = dir + "/test.ckpt";
  save_checkpoint(path, params, "{\"note\":42}", &st);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.metadata_json == "{\"note\":42}");
  REQUIRE(ck.params.count() == 2);
  CHECK(ck.params[ck.params.index_of("alpha")] == params[a]);
  CHECK(ck.params[ck.params.index_of("beta")] == params[b]);
  REQUIRE(ck.optimizer.has_value());
  CHECK(ck.optimizer->learning_rate == 0.15);
  CHECK(ck.optimizer->accum[0].v == st.accum[0].v);

  std::string path2 = dir + "/test2.ckpt";
  save_checkpoint(path2, ck.params, ck.metadata_json, &*ck.optimizer);
  CHECK(test_helpers::read_file(path) == test_helpers::read_file(path2));
}

TEST_CASE("loading garbage is a DataError") {
  std::string dir = test_helpers::temp_dir("ckpt_bad");
  test_helpers::write_file(dir + "/bad.ckpt", "not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad.ckpt"), DataError);
}
