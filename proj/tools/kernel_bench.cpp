// Times the serial reference kernels against the OpenMP versions, plus a
// whole batch-gradient step, so the dispatch cutoffs can be sanity-checked
// on a new machine.

#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rewriter/corpus.hpp"
#include "rewriter/kernels.hpp"
#include "rewriter/rng.hpp"
#include "rewriter/train.hpp"

using namespace rewriter;

namespace {

double now() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return static_cast<double>(clock()) / CLOCKS_PER_SEC;
#endif
}

double time_it(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  double t0 = now();
  for (int i = 0; i < reps; ++i) fn();
  return (now() - t0) / reps * 1e3;  // ms
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

int main() {
  Rng rng(7);
  std::printf("threads: %d\n\n", kernels::max_threads());

  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial ms", "openmp ms", "speedup");
  for (std::size_t n : {64, 128, 256, 512}) {
    auto a = random_vec(rng, n * n);
    auto b = random_vec(rng, n * n);
    std::vector<double> c(n * n);
    double ts = time_it([&] { kernels::serial::matmul(a.data(), b.data(), c.data(), n, n, n); },
                        n >= 512 ? 3 : 10);
    double tp = time_it([&] { kernels::parallel::matmul(a.data(), b.data(), c.data(), n, n, n); },
                        n >= 512 ? 3 : 10);
    std::printf("matmul %4zux%zu              %10.3f %10.3f %7.2fx\n", n, n, ts, tp, ts / tp);
  }
  for (std::size_t n : {1u << 16, 1u << 20}) {
    auto a = random_vec(rng, n);
    std::vector<double> out(n);
    double ts = time_it([&] { kernels::serial::tanh(a.data(), out.data(), n); }, 10);
    double tp = time_it([&] { kernels::parallel::tanh(a.data(), out.data(), n); }, 10);
    std::printf("tanh   n=%-8zu           %10.3f %10.3f %7.2fx\n", n, ts, tp, ts / tp);
  }
  for (std::size_t rows : {256, 4096}) {
    std::size_t cols = 256;
    auto a = random_vec(rng, rows * cols);
    std::vector<double> out(rows * cols);
    double ts =
        time_it([&] { kernels::serial::softmax_rows(a.data(), out.data(), rows, cols); }, 10);
    double tp =
        time_it([&] { kernels::parallel::softmax_rows(a.data(), out.data(), rows, cols); }, 10);
    std::printf("softmax %5zux%zu           %10.3f %10.3f %7.2fx\n", rows, cols, ts, tp, ts / tp);
  }

  // Batch gradients: the trainer's parallel-over-examples path against one
  // thread. Uses a small synthetic slice so the run stays under a second.
  Corpus corpus = generate_synthetic(11, 24);
  Lexicons lex;
  lex.question_words = {"who", "what", "where", "when", "why", "how", "which"};
  lex.possessive_pronouns = {"my", "your", "his", "her", "its", "our", "their"};
  lex.psbl = {"book", "song", "table"};
  auto examples = prepare_examples(corpus, lex, kFullWindow);

  std::vector<SerializedContext> ctxs;
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : examples) {
    ctxs.push_back(ex.ctx);
    golds.push_back(ex.gold);
  }
  PgnConfig cfg;
  cfg.embed_dim = 32;
  cfg.hidden_dim = 32;
  cfg.attn_dim = 32;
  cfg.copy_head_dim = 32;
  PgnModel model(cfg, build_word_vocab(ctxs, golds), build_slot_vocab(ctxs), 5);

  auto batch = [&] {
    std::vector<Gradients> grads(examples.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(examples.size()); ++i) {
      Tape tape;
      PgnGraph graph(model, tape);
      auto nodes = mtl_loss_node(graph, examples[static_cast<std::size_t>(i)].ctx,
                                 examples[static_cast<std::size_t>(i)].gold, 0.01);
      tape.backward(nodes.total);
      grads[static_cast<std::size_t>(i)] = graph.param_gradients();
    }
  };
  int saved = kernels::max_threads();
  kernels::set_threads(1);
  double ts = time_it(batch, 3);
  kernels::set_threads(saved);
  double tp = time_it(batch, 3);
  std::printf("batch grads (%3zu examples)  %10.3f %10.3f %7.2fx\n", examples.size(), ts, tp,
              ts / tp);
  return 0;
}
