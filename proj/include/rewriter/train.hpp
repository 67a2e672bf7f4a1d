#pragma once

#include <iosfwd>
#include <vector>

#include "rewriter/pgn.hpp"

namespace rewriter {

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.15;
  double lambda = 0.01;
  int patience = 3;  // early stop after this many epochs without val improvement
  int batch_size = 16;
  std::uint64_t seed = 1;
  double clip_norm = 2.0;
  int window = kFullWindow;

  void validate() const;
};

// One (context, reference) pair; a record with J references yields J examples.
struct TrainExample {
  SerializedContext ctx;           // labels and distances filled in
  std::vector<std::string> gold;   // delexicalized target tokens, no END
  std::string dialogue_id;
  int turn_index = 0;
};

// Preprocesses every record of the corpus. When `all_consistent` is given it
// reports whether any record's references disagreed on their entity sets.
std::vector<TrainExample> prepare_examples(const Corpus& corpus, const Lexicons& lex, int window,
                                           bool* all_consistent = nullptr);

// Graph-level loss builders (shared by the trainer and the gradient checks).
struct LossNodes {
  NodeRef total = -1;
  NodeRef nll = -1;
  NodeRef aux = -1;
};

NodeRef nll_loss_node(PgnGraph& graph, const PgnGraph::Encoded& enc, const SerializedContext& ctx,
                      const std::vector<std::string>& gold);
NodeRef aux_loss_node(PgnGraph& graph, const PgnGraph::Encoded& enc, const SerializedContext& ctx);
LossNodes mtl_loss_node(PgnGraph& graph, const SerializedContext& ctx,
                        const std::vector<std::string>& gold, double lambda);

// Value-level wrappers.
// -sum_k log p(y*_k) under teacher forcing.
double nll_loss(const PgnModel& model, const SerializedContext& ctx,
                const std::vector<std::string>& gold);

struct MtlLossValue {
  double total = 0;
  double nll = 0;
  double aux = 0;
};
// nll + lambda * aux, aux being binary cross-entropy of the copy head over
// the labeled entity positions.
MtlLossValue mtl_loss(const PgnModel& model, const SerializedContext& ctx,
                      const std::vector<std::string>& gold, double lambda);

struct EpochStats {
  double train_nll = 0;  // mean per example
  double train_aux = 0;
  double val_nll = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 0-based; minimizes validation NLL
  bool stopped_early = false;

  std::string log_text(double learning_rate) const;  // epoch TAB nll TAB aux TAB val TAB lr
};

// Teacher-forced Adagrad training over all examples with early stopping on
// validation NLL. The model is left holding the best-epoch parameters; the
// returned optimizer state matches that epoch. Deterministic given the seed:
// fixed shuffles, and batch gradients are reduced in example order no matter
// how many threads computed them.
TrainReport train_model(PgnModel& model, const std::vector<TrainExample>& train,
                        const std::vector<TrainExample>& dev, const TrainConfig& cfg,
                        AdagradState* out_optimizer = nullptr, std::ostream* progress = nullptr);

double mean_validation_nll(const PgnModel& model, const std::vector<TrainExample>& dev);

// Corpus-level entry point: preprocesses both splits, builds the vocabulary
// from the training split, initializes the model from the derived init seed
// and trains it.
PgnModel run_training(const Corpus& train_corpus, const Corpus& dev_corpus, const Lexicons& lex,
                      const PgnConfig& pgn_cfg, const TrainConfig& train_cfg,
                      TrainReport* out_report = nullptr, AdagradState* out_optimizer = nullptr,
                      std::ostream* progress = nullptr);

}  // namespace rewriter
