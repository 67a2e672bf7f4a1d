#include "rewriter/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace rewriter {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig.epochs must be >= 1");
  if (patience < 1) throw ConfigError("TrainConfig.patience must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig.batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("TrainConfig.learning_rate must be positive");
  if (lambda < 0) throw ConfigError("TrainConfig.lambda must be >= 0");
  if (clip_norm <= 0) throw ConfigError("TrainConfig.clip_norm must be positive");
}

std::vector<TrainExample> prepare_examples(const Corpus& corpus, const Lexicons& lex, int window,
                                           bool* all_consistent) {
  if (all_consistent) *all_consistent = true;
  std::vector<TrainExample> out;
  for (const auto& rec : corpus.records) {
    const Dialogue* d = corpus.find_dialogue(rec.dialogue_id);
    if (!d) throw DataError("rewrite record references unknown dialogue " + rec.dialogue_id);
    SerializedContext ctx = build_context(*d, rec.turn_index, window, lex);
    CopyLabelResult labels = derive_copy_labels(ctx, rec);
    if (!labels.consistent && all_consistent) *all_consistent = false;
    for (const auto& g : rec.gold) {
      TrainExample ex;
      ex.ctx = ctx;
      ex.gold = delexicalize_gold(g, ctx);
      ex.dialogue_id = rec.dialogue_id;
      ex.turn_index = rec.turn_index;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

NodeRef nll_loss_node(PgnGraph& graph, const PgnGraph::Encoded& enc, const SerializedContext& ctx,
                      const std::vector<std::string>& gold) {
  Tape& t = graph.tape();
  const Vocab& vocab = graph.model().vocab();
  ExtVocab ext = ExtVocab::build(vocab, ctx);

  std::vector<int> targets;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    int id = ext.ext_id(vocab, gold[k]);
    if (id < 0)
      throw DataError("gold token outside the extended vocabulary: \"" + gold[k] +
                      "\" at position " + std::to_string(k));
    targets.push_back(id);
  }
  targets.push_back(kEndId);

  PgnGraph::StepState state = graph.initial_state(enc);
  int prev = kStartId;
  NodeRef log_sum = -1;
  for (int target : targets) {
    auto step = graph.decode_step(state, prev, enc, ext);
    NodeRef lp = t.log(t.pick(step.p_ext, static_cast<std::size_t>(target)));
    log_sum = log_sum < 0 ? lp : t.add(log_sum, lp);
    state = step.state;
    prev = target;  // teacher forcing
  }
  return t.sub(t.scalar(0.0), log_sum);
}

NodeRef aux_loss_node(PgnGraph& graph, const PgnGraph::Encoded& enc,
                      const SerializedContext& ctx) {
  Tape& t = graph.tape();
  std::vector<std::size_t> pos;
  for (std::size_t l = 0; l < ctx.tokens.size(); ++l)
    if (ctx.tokens[l].copy_label != 0) pos.push_back(l);
  if (pos.empty()) return t.scalar(0.0);

  NodeRef g = graph.copy_head(enc);  // L x 1
  NodeRef row = t.reshape(g, 1, ctx.tokens.size());
  NodeRef one = t.scalar(1.0);
  NodeRef sum = -1;
  for (std::size_t l : pos) {
    NodeRef gl = t.pick(row, l);
    NodeRef term =
        ctx.tokens[l].copy_label > 0 ? t.log(gl) : t.log(t.sub(one, gl));
    sum = sum < 0 ? term : t.add(sum, term);
  }
  return t.sub(t.scalar(0.0), sum);
}

LossNodes mtl_loss_node(PgnGraph& graph, const SerializedContext& ctx,
                        const std::vector<std::string>& gold, double lambda) {
  Tape& t = graph.tape();
  auto enc = graph.encode(ctx);
  LossNodes nodes;
  nodes.nll = nll_loss_node(graph, enc, ctx, gold);
  nodes.aux = aux_loss_node(graph, enc, ctx);
  nodes.total = t.add(nodes.nll, t.scale(t.scalar(lambda), nodes.aux));
  return nodes;
}

double nll_loss(const PgnModel& model, const SerializedContext& ctx,
                const std::vector<std::string>& gold) {
  Tape tape;
  PgnGraph graph(model, tape);
  auto enc = graph.encode(ctx);
  return tape.scalar_value(nll_loss_node(graph, enc, ctx, gold));
}

MtlLossValue mtl_loss(const PgnModel& model, const SerializedContext& ctx,
                      const std::vector<std::string>& gold, double lambda) {
  Tape tape;
  PgnGraph graph(model, tape);
  LossNodes nodes = mtl_loss_node(graph, ctx, gold, lambda);
  return {tape.scalar_value(nodes.total), tape.scalar_value(nodes.nll),
          tape.scalar_value(nodes.aux)};
}

std::string TrainReport::log_text(double learning_rate) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (std::size_t e = 0; e < epochs.size(); ++e)
    os << e << '\t' << epochs[e].train_nll << '\t' << epochs[e].train_aux << '\t'
       << epochs[e].val_nll << '\t' << learning_rate << '\n';
  return os.str();
}

double mean_validation_nll(const PgnModel& model, const std::vector<TrainExample>& dev) {
  if (dev.empty()) throw UsageError("validation split is empty");
  // Per-example losses are computed in parallel but reduced in index order,
  // so the result does not depend on the thread count.
  std::vector<double> losses(dev.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(dev.size()); ++i) {
    try {
      losses[static_cast<std::size_t>(i)] =
          nll_loss(model, dev[static_cast<std::size_t>(i)].ctx,
                   dev[static_cast<std::size_t>(i)].gold);
    } catch (...) {
#pragma omp critical(val_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(dev.size());
}

TrainReport train_model(PgnModel& model, const std::vector<TrainExample>& train,
                        const std::vector<TrainExample>& dev, const TrainConfig& cfg,
                        AdagradState* out_optimizer, std::ostream* progress) {
  cfg.validate();
  if (train.empty()) throw UsageError("training split is empty");
  if (dev.empty()) throw UsageError("validation split is empty");

  AdagradState opt = AdagradState::create(model.params(), cfg.learning_rate);
  Rng shuffle_rng = Rng(cfg.seed).derive("shuffle");

  TrainReport report;
  ParamStore best_params = model.params();
  AdagradState best_opt = opt;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_nll = 0.0, epoch_aux = 0.0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t n = batch_end - batch_start;
      std::vector<Gradients> grads(n);
      std::vector<MtlLossValue> losses(n);

      // One tape per example; gradients land in per-example slots so the
      // serial reduction below is identical for any thread count.
      std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
      for (long long bi = 0; bi < static_cast<long long>(n); ++bi) {
        try {
          const TrainExample& ex = train[order[batch_start + static_cast<std::size_t>(bi)]];
          Tape tape;
          PgnGraph graph(model, tape);
          LossNodes nodes = mtl_loss_node(graph, ex.ctx, ex.gold, cfg.lambda);
          tape.backward(nodes.total);
          grads[static_cast<std::size_t>(bi)] = graph.param_gradients();
          losses[static_cast<std::size_t>(bi)] = {tape.scalar_value(nodes.total),
                                                  tape.scalar_value(nodes.nll),
                                                  tape.scalar_value(nodes.aux)};
        } catch (...) {
#pragma omp critical(train_batch_err)
          if (!err) err = std::current_exception();
        }
      }
      if (err) std::rethrow_exception(err);

      Gradients batch_grads = zero_gradients(model.params());
      for (std::size_t bi = 0; bi < n; ++bi) {
        if (!std::isfinite(losses[bi].total))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_start / cfg.batch_size));
        epoch_nll += losses[bi].nll;
        epoch_aux += losses[bi].aux;
        accumulate(batch_grads, grads[bi]);
      }
      clip_by_global_norm(batch_grads, cfg.clip_norm);
      adagrad_step(model.params(), batch_grads, opt);
    }

    EpochStats stats;
    stats.train_nll = epoch_nll / static_cast<double>(train.size());
    stats.train_aux = epoch_aux / static_cast<double>(train.size());
    stats.val_nll = mean_validation_nll(model, dev);
    report.epochs.push_back(stats);
    if (progress) {
      *progress << std::fixed << std::setprecision(6) << epoch << '\t' << stats.train_nll << '\t'
                << stats.train_aux << '\t' << stats.val_nll << '\t' << cfg.learning_rate << '\n';
      progress->flush();
    }

    if (stats.val_nll < best_val) {
      best_val = stats.val_nll;
      report.best_epoch = epoch;
      best_params = model.params();
      best_opt = opt;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) {
        report.stopped_early = true;
        break;
      }
    }
  }

  model.params() = best_params;
  if (out_optimizer) *out_optimizer = best_opt;
  return report;
}

PgnModel run_training(const Corpus& train_corpus, const Corpus& dev_corpus, const Lexicons& lex,
                      const PgnConfig& pgn_cfg, const TrainConfig& train_cfg,
                      TrainReport* out_report, AdagradState* out_optimizer,
                      std::ostream* progress) {
  std::vector<TrainExample> train = prepare_examples(train_corpus, lex, train_cfg.window);
  std::vector<TrainExample> dev = prepare_examples(dev_corpus, lex, train_cfg.window);

  std::vector<SerializedContext> contexts;
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : train) {
    contexts.push_back(ex.ctx);
    golds.push_back(ex.gold);
  }
  Vocab vocab = build_word_vocab(contexts, golds);
  Vocab slots = build_slot_vocab(contexts);

  PgnConfig model_cfg = pgn_cfg;
  model_cfg.lambda = train_cfg.lambda;
  PgnModel model(model_cfg, std::move(vocab), std::move(slots),
                 Rng(train_cfg.seed).derive("init").seed());
  TrainReport report = train_model(model, train, dev, train_cfg, out_optimizer, progress);
  if (out_report) *out_report = report;
  return model;
}

}  // namespace rewriter
