#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rewriter/pgn.hpp"

namespace rewriter {

struct Hypothesis {
  std::vector<int> ids;             // extended-vocab ids; includes the terminator
  std::vector<std::string> tokens;  // parallel token strings
  double logp = 0.0;                // sum of per-step log probabilities
  bool finished = false;            // emitted the terminator

  // Length-normalized score used for final selection.
  double normalized() const {
    return ids.empty() ? -std::numeric_limits<double>::infinity()
                       : logp / static_cast<double>(ids.size());
  }

  // Output tokens with the terminator stripped.
  std::vector<std::string> surface_tokens() const {
    std::vector<std::string> out = tokens;
    if (finished && !out.empty()) out.pop_back();
    return out;
  }
};

// Stepper concept: ext_size(), end_id(), start_id(), token(int),
// State initial(), std::vector<double> step(const State&, int prev, State* next)
// returning a probability distribution over the extended vocabulary.

// Argmax decoding; ties go to the lowest token id. Stops at the terminator
// or after max_len steps (then finished = false).
template <class Stepper>
Hypothesis greedy_decode(Stepper& stepper, int max_len) {
  Hypothesis h;
  auto state = stepper.initial();
  int prev = stepper.start_id();
  for (int k = 0; k < max_len; ++k) {
    typename Stepper::State next;
    std::vector<double> p = stepper.step(state, prev, &next);
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
      if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(best)]) best = i;
    h.ids.push_back(best);
    h.tokens.push_back(stepper.token(best));
    h.logp += std::log(p[static_cast<std::size_t>(best)]);
    if (best == stepper.end_id()) {
      h.finished = true;
      break;
    }
    state = next;
    prev = best;
  }
  return h;
}

// Standard beam over the extended vocabulary. Finished hypotheses retire
// into a pool; the final answer maximizes length-normalized log-probability
// with ties broken by the lexicographically smallest id sequence. The greedy
// rollout is seeded into the pool, so the beam never returns a finished
// hypothesis scoring below greedy.
template <class Stepper>
Hypothesis beam_decode(Stepper& stepper, int width, int max_len) {
  if (width < 1) throw UsageError("beam width must be >= 1");

  auto better_final = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.normalized() != b.normalized()) return a.normalized() > b.normalized();
    return std::lexicographical_compare(a.ids.begin(), a.ids.end(), b.ids.begin(), b.ids.end());
  };

  std::vector<Hypothesis> pool;
  {
    Hypothesis greedy = greedy_decode(stepper, max_len);
    if (greedy.finished) pool.push_back(greedy);
  }

  struct Item {
    Hypothesis hyp;
    typename Stepper::State state;
  };
  std::vector<Item> live;
  live.push_back({Hypothesis{}, stepper.initial()});

  for (int k = 0; k < max_len && !live.empty(); ++k) {
    struct Cand {
      double logp;
      int parent;
      int tok;
    };
    std::vector<Cand> cands;
    std::vector<typename Stepper::State> next_states(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      int prev = live[i].hyp.ids.empty() ? stepper.start_id() : live[i].hyp.ids.back();
      std::vector<double> p = stepper.step(live[i].state, prev, &next_states[i]);
      for (int tok = 0; tok < static_cast<int>(p.size()); ++tok)
        if (p[static_cast<std::size_t>(tok)] > 0.0)
          cands.push_back({live[i].hyp.logp + std::log(p[static_cast<std::size_t>(tok)]),
                           static_cast<int>(i), tok});
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      const auto& ia = live[static_cast<std::size_t>(a.parent)].hyp.ids;
      const auto& ib = live[static_cast<std::size_t>(b.parent)].hyp.ids;
      if (ia != ib)
        return std::lexicographical_compare(ia.begin(), ia.end(), ib.begin(), ib.end());
      return a.tok < b.tok;
    });
    if (static_cast<int>(cands.size()) > width) cands.resize(static_cast<std::size_t>(width));

    std::vector<Item> next_live;
    for (const Cand& c : cands) {
      Item item;
      item.hyp = live[static_cast<std::size_t>(c.parent)].hyp;
      item.hyp.ids.push_back(c.tok);
      item.hyp.tokens.push_back(stepper.token(c.tok));
      item.hyp.logp = c.logp;
      if (c.tok == stepper.end_id()) {
        item.hyp.finished = true;
        pool.push_back(item.hyp);
      } else {
        item.state = next_states[static_cast<std::size_t>(c.parent)];
        next_live.push_back(std::move(item));
      }
    }
    live = std::move(next_live);
  }

  if (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (better_final(pool[i], pool[best])) best = i;
    return pool[best];
  }
  // Nothing terminated within max_len; hand back the best partial result.
  Hypothesis best;
  bool have = false;
  for (const auto& item : live)
    if (!have || better_final(item.hyp, best)) {
      best = item.hyp;
      have = true;
    }
  best.finished = false;
  return best;
}

// Forward-only runner for a trained model over one serialized context.
// Many steppers may decode concurrently against one loaded model.
class PgnStepper {
 public:
  // When restrict_to_source is set, canonical entity tokens absent from the
  // source get probability zero (an optional decode-time constraint).
  PgnStepper(const PgnModel& model, const SerializedContext& ctx,
             bool restrict_to_source = false);

  using State = PgnGraph::StepState;

  int ext_size() const { return ext_.size(); }
  int end_id() const { return kEndId; }
  int start_id() const { return kStartId; }
  std::string token(int ext_id) const { return ext_.token(model_.vocab(), ext_id); }
  const ExtVocab& ext_vocab() const { return ext_; }

  State initial() const { return graph_.initial_state(enc_); }
  std::vector<double> step(const State& state, int prev, State* next);

 private:
  const PgnModel& model_;
  Tape tape_;
  PgnGraph graph_;
  ExtVocab ext_;
  PgnGraph::Encoded enc_;
  std::vector<bool> banned_;
};

struct DecodeOptions {
  bool beam = false;
  int width = 4;
  int max_len = 32;
  int window = kFullWindow;
  bool restrict_to_source = false;
};

// Full pipeline for one turn: serialize, index, tag, decode, relexicalize.
// Raises DataError when the model emits an entity token the table cannot
// resolve.
std::string rewrite(const Dialogue& d, int t, const PgnModel& model, const Lexicons& lex,
                    const DecodeOptions& opts);

struct BatchRewriteResult {
  std::vector<std::string> surface;               // one line per record
  std::vector<std::vector<std::string>> delex;    // sidecar for metrics
  long total = 0;
  long unresolvable = 0;  // rewrites containing entity tokens not in the table
};

// Rewrites every record of the corpus (or, when it has none, every user
// turn). Unresolvable entity tokens are kept verbatim and counted instead of
// aborting the batch.
BatchRewriteResult batch_rewrite(const Corpus& corpus, const PgnModel& model, const Lexicons& lex,
                                 const DecodeOptions& opts);

}  // namespace rewriter
