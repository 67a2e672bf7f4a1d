#include "rewriter/decode.hpp"

namespace rewriter {

PgnStepper::PgnStepper(const PgnModel& model, const SerializedContext& ctx,
                       bool restrict_to_source)
    : model_(model), graph_(model, tape_), ext_(ExtVocab::build(model.vocab(), ctx)) {
  enc_ = graph_.encode(ctx);
  if (restrict_to_source) {
    banned_.assign(static_cast<std::size_t>(ext_.size()), false);
    std::vector<bool> in_source(static_cast<std::size_t>(ext_.size()), false);
    for (int id : ext_.src_ext_ids) in_source[static_cast<std::size_t>(id)] = true;
    for (int id = 0; id < ext_.size(); ++id)
      if (is_canonical_token(ext_.token(model.vocab(), id)) &&
          !in_source[static_cast<std::size_t>(id)])
        banned_[static_cast<std::size_t>(id)] = true;
  }
}

std::vector<double> PgnStepper::step(const State& state, int prev, State* next) {
  auto out = graph_.decode_step(state, prev, enc_, ext_);
  if (next) *next = out.state;
  std::vector<double> p = tape_.value(out.p_ext);
  if (!banned_.empty())
    for (std::size_t i = 0; i < p.size(); ++i)
      if (banned_[i]) p[i] = 0.0;
  return p;
}

namespace {

Hypothesis decode_one(const PgnModel& model, const SerializedContext& ctx,
                      const DecodeOptions& opts) {
  PgnStepper stepper(model, ctx, opts.restrict_to_source);
  return opts.beam ? beam_decode(stepper, opts.width, opts.max_len)
                   : greedy_decode(stepper, opts.max_len);
}

}  // namespace

std::string rewrite(const Dialogue& d, int t, const PgnModel& model, const Lexicons& lex,
                    const DecodeOptions& opts) {
  SerializedContext ctx = build_context(d, t, opts.window, lex);
  Hypothesis hyp = decode_one(model, ctx, opts);
  return relexicalize(hyp.surface_tokens(), ctx.table);
}

BatchRewriteResult batch_rewrite(const Corpus& corpus, const PgnModel& model, const Lexicons& lex,
                                 const DecodeOptions& opts) {
  std::vector<std::pair<const Dialogue*, int>> targets;
  if (!corpus.records.empty()) {
    for (const auto& rec : corpus.records) {
      const Dialogue* d = corpus.find_dialogue(rec.dialogue_id);
      if (!d) throw DataError("rewrite record references unknown dialogue " + rec.dialogue_id);
      targets.emplace_back(d, rec.turn_index);
    }
  } else {
    for (const auto& d : corpus.dialogues)
      for (int t = 0; t < static_cast<int>(d.turns.size()); ++t)
        if (d.turns[t].speaker == Speaker::User) targets.emplace_back(&d, t);
  }

  BatchRewriteResult res;
  res.surface.resize(targets.size());
  res.delex.resize(targets.size());
  std::vector<char> bad(targets.size(), 0);

  // Decoding is read-only over the parameters; records are independent.
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(targets.size()); ++i) {
    try {
      std::size_t idx = static_cast<std::size_t>(i);
      SerializedContext ctx = build_context(*targets[idx].first, targets[idx].second, opts.window,
                                            lex);
      Hypothesis hyp = decode_one(model, ctx, opts);
      std::vector<std::string> toks = hyp.surface_tokens();
      res.delex[idx] = toks;
      std::string surface;
      bool unresolved = false;
      for (const auto& tok : toks) {
        std::string piece = tok;
        if (is_canonical_token(tok)) {
          auto s = ctx.table.surface_of(tok);
          if (s)
            piece = *s;
          else
            unresolved = true;  // keep the raw token; counted below
        }
        if (!surface.empty()) surface += ' ';
        surface += piece;
      }
      res.surface[idx] = surface;
      bad[idx] = unresolved ? 1 : 0;
    } catch (...) {
#pragma omp critical(batch_rewrite_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  res.total = static_cast<long>(targets.size());
  for (char b : bad) res.unresolvable += b;
  return res;
}

}  // namespace rewriter
