#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "rewriter/decode.hpp"
#include "rewriter/train.hpp"

using namespace rewriter;
namespace th = test_helpers;

namespace {

// A stepper whose distribution is an arbitrary function of the emitted
// prefix. end id follows the real convention (1). The started flag keeps the
// initial start_id() from being confused with an emitted token of the same
// value.
struct RiggedStepper {
  int ext;
  std::function<std::vector<double>(const std::vector<int>&)> dist;

  struct State {
    std::vector<int> prefix;
    bool started = false;
  };

  int ext_size() const { return ext; }
  int end_id() const { return kEndId; }
  int start_id() const { return kStartId; }
  std::string token(int id) const { return "t" + std::to_string(id); }
  State initial() const { return {}; }

  std::vector<double> step(const State& s, int prev, State* next) {
    State n = s;
    if (n.started) n.prefix.push_back(prev);
    n.started = true;
    std::vector<double> p = dist(n.prefix);
    if (next) *next = std::move(n);
    return p;
  }
};

std::vector<double> random_dist(Rng& rng, int n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double sum = 0;
  for (auto& x : p) {
    x = rng.uniform(0.01, 1.0);
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return p;
}

// Hash-seeded distribution: deterministic per (model seed, prefix).
RiggedStepper random_model(std::uint64_t seed, int ext) {
  return {ext, [seed, ext](const std::vector<int>& prefix) {
            std::uint64_t h = seed;
            for (int t : prefix) h = h * 1099511628211ull + static_cast<std::uint64_t>(t) + 17;
            Rng rng(h);
            return random_dist(rng, ext);
          }};
}

// Exhaustive search over all sequences up to max_len, same scoring and
// tie-break rules the beam documents.
Hypothesis enumerate_best(RiggedStepper& stepper, int max_len) {
  Hypothesis best;
  bool have = false;
  std::function<void(std::vector<int>, double)> walk = [&](std::vector<int> prefix, double logp) {
    if (static_cast<int>(prefix.size()) >= max_len) return;
    std::vector<double> p = stepper.dist(prefix);
    for (int tok = 0; tok < stepper.ext; ++tok) {
      double q = p[static_cast<std::size_t>(tok)];
      if (q <= 0) continue;
      std::vector<int> ext = prefix;
      ext.push_back(tok);
      double lp = logp + std::log(q);
      if (tok == stepper.end_id()) {
        Hypothesis h;
        h.ids = ext;
        h.logp = lp;
        h.finished = true;
        double norm = lp / static_cast<double>(ext.size());
        double bnorm = have ? best.normalized() : -1e300;
        if (!have || norm > bnorm ||
            (norm == bnorm && std::lexicographical_compare(ext.begin(), ext.end(),
                                                           best.ids.begin(), best.ids.end()))) {
          best = h;
          have = true;
        }
      } else {
        walk(ext, lp);
      }
    }
  };
  walk({}, 0.0);
  return best;
}

}  // namespace

TEST_CASE("greedy emits the one-hot sequence of a rigged model") {
  // step k deterministically wants token 4,3,5, then END
  std::vector<std::vector<double>> rows = {
      {0, 0, 0, 0, 1, 0}, {0, 0, 0, 1, 0, 0}, {0, 0, 0, 0, 0, 1}, {0, 1, 0, 0, 0, 0}};
  RiggedStepper s{6, [&](const std::vector<int>& prefix) { return rows[prefix.size()]; }};
  Hypothesis h = greedy_decode(s, 10);
  CHECK(h.ids == std::vector<int>{4, 3, 5, 1});
  CHECK(h.finished);
  CHECK(h.logp == 0.0);  // all probability one
  CHECK(h.surface_tokens() == std::vector<std::string>{"t4", "t3", "t5"});
}

TEST_CASE("max_len zero returns an empty unfinished hypothesis") {
  RiggedStepper s = random_model(1, 5);
  Hypothesis g = greedy_decode(s, 0);
  CHECK(g.ids.empty());
  CHECK(!g.finished);
  Hypothesis b = beam_decode(s, 3, 0);
  CHECK(b.ids.empty());
  CHECK(!b.finished);
}

TEST_CASE("ties break toward the lowest token id") {
  RiggedStepper s{4, [](const std::vector<int>&) {
                    return std::vector<double>{0.25, 0.25, 0.25, 0.25};
                  }};
  Hypothesis h = greedy_decode(s, 3);
  // argmax scan keeps the first maximum: token 0, three times, no END
  CHECK(h.ids == std::vector<int>{0, 0, 0});
  CHECK(!h.finished);
}

TEST_CASE("beam width one equals greedy on 100 random rigged models") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RiggedStepper s = random_model(seed, 6);
    Hypothesis g = greedy_decode(s, 8);
    Hypothesis b = beam_decode(s, 1, 8);
    CHECK(b.ids == g.ids);
    CHECK(b.finished == g.finished);
    CHECK(b.logp == g.logp);
  }
}

TEST_CASE("a saturating beam equals exhaustive enumeration on a 2-step toy") {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    RiggedStepper s = random_model(seed, 4);
    Hypothesis brute = enumerate_best(s, 2);
    Hypothesis beam = beam_decode(s, 16, 2);  // width >= |V|^2
    REQUIRE(brute.finished);
    CHECK(beam.finished);
    CHECK(beam.ids == brute.ids);
    CHECK(beam.logp == doctest::Approx(brute.logp).epsilon(1e-12));
  }
}

TEST_CASE("all-uniform distributions return the documented tie-break minimum") {
  RiggedStepper s{4, [](const std::vector<int>&) {
                    return std::vector<double>{0.25, 0.25, 0.25, 0.25};
                  }};
  Hypothesis b = beam_decode(s, 16, 3);
  CHECK(b.finished);
  // every finished sequence scores ln(1/4); lexicographic minimum wins
  CHECK(b.ids == std::vector<int>{0, 0, 1});
  Hypothesis brute = enumerate_best(s, 3);
  CHECK(b.ids == brute.ids);
}

TEST_CASE("cumulative log-probability never increases along a hypothesis") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RiggedStepper s = random_model(seed + 500, 5);
    auto state = s.initial();
    int prev = s.start_id();
    double logp = 0.0;
    for (int k = 0; k < 6; ++k) {
      RiggedStepper::State next;
      auto p = s.step(state, prev, &next);
      int best = 0;
      for (int i = 1; i < 5; ++i)
        if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(best)]) best = i;
      double before = logp;
      logp += std::log(p[static_cast<std::size_t>(best)]);
      CHECK(logp <= before);
      if (best == s.end_id()) break;
      state = next;
      prev = best;
    }
  }
}

TEST_CASE("beam is never worse than greedy when both finish") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RiggedStepper s = random_model(seed + 900, 6);
    Hypothesis g = greedy_decode(s, 8);
    for (int width : {2, 4}) {
      Hypothesis b = beam_decode(s, width, 8);
      if (g.finished && b.finished) CHECK(b.normalized() >= g.normalized() - 1e-12);
    }
  }
}

TEST_CASE("decode + relexicalize produces the final surface rewrite") {
  // table from the running example, decoder rigged to the delexicalized gold
  Dialogue d = th::example_dialogue();
  SerializedContext ctx = serialize_context(d, 2);
  std::vector<std::string> target = {"buy", "S_2", "'s", "U_3", "book"};
  // map via a tiny vocabulary rig: ids 3.. in order
  Vocab v(kReservedWords);
  for (const auto& t : target) v.add(t);
  RiggedStepper s{v.size(), [&](const std::vector<int>& prefix) {
                    std::vector<double> p(static_cast<std::size_t>(v.size()), 0.0);
                    if (prefix.size() < target.size())
                      p[static_cast<std::size_t>(v.id(target[prefix.size()]))] = 1.0;
                    else
                      p[kEndId] = 1.0;
                    return p;
                  }};
  Hypothesis h = greedy_decode(s, 10);
  std::vector<std::string> toks;
  for (int id : h.ids)
    if (id != kEndId) toks.push_back(v.token(id));
  CHECK(relexicalize(toks, ctx.table) == "buy Yuval Harari 's latest book");
}

TEST_CASE("identity copy through the rigged path returns the original utterance") {
  Dialogue d;
  d.id = "one";
  d.turns = {Turn{Speaker::User, {"show", "open", "shops"}, {}, "shop", "query"}};
  SerializedContext ctx = serialize_context(d, 0);
  Vocab v(kReservedWords);
  for (const auto& t : ctx.tokens) v.add(t.token);
  std::vector<std::string> target = {"show", "open", "shops"};
  RiggedStepper s{v.size(), [&](const std::vector<int>& prefix) {
                    std::vector<double> p(static_cast<std::size_t>(v.size()), 0.0);
                    if (prefix.size() < target.size())
                      p[static_cast<std::size_t>(v.id(target[prefix.size()]))] = 1.0;
                    else
                      p[kEndId] = 1.0;
                    return p;
                  }};
  Hypothesis h = greedy_decode(s, 10);
  std::vector<std::string> toks;
  for (int id : h.ids)
    if (id != kEndId) toks.push_back(v.token(id));
  CHECK(relexicalize(toks, ctx.table) == "show open shops");
}

TEST_CASE("pgn stepper: greedy equals width-1 beam and decoding is deterministic") {
  Corpus corpus = generate_synthetic(77, 10);
  Lexicons lex = th::tiny_lexicons();
  auto examples = prepare_examples(corpus, lex, kFullWindow);
  std::vector<SerializedContext> ctxs;
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : examples) {
    ctxs.push_back(ex.ctx);
    golds.push_back(ex.gold);
  }
  PgnConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.attn_dim = 8;
  cfg.copy_head_dim = 8;
  cfg.speaker_dim = 2;
  cfg.slot_dim = 2;
  cfg.flags_dim = 2;
  PgnModel model(cfg, build_word_vocab(ctxs, golds), build_slot_vocab(ctxs), 13);

  for (std::size_t i = 0; i < std::min<std::size_t>(5, examples.size()); ++i) {
    PgnStepper s1(model, examples[i].ctx);
    Hypothesis g = greedy_decode(s1, 12);
    PgnStepper s2(model, examples[i].ctx);
    Hypothesis b = beam_decode(s2, 1, 12);
    CHECK(g.ids == b.ids);
    PgnStepper s3(model, examples[i].ctx);
    Hypothesis g2 = greedy_decode(s3, 12);
    CHECK(g.ids == g2.ids);
    CHECK(g.logp == g2.logp);
  }
}

TEST_CASE("restricting emissions to source placeholders bans foreign entities") {
  Corpus corpus = generate_synthetic(78, 10);
  Lexicons lex = th::tiny_lexicons();
  auto examples = prepare_examples(corpus, lex, kFullWindow);
  std::vector<SerializedContext> ctxs;
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : examples) {
    ctxs.push_back(ex.ctx);
    golds.push_back(ex.gold);
  }
  PgnConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.attn_dim = 8;
  cfg.copy_head_dim = 8;
  cfg.speaker_dim = 2;
  cfg.slot_dim = 2;
  cfg.flags_dim = 2;
  PgnModel model(cfg, build_word_vocab(ctxs, golds), build_slot_vocab(ctxs), 13);

  const auto& ctx = examples.front().ctx;
  std::set<std::string> src;
  for (const auto& t : ctx.tokens) src.insert(t.token);
  PgnStepper s(model, ctx, /*restrict_to_source=*/true);
  auto state = s.initial();
  PgnStepper::State next;
  auto p = s.step(state, s.start_id(), &next);
  for (int id = 0; id < s.ext_size(); ++id) {
    std::string tok = s.token(id);
    if (is_canonical_token(tok) && !src.count(tok))
      CHECK(p[static_cast<std::size_t>(id)] == 0.0);
  }
}

TEST_CASE("batch rewrite covers every record and length limits are honored") {
  Corpus corpus = generate_synthetic(79, 8);
  Lexicons lex = th::tiny_lexicons();
  auto examples = prepare_examples(corpus, lex, kFullWindow);
  std::vector<SerializedContext> ctxs;
  std::vector<std::vector<std::string>> golds;
  for (const auto& ex : examples) {
    ctxs.push_back(ex.ctx);
    golds.push_back(ex.gold);
  }
  PgnConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.attn_dim = 8;
  cfg.copy_head_dim = 8;
  cfg.speaker_dim = 2;
  cfg.slot_dim = 2;
  cfg.flags_dim = 2;
  PgnModel model(cfg, build_word_vocab(ctxs, golds), build_slot_vocab(ctxs), 13);

  DecodeOptions opts;
  opts.max_len = 6;
  BatchRewriteResult res = batch_rewrite(corpus, model, lex, opts);
  CHECK(res.total == static_cast<long>(corpus.records.size()));
  CHECK(res.surface.size() == corpus.records.size());
  for (const auto& toks : res.delex) CHECK(toks.size() <= 6);
  // determinism across runs
  BatchRewriteResult res2 = batch_rewrite(corpus, model, lex, opts);
  CHECK(res.surface == res2.surface);
  CHECK(res.delex == res2.delex);
}
