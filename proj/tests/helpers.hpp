#pragma once

// Shared fixtures and independent oracles for the test suites. Everything in
// here stays independent of the implementation paths it is used to check.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "rewriter/corpus.hpp"
#include "rewriter/params.hpp"
#include "rewriter/preprocess.hpp"

namespace test_helpers {

using namespace rewriter;

inline std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("rewriter_test_" + tag);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

// |a - n| relative to max(1, |a|, |n|): relative for large values, absolute
// near zero, the usual gradient-check metric.
inline double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

// Central finite differences over every parameter value. `loss` must rebuild
// its graph from the current parameter values on each call.
inline double max_gradient_error(ParamStore& params, const Gradients& analytic,
                                 const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  for (int p = 0; p < params.count(); ++p) {
    for (std::size_t i = 0; i < params[p].v.size(); ++i) {
      double saved = params[p].v[i];
      params[p].v[i] = saved + h;
      double up = loss();
      params[p].v[i] = saved - h;
      double down = loss();
      params[p].v[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[static_cast<std::size_t>(p)][i], numeric));
    }
  }
  return worst;
}

inline Lexicons tiny_lexicons() {
  Lexicons lex;
  lex.question_words = {"who", "what", "when", "where", "why", "how", "which"};
  lex.possessive_pronouns = {"my", "your", "his", "her", "its", "our", "their"};
  lex.psbl = {"book", "novel", "song", "album", "table", "booth", "one"};
  return lex;
}

// The running example dialogue: a book question, the answer naming the
// author, then an anaphoric purchase request.
inline Dialogue example_dialogue() {
  Dialogue d;
  d.id = "example-1";
  Turn u1;
  u1.speaker = Speaker::User;
  u1.tokens = {"Who", "wrote", "Sapiens"};
  u1.mentions = {{2, 3, "BookName", "Sapiens"}};
  u1.domain = "Book";
  u1.intent = "Query";
  Turn s1;
  s1.speaker = Speaker::System;
  s1.tokens = {"Sapiens", "was", "written", "by", "Yuval", "Harari"};
  s1.mentions = {{0, 1, "Title", "Sapiens"}, {4, 6, "Author", "Yuval Harari"}};
  s1.intent = "InformIntent";
  Turn u2;
  u2.speaker = Speaker::User;
  u2.tokens = {"Buy", "his", "latest", "book"};
  u2.mentions = {{1, 2, "Entity", "his"}, {2, 3, "Entity", "latest"}};
  u2.domain = "Book";
  u2.intent = "Buy";
  d.turns = {u1, s1, u2};
  return d;
}

inline RewriteRecord example_record() {
  RewriteRecord r;
  r.dialogue_id = "example-1";
  r.turn_index = 2;
  GoldRewrite g;
  g.tokens = {"Buy", "Yuval", "Harari", "'s", "latest", "book"};
  g.mentions = {{1, 3, "Author", "Yuval Harari"}, {4, 5, "SortType", "latest"}};
  r.gold = {g};
  return r;
}

// Random but always-valid corpora for serialization round trips.
inline Corpus random_corpus(Rng& rng) {
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "epsilon",
                                          "zeta",  "eta",  "theta", "iota",  "kappa"};
  Corpus c;
  int n_dialogues = 1 + static_cast<int>(rng.below(4));
  for (int di = 0; di < n_dialogues; ++di) {
    Dialogue d;
    d.id = "rand-" + std::to_string(rng.next() % 100000);
    int n_turns = 1 + 2 * static_cast<int>(rng.below(3));  // odd: ends on the user
    for (int ti = 0; ti < n_turns; ++ti) {
      Turn t;
      t.speaker = ti % 2 == 0 ? Speaker::User : Speaker::System;
      int n_tok = 2 + static_cast<int>(rng.below(6));
      for (int i = 0; i < n_tok; ++i) t.tokens.push_back(rng.choice(words));
      if (rng.below(2) == 0 && n_tok >= 2) {
        int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_tok - 1)));
        t.mentions.push_back({start, start + 1, "slot" + std::to_string(rng.below(3)), ""});
      }
      t.domain = t.speaker == Speaker::User ? "dom" + std::to_string(rng.below(2)) : "";
      t.intent = t.speaker == Speaker::User ? "int" + std::to_string(rng.below(2)) : "inform";
      for (auto& m : t.mentions) {
        m.surface.clear();
        for (int i = m.start; i < m.end; ++i)
          m.surface += (i > m.start ? " " : "") + t.tokens[static_cast<std::size_t>(i)];
      }
      d.turns.push_back(std::move(t));
    }
    c.dialogues.push_back(std::move(d));
    if (rng.below(2) == 0) {
      RewriteRecord r;
      r.dialogue_id = c.dialogues.back().id;
      r.turn_index = 0;
      GoldRewrite g;
      int n_tok = 1 + static_cast<int>(rng.below(4));
      for (int i = 0; i < n_tok; ++i) g.tokens.push_back(rng.choice(words));
      r.gold.push_back(std::move(g));
      c.records.push_back(std::move(r));
    }
  }
  return c;
}

}  // namespace test_helpers
