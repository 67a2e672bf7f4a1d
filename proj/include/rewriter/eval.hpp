#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "rewriter/preprocess.hpp"

namespace rewriter {

// Corpus-level BLEU-4 in [0, 100]: geometric mean of modified n-gram
// precisions with multi-reference clipping and a brevity penalty against the
// closest reference length (ties to the shorter). For n >= 2 a precision
// whose unsmoothed value is zero gets add-1 smoothing on numerator and
// denominator; a zero unigram precision keeps the score at 0.
double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::vector<std::string>>>& references);

struct BucketCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  BucketCounts& operator+=(const BucketCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool empty() const { return tp == 0 && fp == 0 && fn == 0; }
};

double precision(const BucketCounts& c);
double recall(const BucketCounts& c);
double f1(const BucketCounts& c);

// Buckets are distance buckets: 0, 1, 2 and 3 meaning ">= 3".
inline constexpr int kBuckets = 4;

struct EntityF1Counts {
  std::array<BucketCounts, kBuckets> bucket;
  long unknown_fp = 0;      // hypothesis entity tokens foreign to the table
  bool consistent = true;   // references agreed on their entity set
};

// Set-based comparison of canonical entity tokens between a hypothesized
// delexicalized rewrite and the reference set. The gold set comes from the
// first reference; every entity is bucketed by its closest source
// occurrence, supplied in entity_buckets.
EntityF1Counts entity_f1(const std::vector<std::string>& hyp,
                         const std::vector<std::vector<std::string>>& golds,
                         const std::map<std::string, int>& entity_buckets);

// token -> distance bucket for every entity of a serialized context.
std::map<std::string, int> entity_buckets(const SerializedContext& ctx);

struct EvalRecord {
  std::vector<std::string> hyp_surface;                 // for BLEU
  std::vector<std::vector<std::string>> ref_surfaces;   // all J references
  EntityF1Counts f1;
};

struct EvalReport {
  double bleu = 0.0;
  std::array<BucketCounts, kBuckets> buckets;
  long unknown_fp = 0;
  long n_records = 0;
  long inconsistent_records = 0;

  BucketCounts overall() const;
};

// Micro-aggregation: counts are summed across records, then P/R/F1 derived;
// BLEU is computed corpus-level over the same hypotheses.
EvalReport aggregate(const std::vector<EvalRecord>& records);

// Human-readable table (P/R/F1 per distance bucket) and a single-line
// machine-readable JSON record with fixed field names bleu, d0_p ... d3p_f1.
std::string render_table(const EvalReport& report);
std::string render_line(const EvalReport& report);

// Entity tokens without a table entry pass through verbatim.
std::vector<std::string> relexicalize_lenient(const std::vector<std::string>& tokens,
                                              const EntityTable& table);

// Scores one delexicalized hypothesis per corpus record: Entity F1 on
// canonical tokens, BLEU on relexicalized surfaces against all references.
EvalReport evaluate_rewrites(const Corpus& corpus,
                             const std::vector<std::vector<std::string>>& hyp_delex,
                             const Lexicons& lex, int window = kFullWindow);

}  // namespace rewriter
