#include "rewriter/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rewriter {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Ngram, long> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[Ngram(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  return counts;
}

std::set<std::string> entity_set(const std::vector<std::string>& toks) {
  std::set<std::string> out;
  for (const auto& t : toks)
    if (is_canonical_token(t)) out.insert(t);
  return out;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::vector<std::string>>>& references) {
  if (hypotheses.empty()) throw UsageError("corpus_bleu: empty hypothesis list");
  if (hypotheses.size() != references.size())
    throw UsageError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                     std::to_string(references.size()) + " reference sets");

  constexpr std::size_t kMaxN = 4;
  long matches[kMaxN] = {0, 0, 0, 0};
  long totals[kMaxN] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& refs = references[i];
    if (refs.empty()) throw UsageError("corpus_bleu: empty reference set at " + std::to_string(i));

    hyp_len += static_cast<long>(hyp.size());
    // closest reference length; ties resolved toward the shorter reference
    long best = static_cast<long>(refs[0].size());
    for (const auto& r : refs) {
      long len = static_cast<long>(r.size());
      long d_new = std::labs(len - static_cast<long>(hyp.size()));
      long d_old = std::labs(best - static_cast<long>(hyp.size()));
      if (d_new < d_old || (d_new == d_old && len < best)) best = len;
    }
    ref_len += best;

    for (std::size_t n = 1; n <= kMaxN; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      std::map<Ngram, long> clip;
      for (const auto& r : refs)
        for (const auto& [ng, c] : ngram_counts(r, n)) clip[ng] = std::max(clip[ng], c);
      for (const auto& [ng, c] : hyp_counts) {
        totals[n - 1] += c;
        auto it = clip.find(ng);
        if (it != clip.end()) matches[n - 1] += std::min(c, it->second);
      }
    }
  }

  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    double num = static_cast<double>(matches[n - 1]);
    double den = static_cast<double>(totals[n - 1]);
    double p = den > 0 ? num / den : 0.0;
    if (p == 0.0) {
      if (n == 1) return 0.0;
      p = (num + 1.0) / (den + 1.0);
    }
    log_sum += std::log(p);
  }
  double bp = hyp_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                  : 1.0;
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

double precision(const BucketCounts& c) {
  return c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
}

double recall(const BucketCounts& c) {
  return c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
}

double f1(const BucketCounts& c) {
  double p = precision(c), r = recall(c);
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::map<std::string, int> entity_buckets(const SerializedContext& ctx) {
  std::map<std::string, int> out;
  for (const auto& tok : ctx.tokens)
    if (tok.is_entity) out[tok.token] = tok.distance;
  return out;
}

EntityF1Counts entity_f1(const std::vector<std::string>& hyp,
                         const std::vector<std::vector<std::string>>& golds,
                         const std::map<std::string, int>& buckets) {
  if (golds.empty()) throw UsageError("entity_f1: empty reference set");
  EntityF1Counts out;

  std::set<std::string> gold = entity_set(golds[0]);
  for (std::size_t j = 1; j < golds.size(); ++j)
    if (entity_set(golds[j]) != gold) {
      out.consistent = false;
      break;
    }
  std::set<std::string> hyp_set = entity_set(hyp);

  auto bucket_of = [&](const std::string& tok) {
    auto it = buckets.find(tok);
    if (it == buckets.end())
      throw DataError("entity_f1: gold entity without a source distance: " + tok);
    return it->second;
  };

  for (const auto& e : gold) {
    if (hyp_set.count(e))
      ++out.bucket[static_cast<std::size_t>(bucket_of(e))].tp;
    else
      ++out.bucket[static_cast<std::size_t>(bucket_of(e))].fn;
  }
  for (const auto& e : hyp_set) {
    if (gold.count(e)) continue;
    auto it = buckets.find(e);
    if (it == buckets.end())
      ++out.unknown_fp;  // hypothesis hallucinated an entity the table lacks
    else
      ++out.bucket[static_cast<std::size_t>(it->second)].fp;
  }
  return out;
}

BucketCounts EvalReport::overall() const {
  BucketCounts all;
  for (const auto& b : buckets) all += b;
  return all;
}

EvalReport aggregate(const std::vector<EvalRecord>& records) {
  EvalReport report;
  report.n_records = static_cast<long>(records.size());
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::vector<std::string>>> refs;
  for (const auto& r : records) {
    hyps.push_back(r.hyp_surface);
    refs.push_back(r.ref_surfaces);
    for (int b = 0; b < kBuckets; ++b)
      report.buckets[static_cast<std::size_t>(b)] += r.f1.bucket[static_cast<std::size_t>(b)];
    report.unknown_fp += r.f1.unknown_fp;
    report.inconsistent_records += r.f1.consistent ? 0 : 1;
  }
  report.bleu = records.empty() ? 0.0 : corpus_bleu(hyps, refs);
  return report;
}

std::string render_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "bucket     P       R       F1      tp      fp      fn\n";
  const char* names[kBuckets] = {"d=0", "d=1", "d=2", "d>=3"};
  auto row = [&](const char* name, const BucketCounts& c) {
    os << std::left << std::setw(9) << name << std::right;
    if (c.empty())
      os << "     N/A     N/A     N/A";
    else
      os << "  " << precision(c) << "  " << recall(c) << "  " << f1(c);
    os << "  " << std::setw(6) << c.tp << "  " << std::setw(6) << c.fp << "  " << std::setw(6)
       << c.fn << '\n';
  };
  for (int b = 0; b < kBuckets; ++b) row(names[b], report.buckets[static_cast<std::size_t>(b)]);
  row("overall", report.overall());
  os << "unknown-entity fp: " << report.unknown_fp << '\n';
  os << "records: " << report.n_records << " (" << report.inconsistent_records
     << " with inconsistent references)\n";
  os << "BLEU: " << report.bleu << '\n';
  return os.str();
}

std::vector<std::string> relexicalize_lenient(const std::vector<std::string>& tokens,
                                              const EntityTable& table) {
  std::vector<std::string> out;
  for (const auto& tok : tokens) {
    if (is_canonical_token(tok)) {
      if (auto s = table.surface_of(tok)) {
        std::istringstream ss(*s);
        std::string piece;
        while (ss >> piece) out.push_back(piece);
        continue;
      }
    }
    out.push_back(tok);
  }
  return out;
}

EvalReport evaluate_rewrites(const Corpus& corpus,
                             const std::vector<std::vector<std::string>>& hyp_delex,
                             const Lexicons& lex, int window) {
  if (hyp_delex.size() != corpus.records.size())
    throw UsageError("evaluate_rewrites: " + std::to_string(hyp_delex.size()) +
                     " hypotheses for " + std::to_string(corpus.records.size()) + " records");
  std::vector<EvalRecord> evals(corpus.records.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(corpus.records.size()); ++i) {
    try {
      std::size_t idx = static_cast<std::size_t>(i);
      const RewriteRecord& rec = corpus.records[idx];
      const Dialogue* d = corpus.find_dialogue(rec.dialogue_id);
      if (!d) throw DataError("rewrite record references unknown dialogue " + rec.dialogue_id);
      SerializedContext ctx = build_context(*d, rec.turn_index, window, lex);
      std::vector<std::vector<std::string>> golds_delex;
      std::vector<std::vector<std::string>> refs;
      for (const auto& g : rec.gold) {
        golds_delex.push_back(delexicalize_gold(g, ctx));
        refs.push_back(g.tokens);
      }
      EvalRecord ev;
      ev.f1 = entity_f1(hyp_delex[idx], golds_delex, entity_buckets(ctx));
      ev.hyp_surface = relexicalize_lenient(hyp_delex[idx], ctx.table);
      ev.ref_surfaces = std::move(refs);
      evals[idx] = std::move(ev);
    } catch (...) {
#pragma omp critical(eval_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return aggregate(evals);
}

std::string render_line(const EvalReport& report) {
  nlohmann::json j;
  j["bleu"] = report.bleu;
  const char* keys[kBuckets] = {"d0", "d1", "d2", "d3p"};
  for (int b = 0; b < kBuckets; ++b) {
    const BucketCounts& c = report.buckets[static_cast<std::size_t>(b)];
    std::string k = keys[b];
    j[k + "_p"] = precision(c);
    j[k + "_r"] = recall(c);
    j[k + "_f1"] = f1(c);
    j[k + "_tp"] = c.tp;
    j[k + "_fp"] = c.fp;
    j[k + "_fn"] = c.fn;
  }
  BucketCounts all = report.overall();
  j["overall_p"] = precision(all);
  j["overall_r"] = recall(all);
  j["overall_f1"] = f1(all);
  j["unknown_fp"] = report.unknown_fp;
  j["n_records"] = report.n_records;
  j["inconsistent_records"] = report.inconsistent_records;
  return j.dump();
}

}  // namespace rewriter
