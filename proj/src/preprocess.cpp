#include "rewriter/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace rewriter {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// BOOKQUERY-style marker: upper-cased with non-alphanumerics dropped.
std::string marker_token(const std::string& s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

int raw_distance(const SerializedContext& ctx, const ContextToken& tok) {
  return ctx.current_turn - tok.turn_index;
}

}  // namespace

bool is_canonical_token(const std::string& tok) {
  if (tok.size() < 3 || (tok[0] != 'U' && tok[0] != 'S') || tok[1] != '_') return false;
  if (tok[2] == '0') return false;
  for (std::size_t i = 2; i < tok.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
  return true;
}

CanonicalEntity EntityTable::assign(EntityNamespace ns, const std::string& surface,
                                    const std::string& slot_key) {
  if (auto existing = find(ns, surface)) return *existing;
  CanonicalEntity e;
  e.ns = ns;
  e.index = count(ns) + 1;
  e.slot_key = slot_key;
  entries_.push_back({e, surface});
  return e;
}

std::optional<CanonicalEntity> EntityTable::find(EntityNamespace ns,
                                                 const std::string& surface) const {
  for (const auto& en : entries_)
    if (en.entity.ns == ns && en.surface == surface) return en.entity;
  return std::nullopt;
}

std::optional<std::string> EntityTable::surface_of(const std::string& canonical_token) const {
  for (const auto& en : entries_)
    if (en.entity.token() == canonical_token) return en.surface;
  return std::nullopt;
}

std::optional<CanonicalEntity> EntityTable::entity_of(const std::string& canonical_token) const {
  for (const auto& en : entries_)
    if (en.entity.token() == canonical_token) return en.entity;
  return std::nullopt;
}

int EntityTable::count(EntityNamespace ns) const {
  int n = 0;
  for (const auto& en : entries_) n += en.entity.ns == ns ? 1 : 0;
  return n;
}

std::string SyntaxFlags::str() const {
  std::string out;
  auto app = [&](const char* name) {
    if (!out.empty()) out += '|';
    out += name;
  };
  if (question) app("QUESTION");
  if (prps) app("PRPS");
  if (psbl) app("PSBL");
  return out.empty() ? "-" : out;
}

std::vector<std::string> SerializedContext::token_strings() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.token);
  return out;
}

std::pair<std::vector<DelexTurn>, EntityTable> index_entities(const Dialogue& d, int t) {
  if (t < 0 || t >= static_cast<int>(d.turns.size()) || d.turns[t].speaker != Speaker::User)
    throw UsageError("index_entities: turn " + std::to_string(t) + " is not a user turn of " +
                     d.id);
  EntityTable table;
  std::vector<DelexTurn> out;
  for (int ti = 0; ti <= t; ++ti) {
    const Turn& turn = d.turns[ti];
    std::vector<EntityMention> mentions = turn.mentions;
    std::sort(mentions.begin(), mentions.end(),
              [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
    int prev_end = 0;
    for (const auto& m : mentions) {
      if (m.start < prev_end)
        throw ValidationError("dialogue " + d.id + " turn " + std::to_string(ti) +
                              ": overlapping mentions");
      prev_end = m.end;
    }
    EntityNamespace ns =
        turn.speaker == Speaker::User ? EntityNamespace::User : EntityNamespace::System;
    bool current = ti == t;
    DelexTurn dt;
    std::size_t mi = 0;
    for (int pos = 0; pos < static_cast<int>(turn.tokens.size());) {
      if (mi < mentions.size() && mentions[mi].start == pos) {
        const auto& m = mentions[mi];
        // The rewriter runs before SLU on u_t, so current-turn mentions
        // carry no slot information.
        std::string key = current ? kUnkSlotKey : m.slot_key;
        CanonicalEntity e = table.assign(ns, m.surface, key);
        dt.tokens.push_back(e.token());
        dt.slot_keys.push_back(key);
        dt.is_entity.push_back(true);
        pos = m.end;
        ++mi;
      } else {
        dt.tokens.push_back(lower(turn.tokens[pos]));
        dt.slot_keys.push_back("");
        dt.is_entity.push_back(false);
        ++pos;
      }
    }
    out.push_back(std::move(dt));
  }
  return {std::move(out), std::move(table)};
}

SerializedContext serialize_context(const Dialogue& d, int t, int window) {
  if (t < 0 || t >= static_cast<int>(d.turns.size()) || d.turns[t].speaker != Speaker::User)
    throw UsageError("serialize_context: turn " + std::to_string(t) + " is not a user turn of " +
                     d.id);
  if (window < 0) throw UsageError("serialize_context: window must be >= 1 (0 = full)");

  auto [turns, table] = index_entities(d, t);

  // window counts user turns ending at t; each contributes the system turn
  // that follows it inside the prefix.
  int first = 0;
  if (window != kFullWindow) {
    int users_seen = 0;
    for (int ti = t; ti >= 0; --ti) {
      if (d.turns[ti].speaker == Speaker::User) {
        ++users_seen;
        first = ti;
        if (users_seen == window) break;
      }
    }
  }

  SerializedContext ctx;
  ctx.current_turn = t;
  ctx.window_first_turn = first;
  ctx.table = table;

  auto push_marker = [&](const std::string& tok, int turn_idx) {
    ContextToken c;
    c.token = tok;
    c.speaker = TokenSpeaker::Marker;
    c.turn_index = turn_idx;
    ctx.tokens.push_back(std::move(c));
  };

  for (int ti = first; ti <= t; ++ti) {
    const Turn& turn = d.turns[ti];
    if (turn.speaker == Speaker::System) {
      push_marker(kSystemMarker, ti);
      push_marker(marker_token(turn.intent), ti);
    } else if (ti == t) {
      push_marker(kUserMarker, ti);
      push_marker(kUnkIntentMarker, ti);
    } else if (ti == first) {
      push_marker(marker_token(turn.domain + turn.intent), ti);
    } else {
      push_marker(kUserMarker, ti);
      push_marker(marker_token(turn.intent), ti);
    }
    const DelexTurn& dt = turns[ti];
    for (std::size_t i = 0; i < dt.tokens.size(); ++i) {
      ContextToken c;
      c.token = dt.tokens[i];
      c.speaker = turn.speaker == Speaker::User ? TokenSpeaker::User : TokenSpeaker::System;
      c.slot_key = dt.slot_keys[i];
      c.is_entity = dt.is_entity[i];
      c.turn_index = ti;
      ctx.tokens.push_back(std::move(c));
    }
  }
  push_marker(kEndToken, t);
  return ctx;
}

std::unordered_set<std::string> load_word_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open word list: " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

Lexicons Lexicons::load(const std::string& question_path, const std::string& prps_path,
                        const std::string& psbl_path) {
  Lexicons lex;
  lex.question_words = load_word_list(question_path);
  lex.possessive_pronouns = load_word_list(prps_path);
  lex.psbl = load_word_list(psbl_path);
  if (lex.question_words.empty()) throw ConfigError("empty question-word list: " + question_path);
  if (lex.possessive_pronouns.empty())
    throw ConfigError("empty possessive-pronoun list: " + prps_path);
  if (lex.psbl.empty()) throw ConfigError("empty PSBL lexicon: " + psbl_path);
  return lex;
}

std::vector<SyntaxFlags> tag_syntax_features(const std::vector<std::string>& tokens,
                                             const Lexicons& lex) {
  if (lex.psbl.empty() || lex.question_words.empty() || lex.possessive_pronouns.empty())
    throw ConfigError("tag_syntax_features: lexicons must be nonempty");
  std::vector<SyntaxFlags> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out[i].question = lex.question_words.count(tokens[i]) > 0;
    out[i].prps = lex.possessive_pronouns.count(tokens[i]) > 0;
    out[i].psbl = lex.psbl.count(tokens[i]) > 0;
  }
  return out;
}

void tag_syntax_features(SerializedContext& ctx, const Lexicons& lex) {
  auto flags = tag_syntax_features(ctx.token_strings(), lex);
  for (std::size_t i = 0; i < flags.size(); ++i) ctx.tokens[i].flags = flags[i];
}

void assign_distance(SerializedContext& ctx) {
  // Minimum raw distance per canonical token, then bucketed to {0,1,2,3+}.
  std::map<std::string, int> min_raw;
  for (const auto& tok : ctx.tokens) {
    if (!tok.is_entity) continue;
    int raw = raw_distance(ctx, tok);
    auto it = min_raw.find(tok.token);
    if (it == min_raw.end() || raw < it->second) min_raw[tok.token] = raw;
  }
  for (auto& tok : ctx.tokens) {
    if (!tok.is_entity) continue;
    tok.distance = std::min(min_raw.at(tok.token), 3);
  }
}

std::optional<CanonicalEntity> resolve_gold_surface(const SerializedContext& ctx,
                                                    const std::string& surface) {
  std::optional<CanonicalEntity> best;
  int best_raw = std::numeric_limits<int>::max();
  for (EntityNamespace ns : {EntityNamespace::User, EntityNamespace::System}) {
    auto e = ctx.table.find(ns, surface);
    if (!e) continue;
    std::string tok = e->token();
    for (const auto& c : ctx.tokens) {
      if (c.is_entity && c.token == tok) {
        int raw = raw_distance(ctx, c);
        if (raw < best_raw) {
          best_raw = raw;
          best = e;
        }
      }
    }
  }
  return best;
}

std::vector<std::string> delexicalize_gold(const GoldRewrite& g, const SerializedContext& ctx) {
  std::vector<EntityMention> mentions = g.mentions;
  std::sort(mentions.begin(), mentions.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
  std::vector<std::string> out;
  std::size_t mi = 0;
  for (int pos = 0; pos < static_cast<int>(g.tokens.size());) {
    if (mi < mentions.size() && mentions[mi].start == pos) {
      const auto& m = mentions[mi];
      auto e = resolve_gold_surface(ctx, m.surface);
      if (!e)
        throw DataError("gold rewrite references an entity not in the table: \"" + m.surface +
                        "\"");
      out.push_back(e->token());
      pos = m.end;
      ++mi;
    } else {
      out.push_back(lower(g.tokens[pos]));
      ++pos;
    }
  }
  return out;
}

CopyLabelResult derive_copy_labels(SerializedContext& ctx, const RewriteRecord& record) {
  if (record.gold.empty()) throw DataError("rewrite record without gold rewrites");

  auto entity_set = [&](const GoldRewrite& g) {
    std::vector<std::string> s;
    for (const auto& m : g.mentions) {
      auto e = resolve_gold_surface(ctx, m.surface);
      if (!e)
        throw DataError("gold rewrite references an entity not in the table: \"" + m.surface +
                        "\"");
      s.push_back(e->token());
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  };

  CopyLabelResult res;
  res.gold_entities = entity_set(record.gold[0]);
  for (std::size_t j = 1; j < record.gold.size(); ++j)
    if (entity_set(record.gold[j]) != res.gold_entities) {
      res.consistent = false;
      break;
    }

  for (auto& tok : ctx.tokens) {
    if (!tok.is_entity) {
      tok.copy_label = 0;
      continue;
    }
    bool in_gold = std::binary_search(res.gold_entities.begin(), res.gold_entities.end(),
                                      tok.token);
    tok.copy_label = in_gold ? 1 : -1;
  }
  return res;
}

std::string relexicalize(const std::vector<std::string>& tokens, const EntityTable& table) {
  std::string out;
  for (const auto& tok : tokens) {
    std::string piece = tok;
    if (is_canonical_token(tok)) {
      auto s = table.surface_of(tok);
      if (!s) throw DataError("unresolvable entity token: " + tok);
      piece = *s;
    }
    if (!out.empty()) out += ' ';
    out += piece;
  }
  return out;
}

SerializedContext build_context(const Dialogue& d, int t, int window, const Lexicons& lex) {
  SerializedContext ctx = serialize_context(d, t, window);
  tag_syntax_features(ctx, lex);
  assign_distance(ctx);
  return ctx;
}

std::string dump_context(const SerializedContext& ctx) {
  std::ostringstream os;
  for (const auto& tok : ctx.tokens) {
    const char* speaker = tok.speaker == TokenSpeaker::User
                              ? "User"
                              : (tok.speaker == TokenSpeaker::System ? "System" : "Marker");
    os << tok.token << '\t' << speaker << '\t' << (tok.slot_key.empty() ? "-" : tok.slot_key)
       << '\t' << tok.flags.str() << '\t' << tok.copy_label << '\t';
    if (tok.distance < 0)
      os << '-';
    else if (tok.distance >= 3)
      os << "3+";
    else
      os << tok.distance;
    os << '\n';
  }
  return os.str();
}

}  // namespace rewriter
