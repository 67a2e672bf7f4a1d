#pragma once

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "rewriter/corpus.hpp"

namespace rewriter {

// Reserved marker tokens. Turn markers are derived from annotations
// (e.g. SYSTEM INFORMINTENT); END closes every serialized context.
inline constexpr const char* kEndToken = "END";
inline constexpr const char* kUserMarker = "USER";
inline constexpr const char* kSystemMarker = "SYSTEM";
inline constexpr const char* kUnkIntentMarker = "UNKINTENT";
inline constexpr const char* kUnkSlotKey = "UNK";

enum class EntityNamespace { User, System };

struct CanonicalEntity {
  EntityNamespace ns = EntityNamespace::User;
  int index = 0;  // first-appearance order within the namespace, from 1
  std::string slot_key;  // UNK when the entity originates in the current utterance

  std::string token() const {
    return (ns == EntityNamespace::User ? "U_" : "S_") + std::to_string(index);
  }
};

bool is_canonical_token(const std::string& tok);

// Bijection between canonical entities and distinct surface strings, one
// namespace per speaker role. A surface seen again in the same namespace
// keeps its existing canonical token.
class EntityTable {
 public:
  // Returns the canonical entity for (ns, surface), assigning the next index
  // on first appearance. slot_key is recorded only on first assignment.
  CanonicalEntity assign(EntityNamespace ns, const std::string& surface,
                         const std::string& slot_key);

  std::optional<CanonicalEntity> find(EntityNamespace ns, const std::string& surface) const;
  std::optional<std::string> surface_of(const std::string& canonical_token) const;
  std::optional<CanonicalEntity> entity_of(const std::string& canonical_token) const;

  struct Entry {
    CanonicalEntity entity;
    std::string surface;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  int count(EntityNamespace ns) const;

 private:
  std::vector<Entry> entries_;  // assignment order
};

enum class TokenSpeaker { User, System, Marker };

struct SyntaxFlags {
  bool question = false;
  bool prps = false;
  bool psbl = false;

  bool operator==(const SyntaxFlags&) const = default;
  std::string str() const;  // "QUESTION|PSBL" style, "-" when empty
};

struct ContextToken {
  std::string token;
  TokenSpeaker speaker = TokenSpeaker::Marker;
  std::string slot_key;  // empty when the token carries no slot feature
  SyntaxFlags flags;
  int copy_label = 0;   // e_l in {-1, 0, +1}; nonzero only on entity tokens
  int distance = -1;    // bucket 0..3 (3 = ">=3"); -1 on non-entity tokens
  int turn_index = -1;  // flat turn the token came from; markers use their turn
  bool is_entity = false;
};

// The single-sequence model input x_t: delexicalized tokens with marker
// tokens and END, per-token feature channels, copy labels and distance
// buckets, plus the entity table that built it.
struct SerializedContext {
  std::vector<ContextToken> tokens;
  EntityTable table;
  int current_turn = 0;     // flat index of u_t
  int window_first_turn = 0;

  std::vector<std::string> token_strings() const;
};

struct DelexTurn {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_keys;  // parallel; empty = no slot feature
  std::vector<bool> is_entity;
};

// Replaces annotated mentions with canonical entity tokens (namespace by
// speaker role, indices by first appearance) and lower-cases plain words.
// Mentions in the current utterance get slot key UNK.
std::pair<std::vector<DelexTurn>, EntityTable> index_entities(const Dialogue& d, int t);

// Single token stream over the covered turns: marker tokens, delexicalized
// turn tokens, END. window is the number of user turns covered ending at t;
// kFullWindow covers the whole prefix.
inline constexpr int kFullWindow = 0;
SerializedContext serialize_context(const Dialogue& d, int t, int window = kFullWindow);

struct Lexicons {
  std::unordered_set<std::string> question_words;
  std::unordered_set<std::string> possessive_pronouns;
  std::unordered_set<std::string> psbl;  // "possessible" nouns

  static Lexicons load(const std::string& question_path, const std::string& prps_path,
                       const std::string& psbl_path);
};

std::unordered_set<std::string> load_word_list(const std::string& path);

// QUESTION / PRPS / PSBL flags by exact token match; independent, may co-occur.
std::vector<SyntaxFlags> tag_syntax_features(const std::vector<std::string>& tokens,
                                             const Lexicons& lex);
void tag_syntax_features(SerializedContext& ctx, const Lexicons& lex);

// Buckets every entity token by how many utterances back its closest
// occurrence lies: 0 current user turn, 1 last system turn, 2 last user
// turn, 3 anything earlier.
void assign_distance(SerializedContext& ctx);

// Gold mention surfaces resolved against the table; when a surface exists in
// both namespaces the occurrence closest to the current turn wins.
std::optional<CanonicalEntity> resolve_gold_surface(const SerializedContext& ctx,
                                                    const std::string& surface);

// Gold rewrite tokens with mentions collapsed to canonical tokens and plain
// words lower-cased.
std::vector<std::string> delexicalize_gold(const GoldRewrite& g, const SerializedContext& ctx);

struct CopyLabelResult {
  bool consistent = true;  // false when reference entity sets disagree
  std::vector<std::string> gold_entities;  // canonical tokens of reference 1
};

// e_l = +1 on entity tokens in the gold set, -1 on entity tokens outside it,
// 0 elsewhere. The gold set comes from the first reference; other references
// are checked against it.
CopyLabelResult derive_copy_labels(SerializedContext& ctx, const RewriteRecord& record);

// Inverse of the delexicalization: canonical tokens back to surfaces, joined
// with single spaces. Unknown canonical tokens raise DataError.
std::string relexicalize(const std::vector<std::string>& tokens, const EntityTable& table);

// serialize + tag + distance in one call.
SerializedContext build_context(const Dialogue& d, int t, int window, const Lexicons& lex);

// One token per line: token TAB speaker TAB slot_key TAB flags TAB e TAB d.
std::string dump_context(const SerializedContext& ctx);

}  // namespace rewriter
