#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rewriter/error.hpp"
#include "rewriter/rng.hpp"

namespace rewriter {

enum class Speaker { User, System };

// A token span annotated with a slot key. `surface` is derived from the
// owning turn's tokens and is not stored on disk.
struct EntityMention {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  std::string slot_key;
  std::string surface;

  bool operator==(const EntityMention&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::User;
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;
  std::string domain;
  std::string intent;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;  // strictly alternating, user first

  bool operator==(const Dialogue&) const = default;
};

struct GoldRewrite {
  std::vector<std::string> tokens;
  std::vector<EntityMention> mentions;

  bool operator==(const GoldRewrite&) const = default;
};

struct RewriteRecord {
  std::string dialogue_id;
  int turn_index = 0;  // flat index into Dialogue::turns; must be a user turn
  std::vector<GoldRewrite> gold;  // J >= 1 references

  bool operator==(const RewriteRecord&) const = default;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::vector<RewriteRecord> records;

  const Dialogue* find_dialogue(const std::string& id) const;
};

// Throws ValidationError naming the dialogue when an invariant is broken.
void validate_dialogue(const Dialogue& d);
void validate_corpus(const Corpus& c);

// JSON Lines corpus file: dialogue records and rewrite records mixed, one
// object per line. See README for the schema.
Corpus load_corpus(const std::string& path);
void save_corpus(const std::string& path, const Corpus& corpus);
std::string serialize_corpus(const Corpus& corpus);  // canonical form

// Gold-rewrite templates keyed by (domain, intent, slot-key set). Template
// tokens equal to one of the key's slot keys are placeholders.
class TemplateBank {
 public:
  using Selector = std::function<std::size_t(std::size_t)>;  // index in [0, n)

  void add(const std::string& domain, const std::string& intent,
           std::vector<std::string> slot_keys, const std::string& template_text);

  // Replaces each placeholder with the (possibly multi-token) surface for its
  // slot key. The template is chosen by `choose` among the key's alternatives.
  std::vector<std::string> expand(const std::string& domain, const std::string& intent,
                                  const std::map<std::string, std::string>& slots,
                                  const Selector& choose) const;

  struct Expansion {
    std::vector<std::string> tokens;
    // slot key and the token span its surface occupies in `tokens`
    std::vector<std::tuple<std::string, int, int>> spans;
  };
  Expansion expand_with_spans(const std::string& domain, const std::string& intent,
                              const std::map<std::string, std::string>& slots,
                              const Selector& choose) const;

  std::size_t alternatives(const std::string& domain, const std::string& intent,
                           const std::vector<std::string>& slot_keys) const;

 private:
  struct Key {
    std::string domain, intent;
    std::vector<std::string> slot_keys;  // sorted
    bool operator<(const Key& o) const {
      return std::tie(domain, intent, slot_keys) < std::tie(o.domain, o.intent, o.slot_keys);
    }
  };
  const std::vector<std::vector<std::string>>& find(const Key& k) const;

  std::map<Key, std::vector<std::vector<std::string>>> templates_;
};

// Size knobs for the synthetic corpus.
struct SynthSpec {
  int min_user_turns = 2;
  int max_user_turns = 4;
  int max_references = 2;  // J is drawn from [1, max_references]
};

// Deterministic desk-scale corpus: later user turns refer to earlier
// entities by pronoun or ellipsis and the gold rewrites resolve them, built
// from the same template bank the gold-generation pipeline uses.
Corpus generate_synthetic(std::uint64_t seed, int n_dialogues, const SynthSpec& spec = {});

// The hard-coded bank behind generate_synthetic (3 domains x 4 intents).
const TemplateBank& synthetic_template_bank();

}  // namespace rewriter
