#include <algorithm>
#include <numeric>
#include <sstream>

#include "rewriter/corpus.hpp"

namespace rewriter {

namespace {

// Slot keys of the synthetic schema. item_type fills templates but is a
// plain word, never an annotated entity.
const std::vector<std::string> kEntityKeys = {"creator", "title",  "sort_type", "place",
                                              "genre",   "date",   "price"};

bool is_entity_key(const std::string& k) {
  return std::find(kEntityKeys.begin(), kEntityKeys.end(), k) != kEntityKeys.end();
}

const std::vector<std::string> kBookTitles = {"sapiens", "bel canto", "river of doubt",
                                              "homo deus"};
const std::vector<std::string> kMusicTitles = {"kind of blue", "come away", "blue train",
                                               "golden hour"};
const std::vector<std::string> kEateryTitles = {"bamboo garden", "copper kettle", "luna cafe",
                                                "red lantern"};
const std::vector<std::string> kCreators = {"yuval harari", "ann patchett",  "miles davis",
                                            "norah jones",  "brandon ellis", "ella king"};
const std::vector<std::string> kPlaces = {"seattle", "redmond", "portland", "bellevue"};
const std::vector<std::string> kGenres = {"thai", "italian", "mexican", "vegan"};
const std::vector<std::string> kSorts = {"latest", "newest", "most recent", "best"};
const std::vector<std::string> kDates = {"friday", "saturday", "tomorrow", "tonight"};
const std::vector<std::string> kPrices = {"ten dollars", "twenty dollars", "five dollars",
                                          "forty dollars"};

std::string join_range(const std::vector<std::string>& toks, std::size_t start,
                       std::size_t end) {
  std::string out;
  for (std::size_t i = start; i < end; ++i) {
    if (i > start) out += ' ';
    out += toks[i];
  }
  return out;
}

struct Piece {
  std::string text;
  std::string key;         // empty: plain words
  bool candidate = false;  // true: a real entity later turns may refer back to
};

Piece words(const std::string& text) { return {text, "", false}; }
Piece entity(const std::string& text, const std::string& key) { return {text, key, true}; }
// annotated span that is not a referable entity (pronouns, selectors)
Piece anaphor(const std::string& text, const std::string& key) { return {text, key, false}; }

struct EntityOcc {
  std::string surface;
  std::string key;
  int turn;
};

struct DialogueBuilder {
  Dialogue d;
  std::vector<EntityOcc> candidates;

  void push_turn(Speaker sp, const std::vector<Piece>& pieces, const std::string& domain,
                 const std::string& intent) {
    Turn t;
    t.speaker = sp;
    t.domain = domain;
    t.intent = intent;
    for (const Piece& p : pieces) {
      int start = static_cast<int>(t.tokens.size());
      std::istringstream ss(p.text);
      std::string tok;
      while (ss >> tok) t.tokens.push_back(tok);
      if (!p.key.empty()) {
        EntityMention m;
        m.start = start;
        m.end = static_cast<int>(t.tokens.size());
        m.slot_key = p.key;
        m.surface = p.text;
        t.mentions.push_back(m);
        if (p.candidate)
          candidates.push_back({p.text, p.key, static_cast<int>(d.turns.size())});
      }
    }
    d.turns.push_back(std::move(t));
  }

  // Referent the synthetic anaphors resolve to: the most recent (or the
  // first-introduced) real entity with the given slot key.
  std::string closest(const std::string& key) const {
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it)
      if (it->key == key) return it->surface;
    throw DataError("no candidate entity for key " + key);
  }
  std::string earliest(const std::string& key) const {
    for (const auto& c : candidates)
      if (c.key == key) return c.surface;
    throw DataError("no candidate entity for key " + key);
  }
};

// Draw an unused element of `pool`, tracking used indices per dialogue.
std::string draw_distinct(Rng& rng, const std::vector<std::string>& pool,
                          std::vector<bool>& used) {
  std::size_t free_count = 0;
  for (bool u : used) free_count += u ? 0 : 1;
  if (free_count == 0) throw DataError("entity pool exhausted");
  std::size_t k = rng.below(free_count);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (used[i]) continue;
    if (k == 0) {
      used[i] = true;
      return pool[i];
    }
    --k;
  }
  throw DataError("unreachable");
}

TemplateBank build_bank() {
  TemplateBank b;
  for (const std::string& d : {"book", "music"}) {
    const char* verb = (d == "book") ? "wrote" : "sings";
    b.add(d, "query", {"title"}, std::string("who ") + verb + " title");
    b.add(d, "query", {"title"}, std::string("tell me who ") + verb + " title");
    b.add(d, "detail", {"title"}, "when did title come out");
    b.add(d, "detail", {"title"}, "when was title released");
    b.add(d, "check", {"title"}, "how much is title");
    b.add(d, "check", {"title"}, "what does title cost");
    b.add(d, "check", {"title", "date"}, "is title available date");
    b.add(d, "check", {"title", "date"}, "can i get title date");
  }
  b.add("book", "order", {"creator", "sort_type", "item_type"},
        "buy creator 's sort_type item_type");
  b.add("book", "order", {"creator", "sort_type", "item_type"},
        "buy the sort_type item_type by creator");
  b.add("book", "order", {"creator", "sort_type", "item_type"},
        "order creator 's sort_type item_type");
  b.add("music", "order", {"creator", "sort_type", "item_type"},
        "play creator 's sort_type item_type");
  b.add("music", "order", {"creator", "sort_type", "item_type"},
        "play the sort_type item_type by creator");
  b.add("music", "order", {"creator", "sort_type", "item_type"},
        "queue creator 's sort_type item_type");
  b.add("book", "order", {"title"}, "buy title");
  b.add("book", "order", {"title"}, "order title");
  b.add("music", "order", {"title"}, "play title");
  b.add("music", "order", {"title"}, "put on title");

  b.add("eatery", "query", {"title"}, "where is title");
  b.add("eatery", "query", {"title"}, "tell me where title is");
  b.add("eatery", "detail", {"title"}, "how far is title");
  b.add("eatery", "detail", {"title"}, "how far away is title");
  b.add("eatery", "check", {"title"}, "how much is title");
  b.add("eatery", "check", {"title"}, "what does title cost");
  b.add("eatery", "check", {"title", "date"}, "is title open date");
  b.add("eatery", "check", {"title", "date"}, "is title open on date");
  b.add("eatery", "order", {"title"}, "take me to title");
  b.add("eatery", "order", {"title"}, "get me directions to title");
  b.add("eatery", "order", {"item_type", "title"}, "get me a item_type at title");
  b.add("eatery", "order", {"item_type", "title"}, "book a item_type at title");
  return b;
}

RewriteRecord make_record(Rng& rng, const std::string& dialogue_id, int turn_index,
                          const std::string& domain, const std::string& intent,
                          const std::map<std::string, std::string>& slots, int max_references) {
  const TemplateBank& bank = synthetic_template_bank();
  std::vector<std::string> keys;
  for (const auto& [k, _] : slots) keys.push_back(k);
  std::size_t n_alts = bank.alternatives(domain, intent, keys);
  std::size_t j = std::min<std::size_t>(1 + rng.below(static_cast<std::uint64_t>(max_references)),
                                        n_alts);
  std::vector<std::size_t> order(n_alts);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  RewriteRecord rec;
  rec.dialogue_id = dialogue_id;
  rec.turn_index = turn_index;
  for (std::size_t i = 0; i < j; ++i) {
    auto exp = bank.expand_with_spans(domain, intent, slots,
                                      [&](std::size_t) { return order[i]; });
    GoldRewrite g;
    g.tokens = exp.tokens;
    for (const auto& [key, start, end] : exp.spans) {
      if (!is_entity_key(key)) continue;
      EntityMention m;
      m.start = start;
      m.end = end;
      m.slot_key = key;
      m.surface = slots.at(key);
      g.mentions.push_back(m);
    }
    rec.gold.push_back(std::move(g));
  }
  return rec;
}

}  // namespace

const TemplateBank& synthetic_template_bank() {
  static const TemplateBank bank = build_bank();
  return bank;
}

Corpus generate_synthetic(std::uint64_t seed, int n_dialogues, const SynthSpec& spec) {
  if (n_dialogues < 1) throw UsageError("generate_synthetic: n_dialogues must be >= 1");
  if (spec.min_user_turns < 2 || spec.max_user_turns < spec.min_user_turns)
    throw UsageError("generate_synthetic: need 2 <= min_user_turns <= max_user_turns");
  if (spec.max_references < 1) throw UsageError("generate_synthetic: max_references must be >= 1");

  Rng rng = Rng(seed).derive("synth");
  const TemplateBank& bank = synthetic_template_bank();
  Corpus corpus;

  for (int di = 0; di < n_dialogues; ++di) {
    const std::string domain =
        std::vector<std::string>{"book", "music", "eatery"}[rng.below(3)];
    bool venue = domain == "eatery";
    const auto& title_pool = venue ? kEateryTitles : (domain == "book" ? kBookTitles : kMusicTitles);
    std::vector<bool> titles_used(title_pool.size(), false);
    std::vector<bool> creators_used(kCreators.size(), false);
    std::vector<bool> places_used(kPlaces.size(), false);
    const std::string item = venue ? (rng.below(2) ? "booth" : "table")
                                   : (domain == "book" ? (rng.below(2) ? "novel" : "book")
                                                       : (rng.below(2) ? "album" : "song"));

    DialogueBuilder b;
    b.d.id = "synth" + std::to_string(seed) + "-" + std::to_string(di);
    int n_user = spec.min_user_turns +
                 static_cast<int>(rng.below(spec.max_user_turns - spec.min_user_turns + 1));
    std::vector<RewriteRecord> records;

    // Opening exchange: the user introduces a title, the system answers and
    // introduces a creator (or a place for venues).
    std::string t1 = draw_distinct(rng, title_pool, titles_used);
    {
      auto exp = bank.expand_with_spans(domain, "query", {{"title", t1}},
                                        [&](std::size_t n) { return rng.below(n); });
      std::vector<Piece> pieces;
      int pos = 0;
      for (const auto& [key, start, end] : exp.spans) {
        (void)key;
        if (start > pos) pieces.push_back(words(join_range(exp.tokens, pos, start)));
        pieces.push_back(entity(t1, "title"));
        pos = end;
      }
      if (pos < static_cast<int>(exp.tokens.size()))
        pieces.push_back(words(join_range(exp.tokens, pos, exp.tokens.size())));
      b.push_turn(Speaker::User, pieces, domain, "query");
    }
    auto system_intro = [&](const std::string& title) {
      bool remention = rng.below(2) == 0;
      std::vector<Piece> pieces;
      if (remention)
        pieces.push_back(entity(title, "title"));
      else
        pieces.push_back(words("it"));
      if (venue) {
        std::string p = draw_distinct(rng, kPlaces, places_used);
        pieces.push_back(words("is in"));
        pieces.push_back(entity(p, "place"));
      } else {
        std::string c = draw_distinct(rng, kCreators, creators_used);
        pieces.push_back(words(domain == "book" ? "was written by" : "is by"));
        pieces.push_back(entity(c, "creator"));
      }
      b.push_turn(Speaker::System, pieces, "", "InformIntent");
    };
    system_intro(t1);

    // Middle exchanges.
    for (int round = 0; round < n_user - 2; ++round) {
      int t = static_cast<int>(b.d.turns.size());
      int kind = static_cast<int>(rng.below(venue ? 2 : 3));
      if (kind == 0) {  // topic shift to a fresh title
        std::string t2 = draw_distinct(rng, title_pool, titles_used);
        b.push_turn(Speaker::User, {words("what about"), entity(t2, "title")}, domain, "query");
        records.push_back(make_record(rng, b.d.id, t, domain, "query", {{"title", t2}},
                                      spec.max_references));
        if (venue) {
          bool remention = rng.below(2) == 0;
          std::string g = kGenres[rng.below(kGenres.size())];
          std::string p = draw_distinct(rng, kPlaces, places_used);
          std::vector<Piece> pieces;
          pieces.push_back(remention ? entity(t2, "title") : words("it"));
          pieces.push_back(words("is a"));
          pieces.push_back(entity(g, "genre"));
          pieces.push_back(words("place in"));
          pieces.push_back(entity(p, "place"));
          b.push_turn(Speaker::System, pieces, "", "InformIntent");
        } else {
          system_intro(t2);
        }
      } else if (kind == 1) {  // price question on the current topic
        b.push_turn(Speaker::User, {words("how much is"), anaphor("it", "title")}, domain,
                    "check");
        records.push_back(make_record(rng, b.d.id, t, domain, "check",
                                      {{"title", b.closest("title")}}, spec.max_references));
        std::string pr = kPrices[rng.below(kPrices.size())];
        b.push_turn(Speaker::System, {words("it costs"), entity(pr, "price")}, "", "InformIntent");
      } else {  // release-date question (media only)
        b.push_turn(Speaker::User, {words("when did"), anaphor("it", "title"), words("come out")},
                    domain, "detail");
        records.push_back(make_record(rng, b.d.id, t, domain, "detail",
                                      {{"title", b.closest("title")}}, spec.max_references));
        std::string dt = kDates[rng.below(kDates.size())];
        b.push_turn(Speaker::System, {words("it came out"), entity(dt, "date")}, "",
                    "InformIntent");
      }
    }

    // Final referring turn; the dialogue ends on the user.
    {
      int t = static_cast<int>(b.d.turns.size());
      int kind = static_cast<int>(rng.below(3));
      if (kind == 0) {
        if (venue) {  // "there" resolves to the most recent venue
          b.push_turn(Speaker::User,
                      {words("get me a " + item), anaphor("there", "title")}, domain, "order");
          records.push_back(make_record(rng, b.d.id, t, domain, "order",
                                        {{"title", b.closest("title")}, {"item_type", item}},
                                        spec.max_references));
        } else {  // possessive resolves to the most recent creator
          std::string sort = kSorts[rng.below(kSorts.size())];
          std::string verb = domain == "book" ? "buy" : "play";
          b.push_turn(Speaker::User,
                      {words(verb), anaphor("their", "creator"), entity(sort, "sort_type"),
                       words(item)},
                      domain, "order");
          records.push_back(make_record(
              rng, b.d.id, t, domain, "order",
              {{"creator", b.closest("creator")}, {"sort_type", sort}, {"item_type", item}},
              spec.max_references));
        }
      } else if (kind == 1) {  // "the first one" resolves to the first title
        std::string verb = venue ? "go to" : (domain == "book" ? "buy" : "play");
        b.push_turn(Speaker::User,
                    {words(verb + " the"), anaphor("first", "title"), words("one")}, domain,
                    "order");
        records.push_back(make_record(rng, b.d.id, t, domain, "order",
                                      {{"title", b.earliest("title")}}, spec.max_references));
      } else {  // availability check carrying a current-turn date entity
        std::string dt = kDates[rng.below(kDates.size())];
        std::vector<Piece> pieces{words("is"), anaphor("it", "title"),
                                  words(venue ? "open" : "available"), entity(dt, "date")};
        b.push_turn(Speaker::User, pieces, domain, "check");
        records.push_back(make_record(rng, b.d.id, t, domain, "check",
                                      {{"title", b.closest("title")}, {"date", dt}},
                                      spec.max_references));
      }
    }

    corpus.dialogues.push_back(std::move(b.d));
    for (auto& r : records) corpus.records.push_back(std::move(r));
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace rewriter
