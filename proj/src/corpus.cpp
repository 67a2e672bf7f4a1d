#include "rewriter/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rewriter {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& toks, int start, int end) {
  std::string out;
  for (int i = start; i < end; ++i) {
    if (i > start) out += ' ';
    out += toks[i];
  }
  return out;
}

void validate_turn(const Dialogue& d, int idx) {
  const Turn& t = d.turns[idx];
  auto fail = [&](const std::string& msg) {
    throw ValidationError("dialogue " + d.id + " turn " + std::to_string(idx) + ": " + msg);
  };
  if (t.tokens.empty()) fail("empty token list");
  if (t.speaker == Speaker::User && (t.domain.empty() || t.intent.empty()))
    fail("user turn requires nonempty domain and intent");
  std::vector<EntityMention> sorted = t.mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
  int prev_end = 0;
  for (const auto& m : sorted) {
    if (m.start < 0 || m.start >= m.end || m.end > static_cast<int>(t.tokens.size()))
      fail("mention span [" + std::to_string(m.start) + "," + std::to_string(m.end) +
           ") out of range");
    if (m.start < prev_end) fail("overlapping mentions");
    prev_end = m.end;
  }
}

void fill_surfaces(std::vector<EntityMention>& mentions, const std::vector<std::string>& tokens) {
  for (auto& m : mentions) m.surface = join(tokens, m.start, m.end);
}

json mention_to_json(const EntityMention& m) {
  return json{{"start", m.start}, {"end", m.end}, {"slot_key", m.slot_key}};
}

EntityMention mention_from_json(const json& j) {
  EntityMention m;
  m.start = j.at("start").get<int>();
  m.end = j.at("end").get<int>();
  m.slot_key = j.at("slot_key").get<std::string>();
  return m;
}

json dialogue_to_json(const Dialogue& d) {
  json turns = json::array();
  for (const Turn& t : d.turns) {
    json mentions = json::array();
    for (const auto& m : t.mentions) mentions.push_back(mention_to_json(m));
    turns.push_back(json{{"speaker", t.speaker == Speaker::User ? "user" : "system"},
                         {"tokens", t.tokens},
                         {"mentions", mentions},
                         {"domain", t.domain},
                         {"intent", t.intent}});
  }
  return json{{"id", d.id}, {"turns", turns}};
}

json record_to_json(const RewriteRecord& r) {
  json gold = json::array();
  for (const auto& g : r.gold) {
    json mentions = json::array();
    for (const auto& m : g.mentions) mentions.push_back(mention_to_json(m));
    gold.push_back(json{{"tokens", g.tokens}, {"mentions", mentions}});
  }
  return json{{"dialogue_id", r.dialogue_id}, {"turn_index", r.turn_index}, {"gold", gold}};
}

Dialogue dialogue_from_json(const json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  for (const json& jt : j.at("turns")) {
    Turn t;
    std::string sp = jt.at("speaker").get<std::string>();
    if (sp == "user")
      t.speaker = Speaker::User;
    else if (sp == "system")
      t.speaker = Speaker::System;
    else
      throw DataError("unknown speaker: " + sp);
    t.tokens = jt.at("tokens").get<std::vector<std::string>>();
    for (const json& jm : jt.at("mentions")) t.mentions.push_back(mention_from_json(jm));
    t.domain = jt.at("domain").get<std::string>();
    t.intent = jt.at("intent").get<std::string>();
    fill_surfaces(t.mentions, t.tokens);
    d.turns.push_back(std::move(t));
  }
  return d;
}

RewriteRecord record_from_json(const json& j) {
  RewriteRecord r;
  r.dialogue_id = j.at("dialogue_id").get<std::string>();
  r.turn_index = j.at("turn_index").get<int>();
  for (const json& jg : j.at("gold")) {
    GoldRewrite g;
    g.tokens = jg.at("tokens").get<std::vector<std::string>>();
    for (const json& jm : jg.at("mentions")) g.mentions.push_back(mention_from_json(jm));
    fill_surfaces(g.mentions, g.tokens);
    r.gold.push_back(std::move(g));
  }
  return r;
}

}  // namespace

const Dialogue* Corpus::find_dialogue(const std::string& id) const {
  for (const auto& d : dialogues)
    if (d.id == id) return &d;
  return nullptr;
}

void validate_dialogue(const Dialogue& d) {
  if (d.turns.empty()) throw ValidationError("dialogue " + d.id + ": no turns");
  for (int i = 0; i < static_cast<int>(d.turns.size()); ++i) {
    Speaker expected = (i % 2 == 0) ? Speaker::User : Speaker::System;
    if (d.turns[i].speaker != expected)
      throw ValidationError("dialogue " + d.id + ": turns must alternate speakers starting " +
                            "with the user (violated at turn " + std::to_string(i) + ")");
    validate_turn(d, i);
  }
}

void validate_corpus(const Corpus& c) {
  for (const auto& d : c.dialogues) validate_dialogue(d);
  for (const auto& r : c.records) {
    const Dialogue* d = c.find_dialogue(r.dialogue_id);
    if (!d) throw ValidationError("rewrite record references unknown dialogue " + r.dialogue_id);
    if (r.turn_index < 0 || r.turn_index >= static_cast<int>(d->turns.size()) ||
        d->turns[r.turn_index].speaker != Speaker::User)
      throw ValidationError("dialogue " + r.dialogue_id + ": rewrite turn_index " +
                            std::to_string(r.turn_index) + " does not address a user turn");
    if (r.gold.empty())
      throw ValidationError("dialogue " + r.dialogue_id + ": rewrite record without gold rewrites");
    for (const auto& g : r.gold) {
      if (g.tokens.empty())
        throw ValidationError("dialogue " + r.dialogue_id + ": empty gold rewrite");
      Dialogue probe{r.dialogue_id + "#gold", {Turn{Speaker::User, g.tokens, g.mentions, "x", "x"}}};
      validate_turn(probe, 0);
    }
  }
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed corpus record: ") + e.what(), line_no);
    }
    try {
      if (j.contains("id"))
        corpus.dialogues.push_back(dialogue_from_json(j));
      else if (j.contains("dialogue_id"))
        corpus.records.push_back(record_from_json(j));
      else
        throw DataError("record is neither a dialogue nor a rewrite");
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed corpus record: ") + e.what(), line_no);
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  validate_corpus(corpus);
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream os;
  for (const auto& d : corpus.dialogues) os << dialogue_to_json(d).dump() << '\n';
  for (const auto& r : corpus.records) os << record_to_json(r).dump() << '\n';
  return os.str();
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open corpus file for writing: " + path);
  os << serialize_corpus(corpus);
}

void TemplateBank::add(const std::string& domain, const std::string& intent,
                       std::vector<std::string> slot_keys, const std::string& template_text) {
  std::sort(slot_keys.begin(), slot_keys.end());
  Key key{domain, intent, slot_keys};
  std::vector<std::string> toks;
  std::istringstream ss(template_text);
  std::string tok;
  while (ss >> tok) toks.push_back(tok);
  auto& list = templates_[key];
  if (list.size() >= 5)
    throw UsageError("template bank holds at most 5 alternatives per key (" + domain + "/" +
                     intent + ")");
  list.push_back(std::move(toks));
}

const std::vector<std::vector<std::string>>& TemplateBank::find(const Key& k) const {
  auto it = templates_.find(k);
  if (it == templates_.end())
    throw UsageError("no template for (" + k.domain + ", " + k.intent + ", " +
                     join(k.slot_keys, 0, static_cast<int>(k.slot_keys.size())) + ")");
  return it->second;
}

std::size_t TemplateBank::alternatives(const std::string& domain, const std::string& intent,
                                       const std::vector<std::string>& slot_keys) const {
  std::vector<std::string> sorted = slot_keys;
  std::sort(sorted.begin(), sorted.end());
  return find(Key{domain, intent, sorted}).size();
}

TemplateBank::Expansion TemplateBank::expand_with_spans(
    const std::string& domain, const std::string& intent,
    const std::map<std::string, std::string>& slots, const Selector& choose) const {
  Key key{domain, intent, {}};
  for (const auto& [k, _] : slots) key.slot_keys.push_back(k);
  const auto& alts = find(key);
  std::size_t pick = choose(alts.size());
  if (pick >= alts.size())
    throw UsageError("template selector returned " + std::to_string(pick) + " of " +
                     std::to_string(alts.size()));
  Expansion out;
  for (const std::string& tok : alts[pick]) {
    auto it = slots.find(tok);
    if (it == slots.end()) {
      out.tokens.push_back(tok);
      continue;
    }
    if (it->second.empty()) throw DataError("no surface value for slot " + tok);
    int start = static_cast<int>(out.tokens.size());
    std::istringstream ss(it->second);
    std::string piece;
    while (ss >> piece) out.tokens.push_back(piece);
    out.spans.emplace_back(tok, start, static_cast<int>(out.tokens.size()));
  }
  return out;
}

std::vector<std::string> TemplateBank::expand(const std::string& domain, const std::string& intent,
                                              const std::map<std::string, std::string>& slots,
                                              const Selector& choose) const {
  return expand_with_spans(domain, intent, slots, choose).tokens;
}

}  // namespace rewriter
