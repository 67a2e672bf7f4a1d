#include "rewriter/pgn.hpp"

#include <json.hpp>

namespace rewriter {

using nlohmann::json;

void PgnConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("PgnConfig.") + name + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(hidden_dim, "hidden_dim");
  positive(encoder_layers, "encoder_layers");
  positive(attn_dim, "attn_dim");
  positive(copy_head_dim, "copy_head_dim");
  positive(speaker_dim, "speaker_dim");
  positive(slot_dim, "slot_dim");
  positive(flags_dim, "flags_dim");
  positive(max_decode_len, "max_decode_len");
  positive(beam_width, "beam_width");
  if (lambda < 0) throw ConfigError("PgnConfig.lambda must be >= 0");
}

Vocab build_word_vocab(const std::vector<SerializedContext>& contexts,
                       const std::vector<std::vector<std::string>>& gold_sequences) {
  Vocab v(kReservedWords);
  for (const auto& ctx : contexts)
    for (const auto& tok : ctx.tokens) v.add(tok.token);
  for (const auto& gold : gold_sequences)
    for (const auto& tok : gold) v.add(tok);
  return v;
}

Vocab build_slot_vocab(const std::vector<SerializedContext>& contexts) {
  Vocab v(kReservedSlots);
  for (const auto& ctx : contexts)
    for (const auto& tok : ctx.tokens)
      if (!tok.slot_key.empty()) v.add(tok.slot_key);
  return v;
}

int ExtVocab::ext_id(const Vocab& vocab, const std::string& tok) const {
  int id = vocab.id(tok);
  if (id >= 0) return id;
  for (std::size_t i = 0; i < oov.size(); ++i)
    if (oov[i] == tok) return base + static_cast<int>(i);
  return -1;
}

std::string ExtVocab::token(const Vocab& vocab, int ext) const {
  if (ext < base) return vocab.token(ext);
  std::size_t i = static_cast<std::size_t>(ext - base);
  if (i >= oov.size()) throw UsageError("extended-vocab id out of range: " + std::to_string(ext));
  return oov[i];
}

ExtVocab ExtVocab::build(const Vocab& vocab, const SerializedContext& ctx) {
  ExtVocab ev;
  ev.base = vocab.size();
  for (const auto& tok : ctx.tokens) {
    int id = vocab.id(tok.token);
    if (id < 0) {
      int found = -1;
      for (std::size_t i = 0; i < ev.oov.size(); ++i)
        if (ev.oov[i] == tok.token) {
          found = static_cast<int>(i);
          break;
        }
      if (found < 0) {
        found = static_cast<int>(ev.oov.size());
        ev.oov.push_back(tok.token);
      }
      id = ev.base + found;
    }
    ev.src_ext_ids.push_back(id);
  }
  return ev;
}

PgnModel::PgnModel(PgnConfig cfg, Vocab vocab, Vocab slot_vocab, std::uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)), slot_vocab_(std::move(slot_vocab)) {
  cfg_.validate();
  register_params();
  Rng rng(init_seed);
  params_.init_uniform(rng);
}

PgnModel::PgnModel(PgnConfig cfg, Vocab vocab, Vocab slot_vocab, ParamStore params)
    : cfg_(cfg), vocab_(std::move(vocab)), slot_vocab_(std::move(slot_vocab)) {
  cfg_.validate();
  register_params();
  if (params.count() != params_.count())
    throw DataError("checkpoint parameter count mismatch: expected " +
                    std::to_string(params_.count()) + ", got " + std::to_string(params.count()));
  for (int i = 0; i < params_.count(); ++i) {
    int j = params.index_of(params_.name(i));
    if (j < 0) throw DataError("checkpoint is missing parameter " + params_.name(i));
    if (params[j].rows != params_[i].rows || params[j].cols != params_[i].cols)
      throw DataError("checkpoint shape mismatch for " + params_.name(i) + ": expected " +
                      params_[i].shape_str() + ", got " + params[j].shape_str());
    params_[i] = params[j];
  }
}

void PgnModel::register_params() {
  const int E = cfg_.embed_dim;
  const int H = cfg_.hidden_dim;
  const int A = cfg_.attn_dim;
  const int C = cfg_.copy_head_dim;
  const int V = vocab_.size();
  const int feat = cfg_.speaker_dim + cfg_.slot_dim + cfg_.flags_dim;

  embed_id_ = params_.add("embed", V, E);
  params_.add("speaker_embed", 3, cfg_.speaker_dim);
  params_.add("slot_embed", slot_vocab_.size(), cfg_.slot_dim);
  params_.add("flags_embed", 8, cfg_.flags_dim);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    int in = l == 0 ? E + feat : 2 * H;
    for (const char* dir : {"fwd", "bwd"}) {
      std::string base = "enc" + std::to_string(l) + "_" + dir;
      params_.add(base + "_W", in + H, 4 * H);
      params_.add(base + "_b", 1, 4 * H);
    }
  }
  params_.add("dec_W", E + H, 4 * H);
  params_.add("dec_b", 1, 4 * H);
  params_.add("init_h_W", 2 * H, H);
  params_.add("init_h_b", 1, H);
  params_.add("init_c_W", 2 * H, H);
  params_.add("init_c_b", 1, H);
  params_.add("attn_Wh", 2 * H, A);
  params_.add("attn_Ws", H, A);
  params_.add("attn_b", 1, A);
  params_.add("attn_v", A, 1);
  params_.add("out_W", 3 * H, V);
  params_.add("out_b", 1, V);
  params_.add("mix_W", 3 * H + E, 1);
  params_.add("mix_b", 1, 1);
  params_.add("copy_W1", 2 * H, C);
  params_.add("copy_b1", 1, C);
  params_.add("copy_w2", C, 1);
  params_.add("copy_b2", 1, 1);
}

std::string PgnModel::metadata_json() const {
  json j;
  j["version"] = 1;
  j["config"] = {{"embed_dim", cfg_.embed_dim},
                 {"hidden_dim", cfg_.hidden_dim},
                 {"encoder_layers", cfg_.encoder_layers},
                 {"attn_dim", cfg_.attn_dim},
                 {"copy_head_dim", cfg_.copy_head_dim},
                 {"speaker_dim", cfg_.speaker_dim},
                 {"slot_dim", cfg_.slot_dim},
                 {"flags_dim", cfg_.flags_dim},
                 {"lambda", cfg_.lambda},
                 {"max_decode_len", cfg_.max_decode_len},
                 {"beam_width", cfg_.beam_width}};
  j["vocab"] = vocab_.tokens();
  j["slot_vocab"] = slot_vocab_.tokens();
  return j.dump();
}

void PgnModel::save(const std::string& path, const AdagradState* optimizer) const {
  save_checkpoint(path, params_, metadata_json(), optimizer);
}

PgnModel PgnModel::load(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  json j;
  try {
    j = json::parse(ck.metadata_json);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("bad checkpoint metadata: ") + e.what());
  }
  const json& c = j.at("config");
  PgnConfig cfg;
  cfg.embed_dim = c.at("embed_dim").get<int>();
  cfg.hidden_dim = c.at("hidden_dim").get<int>();
  cfg.encoder_layers = c.at("encoder_layers").get<int>();
  cfg.attn_dim = c.at("attn_dim").get<int>();
  cfg.copy_head_dim = c.at("copy_head_dim").get<int>();
  cfg.speaker_dim = c.at("speaker_dim").get<int>();
  cfg.slot_dim = c.at("slot_dim").get<int>();
  cfg.flags_dim = c.at("flags_dim").get<int>();
  cfg.lambda = c.at("lambda").get<double>();
  cfg.max_decode_len = c.at("max_decode_len").get<int>();
  cfg.beam_width = c.at("beam_width").get<int>();
  Vocab vocab;
  for (const auto& t : j.at("vocab").get<std::vector<std::string>>()) vocab.add(t);
  Vocab slots;
  for (const auto& t : j.at("slot_vocab").get<std::vector<std::string>>()) slots.add(t);
  return PgnModel(cfg, std::move(vocab), std::move(slots), std::move(ck.params));
}

PgnGraph::PgnGraph(const PgnModel& model, Tape& tape) : model_(model), tape_(tape) {
  param_refs_.reserve(model.params().count());
  for (int i = 0; i < model.params().count(); ++i)
    param_refs_.push_back(tape_.param(model.params()[i], i));
}

Gradients PgnGraph::param_gradients() const {
  Gradients g(param_refs_.size());
  for (std::size_t i = 0; i < param_refs_.size(); ++i) {
    const auto& grad = tape_.gradient(param_refs_[i]);
    if (grad.empty())
      g[i].assign(model_.params()[static_cast<int>(i)].size(), 0.0);
    else
      g[i] = grad;
  }
  return g;
}

NodeRef PgnGraph::p(const std::string& name) const {
  int i = model_.params().index_of(name);
  if (i < 0) throw UsageError("unknown parameter: " + name);
  return param_refs_[static_cast<std::size_t>(i)];
}

NodeRef PgnGraph::input_embedding(const ContextToken& tok) {
  int wid = model_.vocab().id_or(tok.token, kUnkId);
  int sid = tok.speaker == TokenSpeaker::User ? 0 : (tok.speaker == TokenSpeaker::System ? 1 : 2);
  int kid = tok.slot_key.empty() ? 0 : model_.slot_vocab().id_or(tok.slot_key, 1);
  int fid = (tok.flags.question ? 1 : 0) | (tok.flags.prps ? 2 : 0) | (tok.flags.psbl ? 4 : 0);
  return tape_.concat({tape_.lookup(p("embed"), wid), tape_.lookup(p("speaker_embed"), sid),
                       tape_.lookup(p("slot_embed"), kid), tape_.lookup(p("flags_embed"), fid)});
}

std::pair<NodeRef, NodeRef> PgnGraph::lstm_step(NodeRef x, NodeRef h, NodeRef c, NodeRef W,
                                                NodeRef b) {
  const std::size_t H = static_cast<std::size_t>(model_.config().hidden_dim);
  NodeRef z = tape_.add(tape_.matmul(tape_.concat({x, h}), W), b);
  NodeRef i = tape_.sigmoid(tape_.slice_cols(z, 0, H));
  NodeRef f = tape_.sigmoid(tape_.slice_cols(z, H, 2 * H));
  NodeRef g = tape_.tanh(tape_.slice_cols(z, 2 * H, 3 * H));
  NodeRef o = tape_.sigmoid(tape_.slice_cols(z, 3 * H, 4 * H));
  NodeRef c2 = tape_.add(tape_.mul(f, c), tape_.mul(i, g));
  NodeRef h2 = tape_.mul(o, tape_.tanh(c2));
  return {h2, c2};
}

PgnGraph::Encoded PgnGraph::encode(const SerializedContext& ctx) {
  if (ctx.tokens.empty()) throw UsageError("encode: empty input");
  const int L = static_cast<int>(ctx.tokens.size());
  const int H = model_.config().hidden_dim;

  std::vector<NodeRef> layer_in;
  layer_in.reserve(ctx.tokens.size());
  for (const auto& tok : ctx.tokens) layer_in.push_back(input_embedding(tok));

  NodeRef zero = tape_.constant_row(std::vector<double>(static_cast<std::size_t>(H), 0.0));
  NodeRef last_fwd = -1, first_bwd = -1;
  for (int l = 0; l < model_.config().encoder_layers; ++l) {
    std::string base = "enc" + std::to_string(l);
    NodeRef Wf = p(base + "_fwd_W"), bf = p(base + "_fwd_b");
    NodeRef Wb = p(base + "_bwd_W"), bb = p(base + "_bwd_b");
    std::vector<NodeRef> fwd(L), bwd(L);
    NodeRef h = zero, c = zero;
    for (int i = 0; i < L; ++i) {
      std::tie(h, c) = lstm_step(layer_in[i], h, c, Wf, bf);
      fwd[i] = h;
    }
    h = zero;
    c = zero;
    for (int i = L - 1; i >= 0; --i) {
      std::tie(h, c) = lstm_step(layer_in[i], h, c, Wb, bb);
      bwd[i] = h;
    }
    std::vector<NodeRef> next(L);
    for (int i = 0; i < L; ++i) next[i] = tape_.concat({fwd[i], bwd[i]});
    layer_in = std::move(next);
    last_fwd = fwd[L - 1];
    first_bwd = bwd[0];
  }

  Encoded enc;
  enc.length = L;
  enc.h_mat = tape_.concat_rows(layer_in);
  enc.wh_mat = tape_.matmul(enc.h_mat, p("attn_Wh"));
  NodeRef finals = tape_.concat({last_fwd, first_bwd});
  enc.dec_h0 = tape_.add(tape_.matmul(finals, p("init_h_W")), p("init_h_b"));
  enc.dec_c0 = tape_.add(tape_.matmul(finals, p("init_c_W")), p("init_c_b"));
  return enc;
}

NodeRef PgnGraph::attend(const Encoded& enc, NodeRef decoder_state) {
  NodeRef ws = tape_.add(tape_.matmul(decoder_state, p("attn_Ws")), p("attn_b"));
  NodeRef scores = tape_.matmul(tape_.tanh(tape_.add_broadcast_row(enc.wh_mat, ws)), p("attn_v"));
  return tape_.softmax(tape_.reshape(scores, 1, static_cast<std::size_t>(enc.length)));
}

NodeRef PgnGraph::copy_distribution(NodeRef attention, const ExtVocab& ext) {
  return tape_.scatter_sum(attention, ext.src_ext_ids, static_cast<std::size_t>(ext.size()));
}

NodeRef PgnGraph::copy_head(const Encoded& enc) {
  model_.copy_head_evals_.fetch_add(1, std::memory_order_relaxed);
  NodeRef hidden =
      tape_.tanh(tape_.add_broadcast_row(tape_.matmul(enc.h_mat, p("copy_W1")), p("copy_b1")));
  NodeRef out = tape_.add_broadcast_row(tape_.matmul(hidden, p("copy_w2")), p("copy_b2"));
  return tape_.sigmoid(out);  // L x 1
}

PgnGraph::StepState PgnGraph::initial_state(const Encoded& enc) const {
  return {enc.dec_h0, enc.dec_c0};
}

PgnGraph::StepOut PgnGraph::decode_step(const StepState& state, int prev_ext_id,
                                        const Encoded& enc, const ExtVocab& ext,
                                        std::optional<double> force_mix) {
  const int V = model_.vocab().size();
  if (prev_ext_id < 0 || prev_ext_id >= ext.size())
    throw UsageError("decode_step: previous token id out of range: " +
                     std::to_string(prev_ext_id));
  // Copied out-of-vocabulary tokens feed the decoder as UNK.
  NodeRef x = tape_.lookup(p("embed"), prev_ext_id < V ? prev_ext_id : kUnkId);

  StepOut out;
  auto [h, c] = lstm_step(x, state.h, state.c, p("dec_W"), p("dec_b"));
  out.state = {h, c};
  out.attention = attend(enc, h);
  NodeRef context = tape_.matmul(out.attention, enc.h_mat);
  NodeRef hc = tape_.concat({h, context});
  out.p_gen = tape_.softmax(tape_.add(tape_.matmul(hc, p("out_W")), p("out_b")));
  out.p_mix = force_mix ? tape_.scalar(*force_mix)
                        : tape_.sigmoid(tape_.add(
                              tape_.matmul(tape_.concat({h, context, x}), p("mix_W")),
                              p("mix_b")));
  out.p_copy_ext = copy_distribution(out.attention, ext);
  NodeRef p_gen_ext = out.p_gen;
  if (ext.size() > V)
    p_gen_ext = tape_.concat(
        {out.p_gen, tape_.constant_row(std::vector<double>(ext.size() - V, 0.0))});
  NodeRef one = tape_.scalar(1.0);
  out.p_ext = tape_.add(tape_.scale(out.p_mix, p_gen_ext),
                        tape_.scale(tape_.sub(one, out.p_mix), out.p_copy_ext));
  return out;
}

}  // namespace rewriter
