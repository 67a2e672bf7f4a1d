#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rewriter/params.hpp"
#include "rewriter/preprocess.hpp"
#include "rewriter/tape.hpp"
#include "rewriter/vocab.hpp"

namespace rewriter {

struct PgnConfig {
  int embed_dim = 128;
  int hidden_dim = 128;
  int encoder_layers = 2;
  int attn_dim = 128;       // additive attention hidden size
  int copy_head_dim = 128;  // hidden layer of g (the entity-copy head)
  int speaker_dim = 8;
  int slot_dim = 16;
  int flags_dim = 8;
  double lambda = 0.01;
  int max_decode_len = 32;
  int beam_width = 4;

  void validate() const;
};

// Reserved word-vocabulary entries. END doubles as the source terminator and
// the decode stop symbol; <s> is only ever the first decoder input.
inline constexpr int kUnkId = 0;
inline constexpr int kEndId = 1;
inline constexpr int kStartId = 2;
inline const std::vector<std::string> kReservedWords = {"<unk>", "END", "<s>"};
// Slot-feature vocabulary: <none> for tokens without a slot key, UNK for
// current-utterance mentions.
inline const std::vector<std::string> kReservedSlots = {"<none>", "UNK"};

Vocab build_word_vocab(const std::vector<SerializedContext>& contexts,
                       const std::vector<std::vector<std::string>>& gold_sequences);
Vocab build_slot_vocab(const std::vector<SerializedContext>& contexts);

// Per-example extended vocabulary: the output vocabulary plus the source
// tokens that fall outside it, in first-occurrence order.
struct ExtVocab {
  int base = 0;                   // word vocab size
  std::vector<std::string> oov;   // ext id = base + position
  std::vector<int> src_ext_ids;   // per source position

  int size() const { return base + static_cast<int>(oov.size()); }
  int ext_id(const Vocab& vocab, const std::string& tok) const;
  std::string token(const Vocab& vocab, int ext_id) const;

  static ExtVocab build(const Vocab& vocab, const SerializedContext& ctx);
};

// The pointer-generator rewriter: shared embeddings, stacked bidirectional
// LSTM encoder over the serialized context, attentive LSTM decoder, copy and
// generation distributions blended by a learned switch, and the entity-copy
// head over encoder states.
class PgnModel {
 public:
  PgnModel(PgnConfig cfg, Vocab vocab, Vocab slot_vocab, std::uint64_t init_seed);
  PgnModel(PgnConfig cfg, Vocab vocab, Vocab slot_vocab, ParamStore params);

  PgnModel(const PgnModel&) = delete;
  PgnModel& operator=(const PgnModel&) = delete;
  PgnModel(PgnModel&& o) noexcept
      : cfg_(o.cfg_),
        vocab_(std::move(o.vocab_)),
        slot_vocab_(std::move(o.slot_vocab_)),
        params_(std::move(o.params_)),
        embed_id_(o.embed_id_),
        copy_head_evals_(o.copy_head_evals_.load()) {}

  const PgnConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const Vocab& slot_vocab() const { return slot_vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Both views resolve to the one shared table.
  const DenseArray& encoder_embedding() const { return params_[embed_id_]; }
  const DenseArray& decoder_embedding() const { return params_[embed_id_]; }

  std::uint64_t copy_head_evals() const { return copy_head_evals_.load(); }

  std::string metadata_json() const;
  void save(const std::string& path, const AdagradState* optimizer = nullptr) const;
  static PgnModel load(const std::string& path);

 private:
  friend class PgnGraph;
  void register_params();

  PgnConfig cfg_;
  Vocab vocab_;
  Vocab slot_vocab_;
  ParamStore params_;
  int embed_id_ = -1;
  mutable std::atomic<std::uint64_t> copy_head_evals_{0};
};

// Builds the model's computation on one tape; one instance per example.
class PgnGraph {
 public:
  PgnGraph(const PgnModel& model, Tape& tape);

  struct Encoded {
    NodeRef h_mat = -1;   // L x 2H, final encoder layer
    NodeRef wh_mat = -1;  // L x A, attention projection of h_mat
    NodeRef dec_h0 = -1;
    NodeRef dec_c0 = -1;
    int length = 0;
  };

  struct StepState {
    NodeRef h = -1;
    NodeRef c = -1;
  };

  struct StepOut {
    NodeRef attention = -1;   // 1 x L
    NodeRef p_gen = -1;       // 1 x V
    NodeRef p_copy_ext = -1;  // 1 x ext
    NodeRef p_mix = -1;       // 1 x 1
    NodeRef p_ext = -1;       // 1 x ext
    StepState state;
  };

  Encoded encode(const SerializedContext& ctx);
  // Attention weights for one decoder state; softmax over source positions.
  NodeRef attend(const Encoded& enc, NodeRef decoder_state);
  // Copy mass per token identity: attention summed over duplicate source
  // positions, laid out over the extended vocabulary.
  NodeRef copy_distribution(NodeRef attention, const ExtVocab& ext);
  // g(h_l) per source position, in (0,1); depends only on encoder states.
  NodeRef copy_head(const Encoded& enc);

  StepState initial_state(const Encoded& enc) const;
  StepOut decode_step(const StepState& state, int prev_ext_id, const Encoded& enc,
                      const ExtVocab& ext, std::optional<double> force_mix = std::nullopt);

  // After tape().backward(loss): gradients per parameter, by parameter id.
  Gradients param_gradients() const;

  Tape& tape() { return tape_; }
  const PgnModel& model() const { return model_; }

 private:
  NodeRef p(const std::string& name) const;
  NodeRef input_embedding(const ContextToken& tok);
  std::pair<NodeRef, NodeRef> lstm_step(NodeRef x, NodeRef h, NodeRef c, NodeRef W, NodeRef b);

  const PgnModel& model_;
  Tape& tape_;
  std::vector<NodeRef> param_refs_;
};

}  // namespace rewriter
