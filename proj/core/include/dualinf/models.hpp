#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualinf/frames.hpp"
#include "dualinf/layers.hpp"
#include "dualinf/tensor.hpp"
#include "dualinf/textproc.hpp"

namespace dualinf {

enum class ModelKind { kNlu, kNlg, kLm, kMaskedFrame };

std::string_view to_string(ModelKind kind);
// Accepts "nlu", "nlg", "lm", "mfm". Throws ConfigError otherwise.
ModelKind parse_model_kind(std::string_view name);

struct ModelDims {
  std::size_t embedding = 50;
  std::size_t hidden = 200;

  bool operator==(const ModelDims&) const = default;
};

// Inventories shared by the four models.
struct Lexicon {
  WordVocab words;  // utterance words and slot-value words
  BpeModel bpe;     // generated / language-modelled subwords
  LabelVocab labels;

  bool operator==(const Lexicon&) const = default;
};

struct InventorySizes {
  std::size_t words = 0;
  std::size_t subwords = 0;
  std::size_t keys = 0;
  std::size_t intents = 0;

  static InventorySizes of(const Lexicon& lexicon);
  bool operator==(const InventorySizes&) const = default;
};

// A semantic frame lowered to model inputs: the intent (if any) first, then
// one feature per slot. A frame with no features lowers to a single
// placeholder feature.
struct FrameFeature {
  enum class Kind { kIntent, kSlot, kPlaceholder };
  Kind kind = Kind::kSlot;
  LabelId label = 0;
  std::vector<TokenId> value;  // word ids; empty for intent/placeholder
};

struct FrameInput {
  std::vector<FrameFeature> features;
};

FrameInput make_frame_input(const SemanticFrame& frame, const WordVocab& words);

// Per-feature encoder shared in structure by the NLG and masked-frame
// models: label embedding followed by the value-word embeddings, run through
// a bidirectional GRU and projected to the model width.
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(ParameterStore& store, const std::string& name, ModelDims dims,
               const InventorySizes& sizes, Rng& rng);

  std::vector<Tensor> encode(const FrameInput& input) const;

 private:
  InventorySizes sizes_;
  Tensor key_embedding_;
  Tensor intent_embedding_;
  Tensor placeholder_embedding_;
  Tensor word_embedding_;
  BiGruEncoder rnn_;
  Linear projection_;
};

// ---------------------------------------------------------------------------
// NLU: utterance -> (IOB tags, intent). Each step consumes
// [word embedding ; previous tag embedding]; the intent head reads the final
// hidden state.

struct NluScore {
  std::vector<double> tag_logprobs;
  std::optional<double> intent_logprob;
  double total = 0.0;
};

class NluModel {
 public:
  struct Step {
    Tensor tag_logprobs;
    Tensor state;
  };

  NluModel(ModelDims dims, const InventorySizes& sizes, Rng& rng);

  ModelDims dims() const { return dims_; }
  const InventorySizes& sizes() const { return sizes_; }
  std::size_t tag_count() const { return 1 + 2 * sizes_.keys; }
  TagId start_tag() const { return static_cast<TagId>(tag_count()); }

  Tensor initial_state() const { return cell_.zero_state(); }
  Step step(const Tensor& state, TokenId word, TagId prev_tag) const;
  Tensor intent_logprobs(const Tensor& state) const;

  // Teacher-forced log P(tags, intent | words).
  NluScore score(const Utterance& words, const IobSequence& tags,
                 std::optional<LabelId> intent) const;
  // Summed negative log-likelihood with scheduled teacher forcing.
  Tensor loss(const Utterance& words, const IobSequence& tags, std::optional<LabelId> intent,
              double teacher_forcing, Rng& rng) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  void check(const Utterance& words, const IobSequence& tags,
             std::optional<LabelId> intent) const;
  Tensor step_logits(Tensor& state, TokenId word, TagId prev_tag) const;

  ModelDims dims_;
  InventorySizes sizes_;
  ParameterStore params_;
  Tensor word_embedding_;
  Tensor tag_embedding_;  // tag_count + 1 rows; the last is the start tag
  GruCell cell_;
  Linear tag_head_;
  Linear intent_head_;
};

// ---------------------------------------------------------------------------
// NLG: frame -> subword sequence. Attention over the frame features is
// queried with the previous decoder state; the initial state is the mean of
// the features.

class NlgModel {
 public:
  struct Encoded {
    std::vector<Tensor> features;
    Tensor keys;  // (features, hidden)
    Tensor initial;
  };
  struct Step {
    Tensor word_logprobs;
    Tensor attention;
    Tensor state;
  };

  NlgModel(ModelDims dims, const InventorySizes& sizes, Rng& rng);

  ModelDims dims() const { return dims_; }
  const InventorySizes& sizes() const { return sizes_; }
  std::size_t output_size() const { return sizes_.subwords; }

  Encoded encode(const FrameInput& frame) const;
  Step step(const Encoded& encoded, const Tensor& state, TokenId prev_word) const;

  // Teacher-forced log P(tokens, EOS | frame).
  double score(const FrameInput& frame, std::span<const TokenId> tokens) const;
  std::vector<double> step_logprobs(const FrameInput& frame,
                                    std::span<const TokenId> tokens) const;
  Tensor loss(const FrameInput& frame, std::span<const TokenId> tokens, double teacher_forcing,
              Rng& rng) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  Tensor step_logits(const Encoded& encoded, Tensor& state, TokenId prev_word,
                     Tensor* attention) const;
  void check_tokens(std::span<const TokenId> tokens) const;

  ModelDims dims_;
  InventorySizes sizes_;
  ParameterStore params_;
  FrameEncoder encoder_;
  Tensor word_embedding_;
  GruCell cell_;
  Linear output_;
};

// ---------------------------------------------------------------------------
// Subword language model for the utterance marginal.

class LmModel {
 public:
  struct Step {
    Tensor word_logprobs;
    Tensor state;
  };

  LmModel(ModelDims dims, const InventorySizes& sizes, Rng& rng);

  ModelDims dims() const { return dims_; }
  const InventorySizes& sizes() const { return sizes_; }
  std::size_t output_size() const { return sizes_.subwords; }

  Tensor initial_state() const { return cell_.zero_state(); }
  Step step(const Tensor& state, TokenId prev_word) const;

  // log P(tokens, EOS), starting from BOS.
  double score(std::span<const TokenId> tokens) const;
  std::vector<double> step_logprobs(std::span<const TokenId> tokens) const;
  Tensor loss(std::span<const TokenId> tokens) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  Tensor step_logits(Tensor& state, TokenId prev_word) const;
  void check_tokens(std::span<const TokenId> tokens) const;

  ModelDims dims_;
  InventorySizes sizes_;
  ParameterStore params_;
  Tensor word_embedding_;
  GruCell cell_;
  Linear output_;
};

// ---------------------------------------------------------------------------
// Masked semantic-frame model for the frame marginal: feature encodings pass
// through two self-attention blocks (no positional information), and a
// classifier predicts the label of each masked feature.

class MaskedFrameModel {
 public:
  static constexpr std::size_t kScoringDraws = 3;
  static constexpr std::size_t kLayers = 2;

  MaskedFrameModel(ModelDims dims, const InventorySizes& sizes, Rng& rng);

  ModelDims dims() const { return dims_; }
  const InventorySizes& sizes() const { return sizes_; }
  // keys, then intents, then the placeholder class.
  std::size_t class_count() const { return sizes_.keys + sizes_.intents + 1; }
  std::size_t class_of(const FrameFeature& feature) const;

  // Log-distributions over classes at every position after replacing the
  // features flagged in `masked` with the learned mask vector.
  std::vector<Tensor> classify(const FrameInput& frame, const std::vector<bool>& masked) const;

  // log P(true label at `position` | other features) with one feature masked.
  double masked_logprob(const FrameInput& frame, std::size_t position) const;
  // Sum over three positions drawn uniformly with replacement from `rng`.
  // Throws StructuralError for a frame without features.
  double score(const FrameInput& frame, Rng& rng) const;
  // Masks each feature with probability `mask_prob` (redrawn until non-empty)
  // and sums the cross-entropy at the masked positions.
  Tensor loss(const FrameInput& frame, double mask_prob, Rng& rng) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 private:
  struct Block {
    Linear query, key, value, output, ff_in, ff_out;
  };

  std::vector<Tensor> logits(const FrameInput& frame, const std::vector<bool>& masked) const;

  ModelDims dims_;
  InventorySizes sizes_;
  ParameterStore params_;
  FrameEncoder encoder_;
  Tensor mask_vector_;
  std::vector<Block> blocks_;
  Linear classifier_;
};

}  // namespace dualinf
