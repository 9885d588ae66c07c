#include "dualinf/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "dualinf/errors.hpp"

namespace dualinf {

namespace {

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

Tensor total_of(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return total;
}

void check_id(std::int64_t id, std::size_t limit, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= limit) {
    throw StructuralError(std::string(what) + " id " + std::to_string(id) +
                          " outside inventory of size " + std::to_string(limit));
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNlu: return "nlu";
    case ModelKind::kNlg: return "nlg";
    case ModelKind::kLm: return "lm";
    case ModelKind::kMaskedFrame: return "mfm";
  }
  return "";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "nlu") return ModelKind::kNlu;
  if (name == "nlg") return ModelKind::kNlg;
  if (name == "lm") return ModelKind::kLm;
  if (name == "mfm") return ModelKind::kMaskedFrame;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected nlu, nlg, lm, mfm)");
}

InventorySizes InventorySizes::of(const Lexicon& lexicon) {
  return InventorySizes{lexicon.words.size(), lexicon.bpe.vocab_size(),
                        lexicon.labels.key_count(), lexicon.labels.intent_count()};
}

FrameInput make_frame_input(const SemanticFrame& frame, const WordVocab& words) {
  FrameInput input;
  if (frame.intent) {
    input.features.push_back({FrameFeature::Kind::kIntent, *frame.intent, {}});
  }
  for (const Slot& slot : frame.slots) {
    FrameFeature f{FrameFeature::Kind::kSlot, slot.key, {}};
    f.value.reserve(slot.value.size());
    for (const std::string& w : slot.value) f.value.push_back(words.id(w));
    input.features.push_back(std::move(f));
  }
  if (input.features.empty()) {
    input.features.push_back({FrameFeature::Kind::kPlaceholder, 0, {}});
  }
  return input;
}

// ---------------------------------------------------------------------------
// FrameEncoder

FrameEncoder::FrameEncoder(ParameterStore& store, const std::string& name, ModelDims dims,
                           const InventorySizes& sizes, Rng& rng)
    : sizes_(sizes),
      key_embedding_(store.create(name + ".key_embedding", Shape(sizes.keys, dims.embedding), rng)),
      intent_embedding_(
          store.create(name + ".intent_embedding", Shape(sizes.intents, dims.embedding), rng)),
      placeholder_embedding_(
          store.create(name + ".placeholder_embedding", Shape(1, dims.embedding), rng)),
      word_embedding_(
          store.create(name + ".word_embedding", Shape(sizes.words, dims.embedding), rng)),
      rnn_(store, name + ".rnn", dims.embedding, (dims.hidden + 1) / 2, rng),
      projection_(store, name + ".projection", rnn_.output_size(), dims.hidden, rng) {}

std::vector<Tensor> FrameEncoder::encode(const FrameInput& input) const {
  if (input.features.empty()) throw StructuralError("frame has no features to encode");
  std::vector<Tensor> out;
  out.reserve(input.features.size());
  std::vector<Tensor> sequence;
  for (const FrameFeature& f : input.features) {
    sequence.clear();
    switch (f.kind) {
      case FrameFeature::Kind::kIntent:
        check_id(f.label, sizes_.intents, "intent");
        sequence.push_back(embedding(intent_embedding_, static_cast<std::size_t>(f.label)));
        break;
      case FrameFeature::Kind::kSlot:
        check_id(f.label, sizes_.keys, "slot key");
        sequence.push_back(embedding(key_embedding_, static_cast<std::size_t>(f.label)));
        break;
      case FrameFeature::Kind::kPlaceholder:
        sequence.push_back(embedding(placeholder_embedding_, 0));
        break;
    }
    for (TokenId w : f.value) {
      check_id(w, sizes_.words, "word");
      sequence.push_back(embedding(word_embedding_, static_cast<std::size_t>(w)));
    }
    out.push_back(tanh(projection_(rnn_.encode(sequence))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// NluModel

NluModel::NluModel(ModelDims dims, const InventorySizes& sizes, Rng& rng)
    : dims_(dims), sizes_(sizes) {
  const std::size_t tags = tag_count();
  word_embedding_ = params_.create("nlu.word_embedding", Shape(sizes.words, dims.embedding), rng);
  tag_embedding_ = params_.create("nlu.tag_embedding", Shape(tags + 1, dims.embedding), rng);
  cell_ = GruCell(params_, "nlu.cell", 2 * dims.embedding, dims.hidden, rng);
  tag_head_ = Linear(params_, "nlu.tag_head", dims.hidden, tags, rng);
  if (sizes.intents > 0) {
    intent_head_ = Linear(params_, "nlu.intent_head", dims.hidden, sizes.intents, rng);
  }
}

Tensor NluModel::step_logits(Tensor& state, TokenId word, TagId prev_tag) const {
  check_id(word, sizes_.words, "word");
  check_id(prev_tag, tag_count() + 1, "tag");
  const std::array<Tensor, 2> parts{embedding(word_embedding_, static_cast<std::size_t>(word)),
                                    embedding(tag_embedding_, static_cast<std::size_t>(prev_tag))};
  state = cell_.step(concat(parts), state);
  return tag_head_(state);
}

NluModel::Step NluModel::step(const Tensor& state, TokenId word, TagId prev_tag) const {
  Tensor next = state;
  Tensor logits = step_logits(next, word, prev_tag);
  return Step{log_softmax(logits), next};
}

Tensor NluModel::intent_logprobs(const Tensor& state) const {
  if (sizes_.intents == 0) throw StructuralError("NLU model has no intent inventory");
  return log_softmax(intent_head_(state));
}

void NluModel::check(const Utterance& words, const IobSequence& tags,
                     std::optional<LabelId> intent) const {
  if (words.tokens.size() != tags.tags.size()) {
    throw StructuralError("utterance has " + std::to_string(words.tokens.size()) +
                          " tokens but " + std::to_string(tags.tags.size()) + " tags");
  }
  for (TagId t : tags.tags) check_id(t, tag_count(), "tag");
  if (intent) check_id(*intent, sizes_.intents, "intent");
}

NluScore NluModel::score(const Utterance& words, const IobSequence& tags,
                         std::optional<LabelId> intent) const {
  check(words, tags, intent);
  NoGradGuard no_grad;
  NluScore out;
  Tensor state = initial_state();
  TagId prev = start_tag();
  double total = 0.0;
  for (std::size_t t = 0; t < tags.tags.size(); ++t) {
    const Step s = step(state, words.tokens[t], prev);
    const double lp = s.tag_logprobs[static_cast<std::size_t>(tags.tags[t])];
    out.tag_logprobs.push_back(lp);
    total += lp;
    state = s.state;
    prev = tags.tags[t];
  }
  if (intent) {
    out.intent_logprob = intent_logprobs(state)[static_cast<std::size_t>(*intent)];
    total += *out.intent_logprob;
  }
  out.total = total;
  return out;
}

Tensor NluModel::loss(const Utterance& words, const IobSequence& tags,
                      std::optional<LabelId> intent, double teacher_forcing, Rng& rng) const {
  check(words, tags, intent);
  std::vector<Tensor> terms;
  Tensor state = initial_state();
  TagId prev = start_tag();
  for (std::size_t t = 0; t < tags.tags.size(); ++t) {
    const Tensor logits = step_logits(state, words.tokens[t], prev);
    terms.push_back(cross_entropy(logits, static_cast<std::size_t>(tags.tags[t])));
    prev = rng.bernoulli(teacher_forcing) ? tags.tags[t]
                                          : static_cast<TagId>(argmax(logits.values()));
  }
  if (intent) {
    terms.push_back(cross_entropy(intent_head_(state), static_cast<std::size_t>(*intent)));
  }
  return total_of(terms);
}

// ---------------------------------------------------------------------------
// NlgModel

NlgModel::NlgModel(ModelDims dims, const InventorySizes& sizes, Rng& rng)
    : dims_(dims), sizes_(sizes) {
  encoder_ = FrameEncoder(params_, "nlg.encoder", dims, sizes, rng);
  word_embedding_ =
      params_.create("nlg.word_embedding", Shape(sizes.subwords, dims.embedding), rng);
  cell_ = GruCell(params_, "nlg.cell", dims.hidden + dims.embedding, dims.hidden, rng);
  output_ = Linear(params_, "nlg.output", dims.hidden, sizes.subwords, rng);
}

NlgModel::Encoded NlgModel::encode(const FrameInput& frame) const {
  Encoded enc;
  enc.features = encoder_.encode(frame);
  enc.keys = stack(enc.features);
  enc.initial = mean_pool(enc.features);
  return enc;
}

Tensor NlgModel::step_logits(const Encoded& encoded, Tensor& state, TokenId prev_word,
                             Tensor* attention) const {
  check_id(prev_word, sizes_.subwords, "subword");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dims_.hidden));
  const Tensor weights = softmax(scale(matmul(encoded.keys, state), inv_sqrt));
  const Tensor context = matvec_t(encoded.keys, weights);
  const std::array<Tensor, 2> parts{
      context, embedding(word_embedding_, static_cast<std::size_t>(prev_word))};
  state = cell_.step(concat(parts), state);
  if (attention != nullptr) *attention = weights;
  return output_(state);
}

NlgModel::Step NlgModel::step(const Encoded& encoded, const Tensor& state,
                              TokenId prev_word) const {
  if (encoded.features.empty()) throw StructuralError("NLG step with an empty feature set");
  Step out;
  out.state = state;
  const Tensor logits = step_logits(encoded, out.state, prev_word, &out.attention);
  out.word_logprobs = log_softmax(logits);
  return out;
}

void NlgModel::check_tokens(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) check_id(t, sizes_.subwords, "subword");
}

std::vector<double> NlgModel::step_logprobs(const FrameInput& frame,
                                            std::span<const TokenId> tokens) const {
  check_tokens(tokens);
  NoGradGuard no_grad;
  const Encoded enc = encode(frame);
  std::vector<double> out;
  out.reserve(tokens.size() + 1);
  Tensor state = enc.initial;
  TokenId prev = Specials::kBos;
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const TokenId target = t < tokens.size() ? tokens[t] : Specials::kEos;
    const Step s = step(enc, state, prev);
    out.push_back(s.word_logprobs[static_cast<std::size_t>(target)]);
    state = s.state;
    prev = target;
  }
  return out;
}

double NlgModel::score(const FrameInput& frame, std::span<const TokenId> tokens) const {
  double total = 0.0;
  for (double lp : step_logprobs(frame, tokens)) total += lp;
  return total;
}

Tensor NlgModel::loss(const FrameInput& frame, std::span<const TokenId> tokens,
                      double teacher_forcing, Rng& rng) const {
  check_tokens(tokens);
  const Encoded enc = encode(frame);
  std::vector<Tensor> terms;
  terms.reserve(tokens.size() + 1);
  Tensor state = enc.initial;
  TokenId prev = Specials::kBos;
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const TokenId target = t < tokens.size() ? tokens[t] : Specials::kEos;
    const Tensor logits = step_logits(enc, state, prev, nullptr);
    terms.push_back(cross_entropy(logits, static_cast<std::size_t>(target)));
    prev = rng.bernoulli(teacher_forcing) ? target : static_cast<TokenId>(argmax(logits.values()));
  }
  return total_of(terms);
}

// ---------------------------------------------------------------------------
// LmModel

LmModel::LmModel(ModelDims dims, const InventorySizes& sizes, Rng& rng)
    : dims_(dims), sizes_(sizes) {
  word_embedding_ =
      params_.create("lm.word_embedding", Shape(sizes.subwords, dims.embedding), rng);
  cell_ = GruCell(params_, "lm.cell", dims.embedding, dims.hidden, rng);
  output_ = Linear(params_, "lm.output", dims.hidden, sizes.subwords, rng);
}

Tensor LmModel::step_logits(Tensor& state, TokenId prev_word) const {
  check_id(prev_word, sizes_.subwords, "subword");
  state = cell_.step(embedding(word_embedding_, static_cast<std::size_t>(prev_word)), state);
  return output_(state);
}

LmModel::Step LmModel::step(const Tensor& state, TokenId prev_word) const {
  Step out;
  out.state = state;
  out.word_logprobs = log_softmax(step_logits(out.state, prev_word));
  return out;
}

void LmModel::check_tokens(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) check_id(t, sizes_.subwords, "subword");
}

std::vector<double> LmModel::step_logprobs(std::span<const TokenId> tokens) const {
  check_tokens(tokens);
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(tokens.size() + 1);
  Tensor state = initial_state();
  TokenId prev = Specials::kBos;
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const TokenId target = t < tokens.size() ? tokens[t] : Specials::kEos;
    const Step s = step(state, prev);
    out.push_back(s.word_logprobs[static_cast<std::size_t>(target)]);
    state = s.state;
    prev = target;
  }
  return out;
}

double LmModel::score(std::span<const TokenId> tokens) const {
  double total = 0.0;
  for (double lp : step_logprobs(tokens)) total += lp;
  return total;
}

Tensor LmModel::loss(std::span<const TokenId> tokens) const {
  check_tokens(tokens);
  std::vector<Tensor> terms;
  terms.reserve(tokens.size() + 1);
  Tensor state = initial_state();
  TokenId prev = Specials::kBos;
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const TokenId target = t < tokens.size() ? tokens[t] : Specials::kEos;
    terms.push_back(cross_entropy(step_logits(state, prev), static_cast<std::size_t>(target)));
    prev = target;
  }
  return total_of(terms);
}

// ---------------------------------------------------------------------------
// MaskedFrameModel

MaskedFrameModel::MaskedFrameModel(ModelDims dims, const InventorySizes& sizes, Rng& rng)
    : dims_(dims), sizes_(sizes) {
  encoder_ = FrameEncoder(params_, "mfm.encoder", dims, sizes, rng);
  mask_vector_ = params_.create("mfm.mask", Shape(dims.hidden), rng);
  for (std::size_t l = 0; l < kLayers; ++l) {
    const std::string p = "mfm.block" + std::to_string(l);
    Block b;
    b.query = Linear(params_, p + ".query", dims.hidden, dims.hidden, rng);
    b.key = Linear(params_, p + ".key", dims.hidden, dims.hidden, rng);
    b.value = Linear(params_, p + ".value", dims.hidden, dims.hidden, rng);
    b.output = Linear(params_, p + ".output", dims.hidden, dims.hidden, rng);
    b.ff_in = Linear(params_, p + ".ff_in", dims.hidden, dims.hidden, rng);
    b.ff_out = Linear(params_, p + ".ff_out", dims.hidden, dims.hidden, rng);
    blocks_.push_back(std::move(b));
  }
  classifier_ = Linear(params_, "mfm.classifier", dims.hidden, class_count(), rng);
}

std::size_t MaskedFrameModel::class_of(const FrameFeature& feature) const {
  switch (feature.kind) {
    case FrameFeature::Kind::kSlot:
      check_id(feature.label, sizes_.keys, "slot key");
      return static_cast<std::size_t>(feature.label);
    case FrameFeature::Kind::kIntent:
      check_id(feature.label, sizes_.intents, "intent");
      return sizes_.keys + static_cast<std::size_t>(feature.label);
    case FrameFeature::Kind::kPlaceholder:
      return sizes_.keys + sizes_.intents;
  }
  return 0;
}

std::vector<Tensor> MaskedFrameModel::logits(const FrameInput& frame,
                                             const std::vector<bool>& masked) const {
  std::vector<Tensor> xs = encoder_.encode(frame);
  if (masked.size() != xs.size()) {
    throw StructuralError("mask covers " + std::to_string(masked.size()) + " of " +
                          std::to_string(xs.size()) + " features");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (masked[i]) xs[i] = mask_vector_;
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dims_.hidden));
  for (const Block& b : blocks_) {
    std::vector<Tensor> keys;
    std::vector<Tensor> values;
    keys.reserve(xs.size());
    values.reserve(xs.size());
    for (const Tensor& x : xs) {
      keys.push_back(b.key(x));
      values.push_back(b.value(x));
    }
    const Tensor key_matrix = stack(keys);
    const Tensor value_matrix = stack(values);
    std::vector<Tensor> next;
    next.reserve(xs.size());
    for (const Tensor& x : xs) {
      const Tensor weights = softmax(scale(matmul(key_matrix, b.query(x)), inv_sqrt));
      const Tensor attended = x + b.output(matvec_t(value_matrix, weights));
      next.push_back(attended + b.ff_out(tanh(b.ff_in(attended))));
    }
    xs = std::move(next);
  }
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const Tensor& x : xs) out.push_back(classifier_(x));
  return out;
}

std::vector<Tensor> MaskedFrameModel::classify(const FrameInput& frame,
                                               const std::vector<bool>& masked) const {
  std::vector<Tensor> out = logits(frame, masked);
  for (Tensor& t : out) t = log_softmax(t);
  return out;
}

double MaskedFrameModel::masked_logprob(const FrameInput& frame, std::size_t position) const {
  if (position >= frame.features.size()) {
    throw StructuralError("mask position " + std::to_string(position) + " outside frame of " +
                          std::to_string(frame.features.size()) + " features");
  }
  NoGradGuard no_grad;
  std::vector<bool> masked(frame.features.size(), false);
  masked[position] = true;
  const std::vector<Tensor> all = logits(frame, masked);
  return log_softmax(all[position])[class_of(frame.features[position])];
}

double MaskedFrameModel::score(const FrameInput& frame, Rng& rng) const {
  if (frame.features.empty()) throw StructuralError("cannot score a frame with zero features");
  std::map<std::size_t, double> cache;
  double total = 0.0;
  for (std::size_t draw = 0; draw < kScoringDraws; ++draw) {
    const std::size_t pos = rng.below(frame.features.size());
    auto it = cache.find(pos);
    if (it == cache.end()) it = cache.emplace(pos, masked_logprob(frame, pos)).first;
    total += it->second;
  }
  return total;
}

Tensor MaskedFrameModel::loss(const FrameInput& frame, double mask_prob, Rng& rng) const {
  const std::size_t n = frame.features.size();
  if (n == 0) throw StructuralError("cannot train on a frame with zero features");
  std::vector<bool> masked(n, false);
  bool any = false;
  while (!any) {
    for (std::size_t i = 0; i < n; ++i) {
      masked[i] = rng.bernoulli(mask_prob);
      any = any || masked[i];
    }
  }
  const std::vector<Tensor> all = logits(frame, masked);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i]) terms.push_back(cross_entropy(all[i], class_of(frame.features[i])));
  }
  return total_of(terms);
}

}  // namespace dualinf
