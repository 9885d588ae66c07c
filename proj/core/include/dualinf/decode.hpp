#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualinf/frames.hpp"
#include "dualinf/models.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf {

// A decoded sequence. For NLG the payload holds subword ids (without EOS);
// for NLU it holds tag ids and `intent` carries the paired intent.
struct Hypothesis {
  std::vector<std::int32_t> payload;
  std::optional<LabelId> intent;
  double forward_logprob = 0.0;
  // One entry per scored decision: each payload symbol, then EOS (NLG) or
  // the intent (NLU).
  std::vector<double> per_step;

  bool operator==(const Hypothesis&) const = default;
};

// Stepwise view of an autoregressive model used by beam search.
class Stepper {
 public:
  struct Result {
    Tensor logprobs;  // log-distribution over vocab_size() symbols
    Tensor state;
  };

  virtual ~Stepper() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual Tensor initial_state() const = 0;
  virtual std::int32_t start_symbol() const = 0;
  // `position` is the index of the symbol being predicted.
  virtual Result step(const Tensor& state, std::int32_t prev, std::size_t position) const = 0;
};

class NlgStepper final : public Stepper {
 public:
  NlgStepper(const NlgModel& model, const FrameInput& frame);
  std::size_t vocab_size() const override { return model_.output_size(); }
  Tensor initial_state() const override { return encoded_.initial; }
  std::int32_t start_symbol() const override { return Specials::kBos; }
  Result step(const Tensor& state, std::int32_t prev, std::size_t position) const override;

 private:
  const NlgModel& model_;
  NlgModel::Encoded encoded_;
};

class LmStepper final : public Stepper {
 public:
  explicit LmStepper(const LmModel& model) : model_(model) {}
  std::size_t vocab_size() const override { return model_.output_size(); }
  Tensor initial_state() const override { return model_.initial_state(); }
  std::int32_t start_symbol() const override { return Specials::kBos; }
  Result step(const Tensor& state, std::int32_t prev, std::size_t position) const override;

 private:
  const LmModel& model_;
};

// Tags one utterance: the symbol predicted at position t is the tag of word t.
class NluStepper final : public Stepper {
 public:
  NluStepper(const NluModel& model, const Utterance& words) : model_(model), words_(words) {}
  std::size_t vocab_size() const override { return model_.tag_count(); }
  Tensor initial_state() const override { return model_.initial_state(); }
  std::int32_t start_symbol() const override { return model_.start_tag(); }
  Result step(const Tensor& state, std::int32_t prev, std::size_t position) const override;

 private:
  const NluModel& model_;
  const Utterance& words_;
};

struct BeamConfig {
  std::size_t beam = 20;
  // Total decoding steps including the EOS step, so payloads hold at most
  // max_len - 1 symbols when `eos` is set and exactly max_len otherwise.
  std::size_t max_len = 60;
  // End symbol; without one every hypothesis runs exactly max_len steps.
  std::optional<std::int32_t> eos = Specials::kEos;
};

struct BeamOutput {
  Hypothesis hypothesis;
  Tensor final_state;
};

// Beam search over log-probabilities. Live prefixes are pruned to the top
// `beam` after each step; every EOS completion is kept, and a prefix that
// reaches the length limit is completed immediately with its EOS scored.
// Returns up to `beam` completed hypotheses sorted by forward log-probability
// descending, then earlier completion, then lexicographic payload.
// Throws ConfigError when beam == 0 or max_len == 0 with an EOS symbol.
std::vector<BeamOutput> beam_search_states(const Stepper& stepper, const BeamConfig& config);
std::vector<Hypothesis> beam_search(const Stepper& stepper, const BeamConfig& config);

// NLU hypotheses: a tag-sequence beam of |words| steps, each tag sequence
// paired with its top `k_intent` intents, sorted by combined log-probability
// (ties: payload, then intent id) and truncated to `beam`.
std::vector<Hypothesis> nlu_hypotheses(const NluModel& model, const Utterance& words,
                                       std::size_t beam, std::size_t k_intent = 3);

// NLG hypotheses decoded from a frame.
std::vector<Hypothesis> nlg_hypotheses(const NlgModel& model, const FrameInput& frame,
                                       std::size_t beam, std::size_t max_len = 60);

// ---------------------------------------------------------------------------
// Dual inference

struct DualWeights {
  double alpha = 0.5;
  double beta = 0.5;

  // Throws ConfigError unless both lie in [0, 1].
  void validate() const;
  bool operator==(const DualWeights&) const = default;
};

struct DualComponents {
  double forward = 0.0;
  double backward = 0.0;
  double marg_out = 0.0;
  double marg_in = 0.0;
};

struct DualScore {
  DualComponents components;
  double combined = 0.0;
  // combined without the input-marginal term, which is the same for every
  // candidate of one input. Candidates are ranked on this value so that the
  // constant cannot turn a near-tie into a different decision by rounding.
  double ranking = 0.0;
};

// alpha * forward + (1 - alpha) * (backward + beta * marg_out - beta * marg_in)
double combine(const DualComponents& c, DualWeights w);
// alpha * forward + (1 - alpha) * (backward + beta * marg_out)
double ranking_score(const DualComponents& c, DualWeights w);
DualScore make_dual_score(const DualComponents& c, DualWeights w);

// Everything needed to score a hypothesis in the opposite direction.
struct DualModels {
  const NluModel& nlu;
  const NlgModel& nlg;
  const LmModel& lm;
  const MaskedFrameModel& mfm;
  const Lexicon& lexicon;
};

// Word-level utterance of a decoded NLG hypothesis.
Utterance nlg_surface(const Hypothesis& candidate, const Lexicon& lexicon);
// Semantic frame of an NLU hypothesis over the word-level utterance.
SemanticFrame nlu_frame(const Hypothesis& candidate, const Utterance& words,
                        const Lexicon& lexicon);

// Reconstruction term for an NLG hypothesis: the NLU log-probability of the
// input frame's tags, aligned to the hypothesis words by frame_to_iob, plus
// its intent.
double nlg_backward(const Hypothesis& candidate, const SemanticFrame& input_frame,
                    const DualModels& models);

// NLG direction: forward = candidate.forward_logprob, backward = nlg_backward,
// marg_out = LM(candidate), marg_in = masked-frame score of the input frame
// drawn from `rng`.
DualScore dual_score_nlg(const Hypothesis& candidate, const SemanticFrame& input_frame,
                         const DualModels& models, DualWeights w, Rng& rng);
// NLU direction: the candidate frame comes from iob_to_frame; backward =
// NLG(input | candidate frame), marg_out = masked-frame score of the
// candidate frame drawn from `rng`, marg_in = LM(input).
DualScore dual_score_nlu(const Hypothesis& candidate, const Utterance& input_words,
                         const DualModels& models, DualWeights w, Rng& rng);

struct ScoredHypothesis {
  Hypothesis hypothesis;
  DualComponents components;
};

// Weight-independent components for every candidate of one example. Masked-
// frame draws use Rng(derive_seed(seed, example_index, stream)) with stream 0
// for the input frame and 1 + i for candidate i, so results are identical to
// calling dual_score_* with freshly seeded generators.
std::vector<ScoredHypothesis> score_nlg_candidates(std::span<const Hypothesis> candidates,
                                                   const SemanticFrame& input_frame,
                                                   const DualModels& models, std::uint64_t seed,
                                                   std::size_t example_index);
std::vector<ScoredHypothesis> score_nlu_candidates(std::span<const Hypothesis> candidates,
                                                   const Utterance& input_words,
                                                   const DualModels& models, std::uint64_t seed,
                                                   std::size_t example_index);

// Index of the best candidate by combined score (compared through
// DualScore::ranking, which orders candidates of one input identically in
// exact arithmetic); ties go to the higher forward score, then to the
// earlier (beam-order) candidate.
// Throws StructuralError on an empty list.
std::size_t rerank(std::span<const ScoredHypothesis> scored, DualWeights w);
std::size_t rerank(std::span<const DualScore> scores);

// ---------------------------------------------------------------------------
// Grid search

// Values 0, step, 2*step, ..., 1 computed as i / n with n = round(1 / step).
std::vector<double> grid_values(double step);
// alpha-major: (a0,b0), (a0,b1), ...
std::vector<DualWeights> grid_points(double step);

struct MetricValue {
  std::string name;
  double value = 0.0;
};

// Scores one selection (one chosen candidate index per example).
using SelectionMetric =
    std::function<std::vector<MetricValue>(std::span<const std::size_t> selection)>;

struct GridRow {
  DualWeights weights;
  std::vector<MetricValue> metrics;
};

struct GridChoice {
  std::string metric;
  DualWeights weights;
  double value = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::vector<GridChoice> best;  // one per metric, in metric order
};

// Per-metric argmax over the table; ties prefer larger alpha, then smaller
// beta. Throws StructuralError on an empty table.
std::vector<GridChoice> select_best(std::span<const GridRow> rows);

// Re-ranks the cached candidates of every example under each grid point and
// evaluates the selection. Components are never recomputed.
// Throws StructuralError when there are no examples.
GridResult grid_search(std::span<const std::vector<ScoredHypothesis>> examples, double step,
                       const SelectionMetric& metric);

// CSV with header `alpha,beta,<metrics...>`; values in shortest round-trip
// form.
std::string grid_csv(std::span<const GridRow> rows);
// Parses grid_csv output. Throws DataError on malformed input.
std::vector<GridRow> parse_grid_csv(std::string_view text);

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

}  // namespace dualinf
