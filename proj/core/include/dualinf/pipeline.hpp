#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dualinf/data.hpp"
#include "dualinf/decode.hpp"
#include "dualinf/metrics.hpp"
#include "dualinf/models.hpp"
#include "dualinf/training.hpp"

namespace dualinf {

// Word vocabulary over the training utterances, references and slot values;
// BPE trained on the utterances and references; `labels` copied as given.
Lexicon build_lexicon(std::span<const NluExample> nlu_train, std::span<const NlgExample> nlg_train,
                      const LabelVocab& labels, std::size_t bpe_merges);

std::vector<NluTrainItem> make_nlu_items(std::span<const NluExample> examples,
                                         const Lexicon& lexicon);
// One item per (frame, reference) pair.
std::vector<NlgTrainItem> make_nlg_items(std::span<const NlgExample> examples,
                                         const Lexicon& lexicon);
// Subword sequences of the distinct utterances and references, in order of
// first appearance.
std::vector<std::vector<TokenId>> make_lm_items(std::span<const NluExample> nlu,
                                                std::span<const NlgExample> nlg,
                                                const Lexicon& lexicon);
std::vector<FrameInput> make_mfm_items(std::span<const NlgExample> frames, const Lexicon& lexicon);

struct DecodeOptions {
  std::size_t beam = 20;
  std::size_t max_len = 60;
  std::size_t k_intent = 3;
  std::uint64_t seed = 0;  // masked-frame draws
};

// Beam hypotheses per example (index 0 is the plain top-1).
std::vector<std::vector<Hypothesis>> decode_nlu(const NluModel& model,
                                                std::span<const NluExample> examples,
                                                const Lexicon& lexicon, const DecodeOptions& opts);
std::vector<std::vector<Hypothesis>> decode_nlg(const NlgModel& model,
                                                std::span<const NlgExample> examples,
                                                const Lexicon& lexicon, const DecodeOptions& opts);

// Dual-inference components for every hypothesis of every example; example
// i draws its masked-frame positions from seeds derived from (seed, i).
std::vector<std::vector<ScoredHypothesis>> score_nlu(
    std::span<const std::vector<Hypothesis>> hypotheses, std::span<const NluExample> examples,
    const DualModels& models, std::uint64_t seed);
std::vector<std::vector<ScoredHypothesis>> score_nlg(
    std::span<const std::vector<Hypothesis>> hypotheses, std::span<const NlgExample> examples,
    const DualModels& models, std::uint64_t seed);

// Selection under fixed weights.
std::vector<std::size_t> select(std::span<const std::vector<ScoredHypothesis>> scored,
                                DualWeights w);

// Metrics of one selection (one hypothesis index per example). Intent
// accuracy is reported only when the examples carry intents.
EvalReport nlu_report(std::span<const NluExample> examples,
                      std::span<const std::vector<Hypothesis>> hypotheses,
                      std::span<const std::size_t> selection, const Lexicon& lexicon);
EvalReport nlg_report(std::span<const NlgExample> examples,
                      std::span<const std::vector<Hypothesis>> hypotheses,
                      std::span<const std::size_t> selection, const Lexicon& lexicon);

// Grid-search metric columns for each direction.
std::vector<MetricValue> nlu_metric_values(const EvalReport& report);
std::vector<MetricValue> nlg_metric_values(const EvalReport& report);

// Decoded text of an NLG hypothesis.
std::string hypothesis_text(const Hypothesis& h, const Lexicon& lexicon);

}  // namespace dualinf
