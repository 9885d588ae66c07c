#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualinf/frames.hpp"

namespace dualinf {

using Words = std::vector<std::string>;

// Exact-match fraction. Throws StructuralError on a length mismatch; an empty
// corpus scores 0.
double intent_accuracy(std::span<const LabelId> predicted, std::span<const LabelId> gold);

struct SpanScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

// Micro-averaged exact-span P/R/F1 over repaired IOB sequences. Zero
// denominators give 0. Throws StructuralError on a length mismatch.
SpanScore slot_f1(std::span<const IobSequence> predicted, std::span<const IobSequence> gold,
                  const TagScheme& scheme);

// Corpus BLEU-4: clipped n-gram precision (clip = max count over the
// references), brevity penalty against the closest reference length (ties
// go to the shorter), uniform geometric mean, no smoothing.
// Throws StructuralError on a length mismatch or an empty reference set.
double bleu(std::span<const Words> hypotheses, std::span<const std::vector<Words>> references);

// Sentence-level ROUGE F1 against the best-matching reference.
double rouge_n(const Words& hypothesis, std::span<const Words> references, std::size_t n);
double rouge_l(const Words& hypothesis, std::span<const Words> references);

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// Arithmetic mean of the per-example ROUGE F1 scores.
RougeScores corpus_rouge(std::span<const Words> hypotheses,
                         std::span<const std::vector<Words>> references);

struct EvalReport {
  std::size_t nlu_examples = 0;
  std::optional<double> intent_accuracy;
  std::optional<SpanScore> slots;
  std::size_t nlg_examples = 0;
  std::optional<double> bleu;
  std::optional<RougeScores> rouge;

  // Flat JSON object with the populated fields.
  std::string to_json() const;
  // Header and one row with every field (empty cells for absent ones).
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace dualinf
