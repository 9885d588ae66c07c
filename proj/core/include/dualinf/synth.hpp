#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualinf/data.hpp"

namespace dualinf {

// Aligned corpora from a small template grammar: nlu[i] and nlg[i] describe
// the same utterance and frame.
struct SynthCorpus {
  std::vector<NluExample> nlu;
  std::vector<NlgExample> nlg;
};

// Registers the synthetic domain's 4 intents and 6 slot keys in a fixed
// order, so every generated split shares one inventory.
void register_synth_labels(LabelVocab& labels);

// Example i uses template i mod T with seeded value draws; the final list is
// shuffled with the same seed. Each (intent, key set) belongs to exactly one
// template, so the utterance is a function of the frame.
SynthCorpus synth_corpus(std::uint64_t seed, std::size_t size, LabelVocab& labels);

// Replaces one slot value in round(fraction * n) randomly chosen examples
// with a different value observed for the same key elsewhere in `examples`;
// references are left untouched. Deterministic under `seed`.
std::vector<NlgExample> corrupt_frames(std::span<const NlgExample> examples, double fraction,
                                       std::uint64_t seed);

}  // namespace dualinf
