#include "dualinf/pipeline.hpp"

#include <set>

#include "dualinf/errors.hpp"

namespace dualinf {

Lexicon build_lexicon(std::span<const NluExample> nlu_train, std::span<const NlgExample> nlg_train,
                      const LabelVocab& labels, std::size_t bpe_merges) {
  std::vector<std::string> texts;
  std::vector<std::string> word_texts;
  for (const NluExample& ex : nlu_train) texts.push_back(ex.text);
  for (const NlgExample& ex : nlg_train) {
    for (const std::string& r : ex.refs) texts.push_back(r);
  }
  word_texts = texts;
  for (const NlgExample& ex : nlg_train) {
    for (const Slot& s : ex.frame.slots) word_texts.push_back(join_words(s.value));
  }
  if (texts.empty()) throw DataError("no training utterances to build a vocabulary from");
  Lexicon lex;
  lex.words = WordVocab::build(word_texts);
  lex.bpe = BpeModel::train(texts, bpe_merges);
  lex.labels = labels;
  return lex;
}

std::vector<NluTrainItem> make_nlu_items(std::span<const NluExample> examples,
                                         const Lexicon& lexicon) {
  std::vector<NluTrainItem> items;
  items.reserve(examples.size());
  for (const NluExample& ex : examples) {
    items.push_back({lexicon.words.encode(ex.text), ex.tags, ex.intent});
  }
  return items;
}

std::vector<NlgTrainItem> make_nlg_items(std::span<const NlgExample> examples,
                                         const Lexicon& lexicon) {
  std::vector<NlgTrainItem> items;
  for (const NlgExample& ex : examples) {
    const FrameInput frame = make_frame_input(ex.frame, lexicon.words);
    for (const std::string& r : ex.refs) items.push_back({frame, lexicon.bpe.encode(r).tokens});
  }
  return items;
}

std::vector<std::vector<TokenId>> make_lm_items(std::span<const NluExample> nlu,
                                                std::span<const NlgExample> nlg,
                                                const Lexicon& lexicon) {
  std::vector<std::vector<TokenId>> items;
  std::set<std::string> seen;
  const auto add = [&](const std::string& text) {
    if (seen.insert(text).second) items.push_back(lexicon.bpe.encode(text).tokens);
  };
  for (const NluExample& ex : nlu) add(ex.text);
  for (const NlgExample& ex : nlg) {
    for (const std::string& r : ex.refs) add(r);
  }
  return items;
}

std::vector<FrameInput> make_mfm_items(std::span<const NlgExample> frames, const Lexicon& lexicon) {
  std::vector<FrameInput> items;
  items.reserve(frames.size());
  for (const NlgExample& ex : frames) items.push_back(make_frame_input(ex.frame, lexicon.words));
  return items;
}

std::vector<std::vector<Hypothesis>> decode_nlu(const NluModel& model,
                                                std::span<const NluExample> examples,
                                                const Lexicon& lexicon, const DecodeOptions& opts) {
  std::vector<std::vector<Hypothesis>> out;
  out.reserve(examples.size());
  for (const NluExample& ex : examples) {
    out.push_back(nlu_hypotheses(model, lexicon.words.encode(ex.text), opts.beam, opts.k_intent));
  }
  return out;
}

std::vector<std::vector<Hypothesis>> decode_nlg(const NlgModel& model,
                                                std::span<const NlgExample> examples,
                                                const Lexicon& lexicon, const DecodeOptions& opts) {
  std::vector<std::vector<Hypothesis>> out;
  out.reserve(examples.size());
  for (const NlgExample& ex : examples) {
    out.push_back(nlg_hypotheses(model, make_frame_input(ex.frame, lexicon.words), opts.beam,
                                 opts.max_len));
  }
  return out;
}

namespace {

void require_aligned(std::size_t a, std::size_t b) {
  if (a != b) {
    throw StructuralError("hypothesis lists for " + std::to_string(a) + " examples but " +
                          std::to_string(b) + " examples given");
  }
}

}  // namespace

std::vector<std::vector<ScoredHypothesis>> score_nlu(
    std::span<const std::vector<Hypothesis>> hypotheses, std::span<const NluExample> examples,
    const DualModels& models, std::uint64_t seed) {
  require_aligned(hypotheses.size(), examples.size());
  std::vector<std::vector<ScoredHypothesis>> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back(score_nlu_candidates(hypotheses[i],
                                       models.lexicon.words.encode(examples[i].text), models,
                                       seed, i));
  }
  return out;
}

std::vector<std::vector<ScoredHypothesis>> score_nlg(
    std::span<const std::vector<Hypothesis>> hypotheses, std::span<const NlgExample> examples,
    const DualModels& models, std::uint64_t seed) {
  require_aligned(hypotheses.size(), examples.size());
  std::vector<std::vector<ScoredHypothesis>> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back(score_nlg_candidates(hypotheses[i], examples[i].frame, models, seed, i));
  }
  return out;
}

std::vector<std::size_t> select(std::span<const std::vector<ScoredHypothesis>> scored,
                                DualWeights w) {
  std::vector<std::size_t> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(rerank(s, w));
  return out;
}

EvalReport nlu_report(std::span<const NluExample> examples,
                      std::span<const std::vector<Hypothesis>> hypotheses,
                      std::span<const std::size_t> selection, const Lexicon& lexicon) {
  require_aligned(hypotheses.size(), examples.size());
  require_aligned(selection.size(), examples.size());
  std::vector<IobSequence> pred_tags;
  std::vector<IobSequence> gold_tags;
  std::vector<LabelId> pred_intents;
  std::vector<LabelId> gold_intents;
  bool intents = !examples.empty();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Hypothesis& h = hypotheses[i].at(selection[i]);
    pred_tags.push_back(IobSequence{h.payload});
    gold_tags.push_back(examples[i].tags);
    if (examples[i].intent) {
      gold_intents.push_back(*examples[i].intent);
      pred_intents.push_back(h.intent.value_or(-1));
    } else {
      intents = false;
    }
  }
  EvalReport r;
  r.nlu_examples = examples.size();
  if (intents) r.intent_accuracy = intent_accuracy(pred_intents, gold_intents);
  r.slots = slot_f1(pred_tags, gold_tags, lexicon.labels.scheme());
  return r;
}

std::string hypothesis_text(const Hypothesis& h, const Lexicon& lexicon) {
  return lexicon.bpe.decode(h.payload);
}

EvalReport nlg_report(std::span<const NlgExample> examples,
                      std::span<const std::vector<Hypothesis>> hypotheses,
                      std::span<const std::size_t> selection, const Lexicon& lexicon) {
  require_aligned(hypotheses.size(), examples.size());
  require_aligned(selection.size(), examples.size());
  std::vector<Words> hyps;
  std::vector<std::vector<Words>> refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    hyps.push_back(split_words(hypothesis_text(hypotheses[i].at(selection[i]), lexicon)));
    std::vector<Words> r;
    for (const std::string& ref : examples[i].refs) r.push_back(split_words(ref));
    refs.push_back(std::move(r));
  }
  EvalReport r;
  r.nlg_examples = examples.size();
  r.bleu = bleu(hyps, refs);
  r.rouge = corpus_rouge(hyps, refs);
  return r;
}

std::vector<MetricValue> nlu_metric_values(const EvalReport& report) {
  std::vector<MetricValue> out;
  if (report.intent_accuracy) out.push_back({"intent_accuracy", *report.intent_accuracy});
  if (report.slots) out.push_back({"slot_f1", report.slots->f1});
  return out;
}

std::vector<MetricValue> nlg_metric_values(const EvalReport& report) {
  std::vector<MetricValue> out;
  if (report.bleu) out.push_back({"bleu", *report.bleu});
  if (report.rouge) {
    out.push_back({"rouge1", report.rouge->rouge1});
    out.push_back({"rouge2", report.rouge->rouge2});
    out.push_back({"rougeL", report.rouge->rougeL});
  }
  return out;
}

}  // namespace dualinf
