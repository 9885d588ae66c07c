#include <doctest.h>

#include <algorithm>

#include "dualinf/errors.hpp"
#include "dualinf/pipeline.hpp"
#include "dualinf/synth.hpp"

using namespace dualinf;

namespace {

const ModelDims kDims{6, 8};

struct World {
  LabelVocab labels;
  SynthCorpus corpus;
  Lexicon lexicon;
  Rng init{17};
  NluModel nlu;
  NlgModel nlg;
  LmModel lm;
  MaskedFrameModel mfm;

  World()
      : corpus(synth_corpus(2, 30, labels)),
        lexicon(build_lexicon(corpus.nlu, corpus.nlg, labels, 40)),
        nlu(kDims, InventorySizes::of(lexicon), init),
        nlg(kDims, InventorySizes::of(lexicon), init),
        lm(kDims, InventorySizes::of(lexicon), init),
        mfm(kDims, InventorySizes::of(lexicon), init) {}

  DualModels models() const { return DualModels{nlu, nlg, lm, mfm, lexicon}; }
};

std::span<const NluExample> head(const std::vector<NluExample>& v, std::size_t n) {
  return std::span<const NluExample>(v).first(n);
}
std::span<const NlgExample> head(const std::vector<NlgExample>& v, std::size_t n) {
  return std::span<const NlgExample>(v).first(n);
}

}  // namespace

TEST_CASE("lexicon and training items") {
  const World w;
  for (const NlgExample& ex : w.corpus.nlg) {
    for (const Slot& s : ex.frame.slots) {
      for (const std::string& word : s.value) CHECK(w.lexicon.words.id(word) != Specials::kUnk);
    }
  }
  CHECK(w.lexicon.labels == w.labels);
  CHECK(make_nlu_items(w.corpus.nlu, w.lexicon).size() == w.corpus.nlu.size());
  CHECK(make_nlg_items(w.corpus.nlg, w.lexicon).size() == w.corpus.nlg.size());
  // Utterances and references coincide in the synthetic corpus.
  std::vector<std::string> distinct;
  for (const NluExample& ex : w.corpus.nlu) {
    if (std::find(distinct.begin(), distinct.end(), ex.text) == distinct.end()) {
      distinct.push_back(ex.text);
    }
  }
  const auto lm_items = make_lm_items(w.corpus.nlu, w.corpus.nlg, w.lexicon);
  REQUIRE(lm_items.size() == distinct.size());
  CHECK(lm_items[0] == w.lexicon.bpe.encode(distinct[0]).tokens);
  CHECK(make_mfm_items(w.corpus.nlg, w.lexicon).size() == w.corpus.nlg.size());
}

TEST_CASE("nlg components match an independent recomputation") {
  const World w;
  const DualModels models = w.models();
  DecodeOptions opts;
  opts.beam = 3;
  opts.max_len = 8;
  const auto examples = head(w.corpus.nlg, 4);
  const auto hyps = decode_nlg(w.nlg, examples, w.lexicon, opts);
  const std::uint64_t seed = 99;
  const auto scored = score_nlg(hyps, examples, models, seed);
  REQUIRE(scored.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(scored[i].size() == hyps[i].size());
    const SemanticFrame& frame = examples[i].frame;
    Rng mfm_rng(derive_seed(seed, i, 0));
    const double marg_in = w.mfm.score(make_frame_input(frame, w.lexicon.words), mfm_rng);
    for (std::size_t j = 0; j < hyps[i].size(); ++j) {
      CAPTURE(i);
      CAPTURE(j);
      const Hypothesis& h = hyps[i][j];
      const Utterance words = w.lexicon.words.encode(w.lexicon.bpe.decode(h.payload));
      const IobSequence tags = frame_to_iob(frame, words, w.labels.scheme()).tags;
      const DualComponents& c = scored[i][j].components;
      CHECK(c.forward == doctest::Approx(w.nlg.score(make_frame_input(frame, w.lexicon.words), h.payload)).epsilon(1e-12));
      CHECK(c.backward == w.nlu.score(words, tags, frame.intent).total);
      CHECK(c.marg_out == w.lm.score(h.payload));
      CHECK(c.marg_in == marg_in);

      // Cached components equal direct scoring with a fresh generator.
      const DualWeights weights{0.3, 0.7};
      Rng fresh(derive_seed(seed, i, 0));
      const DualScore direct = dual_score_nlg(h, frame, models, weights, fresh);
      CHECK(direct.combined == combine(c, weights));
    }
  }
}

TEST_CASE("nlu components match an independent recomputation") {
  const World w;
  const DualModels models = w.models();
  DecodeOptions opts;
  opts.beam = 4;
  const auto examples = head(w.corpus.nlu, 4);
  const auto hyps = decode_nlu(w.nlu, examples, w.lexicon, opts);
  const std::uint64_t seed = 5;
  const auto scored = score_nlu(hyps, examples, models, seed);
  for (std::size_t i = 0; i < 4; ++i) {
    const Utterance words = w.lexicon.words.encode(examples[i].text);
    const std::vector<TokenId> input_subwords = w.lexicon.bpe.encode(examples[i].text).tokens;
    REQUIRE(scored[i].size() == hyps[i].size());
    for (std::size_t j = 0; j < hyps[i].size(); ++j) {
      CAPTURE(i);
      CAPTURE(j);
      const Hypothesis& h = hyps[i][j];
      REQUIRE(h.intent.has_value());
      const SemanticFrame frame =
          iob_to_frame(IobSequence{h.payload}, h.intent, words, w.labels.scheme());
      const FrameInput in = make_frame_input(frame, w.lexicon.words);
      Rng mfm_rng(derive_seed(seed, i, 1 + j));
      const DualComponents& c = scored[i][j].components;
      CHECK(c.forward == doctest::Approx(w.nlu.score(words, IobSequence{h.payload}, h.intent).total)
                             .epsilon(1e-12));
      CHECK(c.backward == w.nlg.score(in, input_subwords));
      CHECK(c.marg_out == w.mfm.score(in, mfm_rng));
      CHECK(c.marg_in == w.lm.score(input_subwords));

      const DualWeights weights{0.6, 0.2};
      Rng fresh(derive_seed(seed, i, 1 + j));
      CHECK(dual_score_nlu(h, words, models, weights, fresh).combined == combine(c, weights));
    }
  }
}

TEST_CASE("selection at alpha one is the plain top-1") {
  const World w;
  DecodeOptions opts;
  opts.beam = 4;
  opts.max_len = 8;
  const auto examples = head(w.corpus.nlg, 5);
  const auto hyps = decode_nlg(w.nlg, examples, w.lexicon, opts);
  const auto scored = score_nlg(hyps, examples, w.models(), 1);
  for (double beta : {0.0, 0.5, 1.0}) {
    const auto sel = select(scored, DualWeights{1.0, beta});
    CHECK(std::all_of(sel.begin(), sel.end(), [](std::size_t s) { return s == 0; }));
  }
}

TEST_CASE("reports follow the metric definitions") {
  const World w;
  DecodeOptions opts;
  opts.beam = 2;
  opts.max_len = 8;
  const auto nlg_examples = head(w.corpus.nlg, 5);
  const auto nlg_hyps = decode_nlg(w.nlg, nlg_examples, w.lexicon, opts);
  const std::vector<std::size_t> top(5, 0);
  const EvalReport g = nlg_report(nlg_examples, nlg_hyps, top, w.lexicon);
  std::vector<Words> outs;
  std::vector<std::vector<Words>> refs;
  for (std::size_t i = 0; i < 5; ++i) {
    outs.push_back(split_words(hypothesis_text(nlg_hyps[i][0], w.lexicon)));
    refs.push_back({split_words(nlg_examples[i].refs[0])});
  }
  REQUIRE(g.bleu.has_value());
  CHECK(*g.bleu == doctest::Approx(bleu(outs, refs)));
  CHECK_FALSE(g.intent_accuracy.has_value());
  CHECK(nlg_metric_values(g).size() >= 2);

  const auto nlu_examples = head(w.corpus.nlu, 5);
  const auto nlu_hyps = decode_nlu(w.nlu, nlu_examples, w.lexicon, opts);
  const EvalReport u = nlu_report(nlu_examples, nlu_hyps, top, w.lexicon);
  std::vector<LabelId> predicted;
  std::vector<LabelId> gold;
  std::vector<IobSequence> ptags;
  std::vector<IobSequence> gtags;
  for (std::size_t i = 0; i < 5; ++i) {
    predicted.push_back(*nlu_hyps[i][0].intent);
    gold.push_back(*nlu_examples[i].intent);
    ptags.push_back(IobSequence{nlu_hyps[i][0].payload});
    gtags.push_back(nlu_examples[i].tags);
  }
  CHECK(*u.intent_accuracy == intent_accuracy(predicted, gold));
  CHECK(u.slots->f1 == slot_f1(ptags, gtags, w.labels.scheme()).f1);

  const std::vector<std::size_t> short_sel(4, 0);
  CHECK_THROWS_AS(nlu_report(nlu_examples, nlu_hyps, short_sel, w.lexicon), StructuralError);
}
