#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dualinf/errors.hpp"
#include "dualinf/models.hpp"
#include "test_support.hpp"

using namespace dualinf;
using dualinf::testing::check_store_gradients;

namespace {

const ModelDims kDims{4, 6};
const InventorySizes kSizes{12, 10, 3, 2};

Utterance toy_words() {
  Utterance u;
  u.tokens = {5, 6, 7, 8};
  u.pieces = {"w5", "w6", "w7", "w8"};
  u.surface = "w5 w6 w7 w8";
  return u;
}

const IobSequence kTags{{0, 1, 2, 5}};

FrameInput toy_frame() {
  FrameInput f;
  f.features.push_back({FrameFeature::Kind::kIntent, 1, {}});
  f.features.push_back({FrameFeature::Kind::kSlot, 0, {5, 6}});
  f.features.push_back({FrameFeature::Kind::kSlot, 2, {7}});
  return f;
}

const std::vector<TokenId> kSubwords{4, 7, 9, 5};

}  // namespace

TEST_CASE("model kind names") {
  CHECK(to_string(ModelKind::kMaskedFrame) == "mfm");
  CHECK(parse_model_kind("nlg") == ModelKind::kNlg);
  CHECK_THROWS_AS(parse_model_kind("gpt"), ConfigError);
}

TEST_CASE("frame lowering") {
  const std::vector<std::string> texts{"new york boston"};
  const WordVocab words = WordVocab::build(texts);
  SemanticFrame frame;
  frame.intent = 1;
  frame.set(0, {"new", "york"});
  const FrameInput in = make_frame_input(frame, words);
  REQUIRE(in.features.size() == 2);
  CHECK(in.features[0].kind == FrameFeature::Kind::kIntent);
  CHECK(in.features[0].label == 1);
  CHECK(in.features[1].kind == FrameFeature::Kind::kSlot);
  CHECK(in.features[1].value == std::vector<TokenId>{words.id("new"), words.id("york")});
  const FrameInput empty = make_frame_input(SemanticFrame{}, words);
  REQUIRE(empty.features.size() == 1);
  CHECK(empty.features[0].kind == FrameFeature::Kind::kPlaceholder);
}

TEST_CASE("nlu gradients and score consistency") {
  Rng init(1);
  NluModel model(kDims, kSizes, init);
  const Utterance words = toy_words();
  const auto loss = [&] {
    Rng rng(0);
    return model.loss(words, kTags, LabelId{1}, 1.0, rng);
  };
  const auto r = check_store_gradients(model.params(), loss, 25, 17);
  CHECK(r.nonzero >= 25);
  CHECK(r.worst_relative < 1e-4);

  const NluScore s = model.score(words, kTags, LabelId{1});
  CHECK(s.total == doctest::Approx(-loss().item()).epsilon(1e-12));
  REQUIRE(s.tag_logprobs.size() == 4);
  REQUIRE(s.intent_logprob.has_value());
  CHECK(s.total == doctest::Approx(std::accumulate(s.tag_logprobs.begin(), s.tag_logprobs.end(),
                                                   *s.intent_logprob)));
  // Step-by-step replay gives the same per-tag log-probabilities.
  Tensor state = model.initial_state();
  TagId prev = model.start_tag();
  for (std::size_t t = 0; t < 4; ++t) {
    const NluModel::Step step = model.step(state, words.tokens[t], prev);
    CHECK(step.tag_logprobs[static_cast<std::size_t>(kTags.tags[t])] ==
          doctest::Approx(s.tag_logprobs[t]).epsilon(1e-12));
    state = step.state;
    prev = kTags.tags[t];
  }
  CHECK(model.intent_logprobs(state)[1] == doctest::Approx(*s.intent_logprob).epsilon(1e-12));
}

TEST_CASE("nlu rejects inconsistent inputs") {
  Rng init(1);
  NluModel model(kDims, kSizes, init);
  CHECK_THROWS_AS(model.score(toy_words(), IobSequence{{0, 1}}, std::nullopt), StructuralError);
  CHECK_THROWS_AS(model.score(toy_words(), IobSequence{{0, 1, 2, 7}}, std::nullopt),
                  StructuralError);
  CHECK_THROWS_AS(model.score(toy_words(), kTags, LabelId{2}), StructuralError);
  Utterance bad = toy_words();
  bad.tokens[0] = 12;
  CHECK_THROWS_AS(model.score(bad, kTags, std::nullopt), StructuralError);
}

TEST_CASE("nlg gradients and score consistency") {
  Rng init(2);
  NlgModel model(kDims, kSizes, init);
  const FrameInput frame = toy_frame();
  const auto loss = [&] {
    Rng rng(0);
    return model.loss(frame, kSubwords, 1.0, rng);
  };
  const auto r = check_store_gradients(model.params(), loss, 25, 18);
  CHECK(r.nonzero >= 25);
  CHECK(r.worst_relative < 1e-4);

  const double score = model.score(frame, kSubwords);
  CHECK(score == doctest::Approx(-loss().item()).epsilon(1e-12));
  const std::vector<double> steps = model.step_logprobs(frame, kSubwords);
  REQUIRE(steps.size() == kSubwords.size() + 1);  // tokens then EOS
  CHECK(score == doctest::Approx(std::accumulate(steps.begin(), steps.end(), 0.0)));

  const NlgModel::Encoded enc = model.encode(frame);
  const NlgModel::Step first = model.step(enc, enc.initial, Specials::kBos);
  double attention_mass = 0.0;
  for (double a : first.attention.values()) attention_mass += a;
  CHECK(attention_mass == doctest::Approx(1.0));
  CHECK(first.word_logprobs[static_cast<std::size_t>(kSubwords[0])] ==
        doctest::Approx(steps[0]).epsilon(1e-12));
  CHECK_THROWS_AS(model.score(frame, std::vector<TokenId>{10}), StructuralError);
}

TEST_CASE("nlg handles the placeholder frame") {
  Rng init(2);
  NlgModel model(kDims, kSizes, init);
  FrameInput empty;
  empty.features.push_back({FrameFeature::Kind::kPlaceholder, 0, {}});
  CHECK(std::isfinite(model.score(empty, kSubwords)));
}

TEST_CASE("lm gradients and score consistency") {
  Rng init(3);
  LmModel model(kDims, kSizes, init);
  const auto loss = [&] { return model.loss(kSubwords); };
  const auto r = check_store_gradients(model.params(), loss, 25, 19);
  INFO(r.worst_name, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
  CHECK(r.nonzero >= 25);
  CHECK(r.worst_relative < 1e-4);
  CHECK(model.score(kSubwords) == doctest::Approx(-loss().item()).epsilon(1e-12));
  const auto steps = model.step_logprobs(kSubwords);
  CHECK(steps.size() == kSubwords.size() + 1);
  // An untrained model still defines a normalised distribution per step.
  const LmModel::Step s = model.step(model.initial_state(), Specials::kBos);
  double mass = 0.0;
  for (double lp : s.word_logprobs.values()) mass += std::exp(lp);
  CHECK(mass == doctest::Approx(1.0));
}

TEST_CASE("masked-frame gradients and scoring") {
  Rng init(4);
  MaskedFrameModel model(kDims, kSizes, init);
  const FrameInput frame = toy_frame();
  const auto loss = [&] {
    Rng rng(21);
    return model.loss(frame, 0.5, rng);
  };
  const auto r = check_store_gradients(model.params(), loss, 25, 20);
  CHECK(r.nonzero >= 25);
  CHECK(r.worst_relative < 1e-4);

  CHECK(model.class_count() == 3 + 2 + 1);
  CHECK(model.class_of(frame.features[0]) == 3 + 1);  // intents follow keys
  CHECK(model.class_of(frame.features[2]) == 2);

  // Each masked log-probability is the classifier output at that position.
  for (std::size_t pos = 0; pos < 3; ++pos) {
    std::vector<bool> masked(3, false);
    masked[pos] = true;
    const auto dists = model.classify(frame, masked);
    CHECK(model.masked_logprob(frame, pos) ==
          doctest::Approx(dists[pos][model.class_of(frame.features[pos])]).epsilon(1e-12));
  }
  // The frame score sums three positions drawn with replacement.
  Rng draws(8);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += model.masked_logprob(frame, draws.below(3));
  Rng rng(8);
  CHECK(model.score(frame, rng) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(model.score(FrameInput{}, rng), StructuralError);
}

TEST_CASE("masked-frame predictions ignore feature order") {
  Rng init(5);
  MaskedFrameModel model(kDims, kSizes, init);
  FrameInput a = toy_frame();
  FrameInput b;
  b.features = {a.features[2], a.features[0], a.features[1]};
  // No positional information: the same feature gets the same prediction.
  CHECK(model.masked_logprob(a, 2) == doctest::Approx(model.masked_logprob(b, 0)).epsilon(1e-10));
  CHECK(model.masked_logprob(a, 0) == doctest::Approx(model.masked_logprob(b, 1)).epsilon(1e-10));
}
