#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dualinf/errors.hpp"
#include "dualinf/metrics.hpp"

using namespace dualinf;

namespace {

// Frozen five-pair fixture. The n-gram statistics below were counted by hand.
//
// 1  hyp "the cat sat on the mat"   ref "the cat sat on a mat"
//    clipped matches 1..4-gram: 5/6, 3/5, 2/4, 1/3; lengths c=6 r=6
// 2  hyp "a dog runs"               refs "a dog runs fast" | "the dog runs"
//    3/3, 2/2, 1/1, 0/0; c=3, closest r=3
// 3  hyp "world hello"              ref "hello there world"
//    2/2, 0/1, 0/0, 0/0; c=2 r=3
// 4  hyp "the the the"              refs "the cat" | "the"
//    1/3 (clipped), 0/2, 0/1, 0/0; c=3, closest r=2
// 5  hyp "good food here"           ref "good food here today"
//    3/3, 2/2, 1/1, 0/0; c=3 r=4
// Corpus: 14/17, 7/12, 4/7, 1/3; c=17, r=18.
struct Fixture {
  std::vector<Words> hyps;
  std::vector<std::vector<Words>> refs;
};

Fixture fixture() {
  Fixture f;
  const auto w = [](const char* s) { return split_words(s); };
  f.hyps = {w("the cat sat on the mat"), w("a dog runs"), w("world hello"), w("the the the"),
            w("good food here")};
  f.refs = {{w("the cat sat on a mat")},
            {w("a dog runs fast"), w("the dog runs")},
            {w("hello there world")},
            {w("the cat"), w("the")},
            {w("good food here today")}};
  return f;
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r); }

}  // namespace

TEST_CASE("corpus bleu on the hand-counted fixture") {
  const Fixture f = fixture();
  const double log_p = (std::log(14.0 / 17) + std::log(7.0 / 12) + std::log(4.0 / 7) +
                        std::log(1.0 / 3)) / 4.0;
  const double bp = std::exp(1.0 - 18.0 / 17.0);
  CHECK(std::abs(bleu(f.hyps, f.refs) - bp * std::exp(log_p)) < 1e-9);
}

TEST_CASE("rouge on the hand-counted fixture") {
  const Fixture f = fixture();
  // ROUGE-1 per pair (best reference): 5/6, max(6/7, 2/3), 4/5, max(2/5, 1/2), 6/7
  const double r1[] = {f1(5. / 6, 5. / 6), f1(1, 3. / 4), f1(1, 2. / 3), f1(1. / 3, 1),
                       f1(1, 3. / 4)};
  // ROUGE-2: 3/5, max(4/5, 1/2), 0, 0, 4/5
  const double r2[] = {f1(3. / 5, 3. / 5), f1(1, 2. / 3), 0.0, 0.0, f1(1, 2. / 3)};
  // ROUGE-L (LCS 5, 3, 1, 1, 3): 5/6, 6/7, 2/5, 1/2, 6/7
  const double rl[] = {f1(5. / 6, 5. / 6), f1(1, 3. / 4), f1(1. / 2, 1. / 3), f1(1. / 3, 1),
                       f1(1, 3. / 4)};
  double m1 = 0, m2 = 0, ml = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CAPTURE(i);
    CHECK(std::abs(rouge_n(f.hyps[i], f.refs[i], 1) - r1[i]) < 1e-12);
    CHECK(std::abs(rouge_n(f.hyps[i], f.refs[i], 2) - r2[i]) < 1e-12);
    CHECK(std::abs(rouge_l(f.hyps[i], f.refs[i]) - rl[i]) < 1e-12);
    m1 += r1[i] / 5;
    m2 += r2[i] / 5;
    ml += rl[i] / 5;
  }
  const RougeScores corpus = corpus_rouge(f.hyps, f.refs);
  CHECK(std::abs(corpus.rouge1 - m1) < 1e-9);
  CHECK(std::abs(corpus.rouge2 - 0.44) < 1e-9);
  CHECK(std::abs(corpus.rouge2 - m2) < 1e-9);
  CHECK(std::abs(corpus.rougeL - ml) < 1e-9);
}

TEST_CASE("bleu edge cases") {
  const std::vector<Words> same{split_words("a b c d e"), split_words("x y z w")};
  const std::vector<std::vector<Words>> same_refs{{same[0]}, {same[1]}};
  CHECK(bleu(same, same_refs) == doctest::Approx(1.0));
  // No 4-gram matches anywhere: the geometric mean is zero without smoothing.
  const std::vector<Words> h{split_words("a b c d")};
  const std::vector<std::vector<Words>> r{{split_words("a b c e")}};
  CHECK(bleu(h, r) == 0.0);
  CHECK_THROWS_AS(bleu(h, std::vector<std::vector<Words>>{}), StructuralError);
  CHECK_THROWS_AS(bleu(h, std::vector<std::vector<Words>>{{}}), StructuralError);
  // Brevity ties go to the shorter reference: c=5 with refs of 4 and 6 uses
  // r=4, so BP=1; resolving to 6 would give exp(1 - 6/5).
  const std::vector<Words> h5{split_words("a b c d e")};
  const std::vector<std::vector<Words>> refs46{{split_words("a b c d"), split_words("a b c d e f")}};
  const std::vector<std::vector<Words>> refs6{{split_words("a b c d e f")}};
  // Every n-gram of the hypothesis occurs in "a b c d e f", so precisions are 1.
  CHECK(bleu(h5, refs46) == doctest::Approx(1.0));
  CHECK(bleu(h5, refs6) == doctest::Approx(std::exp(1.0 - 6.0 / 5.0)));
}

TEST_CASE("slot f1 fixtures") {
  const TagScheme scheme(2);
  const std::vector<IobSequence> gold{IobSequence{{1, 2, 0, 0}}};
  const std::vector<IobSequence> spurious{IobSequence{{1, 2, 0, 3}}};
  const SpanScore s = slot_f1(spurious, gold, scheme);
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 2.0 / 3.0);
  CHECK(s.matched == 1);
  CHECK(s.predicted == 2);
  CHECK(s.gold == 1);

  const SpanScore same = slot_f1(gold, gold, scheme);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  const std::vector<IobSequence> all_o{IobSequence{{0, 0, 0, 0}}};
  const SpanScore none = slot_f1(all_o, gold, scheme);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);

  // A span with the wrong boundary does not count; an orphan I- is repaired.
  const std::vector<IobSequence> boundary{IobSequence{{1, 0, 0, 0}}};
  CHECK(slot_f1(boundary, gold, scheme).matched == 0);
  const std::vector<IobSequence> orphan{IobSequence{{2, 2, 0, 0}}};
  CHECK(slot_f1(orphan, gold, scheme).f1 == 1.0);
  CHECK_THROWS_AS(slot_f1(std::vector<IobSequence>{IobSequence{{0}}}, gold, scheme),
                  StructuralError);
}

TEST_CASE("intent accuracy") {
  const std::vector<LabelId> p{0, 1, 2, 2};
  const std::vector<LabelId> g{0, 1, 1, 2};
  CHECK(intent_accuracy(p, g) == 0.75);
  CHECK(intent_accuracy(std::vector<LabelId>{}, std::vector<LabelId>{}) == 0.0);
  CHECK_THROWS_AS(intent_accuracy(p, std::vector<LabelId>{0}), StructuralError);
}

TEST_CASE("report serialisation") {
  EvalReport r;
  r.nlu_examples = 2;
  r.intent_accuracy = 0.5;
  r.slots = SpanScore{0.5, 1.0, 2.0 / 3.0, 1, 2, 1};
  const std::string json = r.to_json();
  CHECK(json.find("\"intent_accuracy\": 0.5") != std::string::npos);
  CHECK(json.find("bleu") == std::string::npos);
  const std::string header = EvalReport::csv_header();
  const std::string row = r.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(row.find(",,") != std::string::npos);  // absent generation metrics
}
