#include <doctest.h>

#include "dualinf/data.hpp"
#include "dualinf/errors.hpp"
#include "dualinf/frames.hpp"
#include "dualinf/textproc.hpp"

using namespace dualinf;

namespace {

IobSequence tags_of(LabelVocab& labels, std::initializer_list<const char*> names) {
  IobSequence seq;
  for (const char* n : names) seq.tags.push_back(labels.parse_tag(n, true));
  return seq;
}

std::vector<std::string> tag_names(const LabelVocab& labels, const IobSequence& seq) {
  std::vector<std::string> out;
  for (TagId t : seq.tags) out.push_back(labels.tag_name(t));
  return out;
}

}  // namespace

TEST_CASE("tag scheme layout") {
  const TagScheme scheme(3);
  CHECK(scheme.tag_count() == 7);
  CHECK(scheme.begin(0) == 1);
  CHECK(scheme.inside(0) == 2);
  CHECK(scheme.begin(2) == 5);
  CHECK(scheme.inside(2) == 6);
  CHECK(TagScheme::key_of(6) == 2);
  CHECK(TagScheme::is_begin(5));
  CHECK(TagScheme::is_inside(6));
  CHECK(TagScheme::is_outside(0));
  CHECK_FALSE(scheme.valid(7));
  CHECK_FALSE(scheme.valid(-1));
}

TEST_CASE("repair rewrites orphan inside tags") {
  const TagScheme scheme(2);
  // I-0 at the start, I-1 after B-0, I-1 after O.
  const IobSequence seq{{2, 1, 4, 0, 4, 4}};
  const IobSequence fixed = repair_iob(seq, scheme);
  CHECK(fixed.tags == std::vector<TagId>{1, 1, 3, 0, 3, 4});
  CHECK_FALSE(is_well_formed(seq, scheme));
  CHECK(is_well_formed(fixed, scheme));
  CHECK_THROWS_AS(repair_iob(IobSequence{{5}}, scheme), StructuralError);
}

TEST_CASE("span extraction after repair") {
  const TagScheme scheme(2);
  const IobSequence seq{{0, 1, 2, 2, 3, 1, 0, 4}};
  const auto spans = extract_spans(seq, scheme);
  REQUIRE(spans.size() == 4);
  CHECK(spans[0] == Span{1, 4, 0});
  CHECK(spans[1] == Span{4, 5, 1});
  CHECK(spans[2] == Span{5, 6, 0});
  CHECK(spans[3] == Span{7, 8, 1});  // orphan I-1 becomes its own span
}

TEST_CASE("iob_to_frame builds slots and keeps the last value of a repeated key") {
  LabelVocab labels;
  const LabelId intent = labels.add_intent("book");
  const IobSequence tags = tags_of(labels, {"B-city", "I-city", "O", "B-city", "O"});
  const Utterance utt = word_utterance("new york to boston please");
  const SemanticFrame frame = iob_to_frame(tags, intent, utt, labels.scheme());
  REQUIRE(frame.slots.size() == 1);
  CHECK(frame.intent == intent);
  CHECK(frame.slots[0].value == std::vector<std::string>{"boston"});
  CHECK_NOTHROW(frame.validate());

  CHECK_THROWS_AS(iob_to_frame(IobSequence{{0}}, intent, utt, labels.scheme()), StructuralError);
}

TEST_CASE("all-O tags give an intent-only frame") {
  LabelVocab labels;
  const LabelId intent = labels.add_intent("greet");
  labels.add_key("name");
  const SemanticFrame frame =
      iob_to_frame(IobSequence{{0, 0}}, intent, word_utterance("hello there"), labels.scheme());
  CHECK(frame.slots.empty());
  CHECK(frame.feature_count() == 1);
}

TEST_CASE("frame equality ignores slot order") {
  SemanticFrame a;
  a.set(0, {"x"});
  a.set(1, {"y", "z"});
  SemanticFrame b;
  b.set(1, {"y", "z"});
  b.set(0, {"x"});
  CHECK(a == b);
  b.set(0, {"w"});
  CHECK_FALSE(a == b);
  SemanticFrame bad;
  bad.slots = {Slot{0, {"a"}}, Slot{0, {"b"}}};
  CHECK_THROWS_AS(bad.validate(), StructuralError);
  bad.slots = {Slot{0, {}}};
  CHECK_THROWS_AS(bad.validate(), StructuralError);
}

TEST_CASE("frame_to_iob prefers longer values and the leftmost free span") {
  LabelVocab labels;
  const LabelId city = labels.add_key("city");
  const LabelId place = labels.add_key("place");
  SemanticFrame frame;
  frame.set(city, {"york"});
  frame.set(place, {"new", "york"});
  const Utterance utt = word_utterance("new york or york");
  const FrameAlignment a = frame_to_iob(frame, utt, labels.scheme());
  // The two-word value claims tokens 0-1 first; "york" then takes token 3.
  CHECK(tag_names(labels, a.tags) ==
        std::vector<std::string>{"B-place", "I-place", "O", "B-city"});
  CHECK(a.report.unmatched_count() == 0);
  CHECK(a.report.matches[0].start == 3);
  CHECK(a.report.matches[1].start == 0);
}

TEST_CASE("frame_to_iob fallback chain and unmatched bookkeeping") {
  LabelVocab labels;
  const LabelId a = labels.add_key("a");
  const LabelId b = labels.add_key("b");
  const LabelId c = labels.add_key("c");
  const LabelId d = labels.add_key("d");
  SemanticFrame frame;
  frame.set(a, {"Paris"});       // exact
  frame.set(b, {"rome"});        // lowercase vs "Rome,"
  frame.set(c, {"cheap"});       // stem vs "cheaply"
  frame.set(d, {"elsewhere"});   // absent
  const Utterance utt = word_utterance("Paris or Rome, cheaply");
  const FrameAlignment al = frame_to_iob(frame, utt, labels.scheme());
  CHECK(al.report.matches[0].rule == MatchRule::kExact);
  CHECK(al.report.matches[1].rule == MatchRule::kLowercase);
  CHECK(al.report.matches[2].rule == MatchRule::kStem);
  CHECK(al.report.matches[3].rule == MatchRule::kUnmatched);
  CHECK(al.report.unmatched() == std::vector<LabelId>{d});
  CHECK(tag_names(labels, al.tags) == std::vector<std::string>{"B-a", "O", "B-b", "B-c"});
}

TEST_CASE("word normalisation and stems") {
  CHECK(normalize_word("\"Hello,") == "hello");
  CHECK(normalize_word("who's") == "who's");
  CHECK(stem_match("moderate", "moderately"));
  CHECK(stem_match("Riverside", "riverside."));
  CHECK_FALSE(stem_match("car", "cars"));        // shorter than four characters
  CHECK_FALSE(stem_match("station", "stable"));  // diverges too early
  CHECK(split_words("  a \t b\nc ") == std::vector<std::string>{"a", "b", "c"});
  const std::vector<std::string> w{"a", "b"};
  CHECK(join_words(w) == "a b");
}

// Worked augmentation examples ------------------------------------------------

TEST_CASE("flight query tags become the printed frame") {
  LabelVocab labels;
  const LabelId intent = labels.add_intent("atis_flight");
  const std::string text = "which flights travel from kansas city to los angeles on april ninth";
  const IobSequence tags =
      tags_of(labels, {"O", "O", "O", "O", "B-fromloc.city_name", "I-fromloc.city_name", "O",
                       "B-toloc.city_name", "I-toloc.city_name", "O",
                       "B-depart_date.month_name", "B-depart_date.day_number"});
  const auto frames = augment_nlu_to_nlg(std::vector<NluExample>{{text, tags, intent}},
                                         labels.scheme());
  REQUIRE(frames.size() == 1);
  CHECK(labels.format(frames[0].frame) ==
        "{intent[atis_flight], fromloc.city_name[kansas city], toloc.city_name[los angeles], "
        "depart_date.month_name[april], depart_date.day_number[ninth]}");
  CHECK(frames[0].refs == std::vector<std::string>{text});
}

TEST_CASE("restaurant frame aligns to the reference through the fallback chain") {
  LabelVocab labels;
  const LabelId name = labels.add_key("name");
  const LabelId food = labels.add_key("food");
  const LabelId price = labels.add_key("priceRange");
  const LabelId area = labels.add_key("area");
  const LabelId near = labels.add_key("near");
  SemanticFrame frame;
  frame.set(name, {"Bibimbap", "House"});
  frame.set(food, {"English"});
  frame.set(price, {"moderate"});
  frame.set(area, {"riverside"});
  frame.set(near, {"Clare", "Hall"});
  const std::string ref =
      "Bibimbap House is a moderately priced restaurant who's main cuisine is English food. "
      "You will find this local gem near Clare Hall in the Riverside area.";
  const auto result =
      augment_nlg_to_nlu(std::vector<NlgExample>{{frame, {ref}}}, labels.scheme());
  REQUIRE(result.examples.size() == 1);
  CHECK(result.dropped == 0);
  const std::vector<std::string> expected = {
      "B-name", "I-name", "O", "O", "B-priceRange", "O", "O", "O", "O", "O", "O",
      "B-food", "O", "O", "O", "O", "O", "O", "O", "O", "B-near", "I-near", "O", "O",
      "B-area", "O"};
  CHECK(tag_names(labels, result.examples[0].tags) == expected);
  const MatchReport& report = result.reports[0];
  CHECK(report.matches[0].rule == MatchRule::kExact);      // name
  CHECK(report.matches[1].rule == MatchRule::kExact);      // food
  CHECK(report.matches[2].rule == MatchRule::kStem);       // moderate ~ moderately
  CHECK(report.matches[3].rule == MatchRule::kLowercase);  // riverside ~ Riverside
  CHECK(report.matches[4].rule == MatchRule::kExact);      // near
}
