#include <doctest.h>

#include <filesystem>

#include "dualinf/errors.hpp"
#include "dualinf/textproc.hpp"

using namespace dualinf;

TEST_CASE("vocab reserves the special ids") {
  Vocab v;
  CHECK(v.size() == Specials::kCount);
  CHECK(v.symbol(Specials::kEos) == Specials::name(Specials::kEos));
  const TokenId a = v.add("alpha");
  CHECK(a == static_cast<TokenId>(Specials::kCount));
  CHECK(v.add("alpha") == a);
  CHECK(v.find("alpha") == a);
  CHECK_FALSE(v.find("beta").has_value());
  CHECK(v.id_or_unk("beta") == Specials::kUnk);
}

TEST_CASE("word vocab orders by frequency then spelling") {
  const std::vector<std::string> texts{"b a c", "a b", "a"};
  const WordVocab words = WordVocab::build(texts);
  const auto& syms = words.vocab().symbols();
  REQUIRE(syms.size() == Specials::kCount + 3);
  CHECK(syms[Specials::kCount] == "a");      // 3 occurrences
  CHECK(syms[Specials::kCount + 1] == "b");  // 2
  CHECK(syms[Specials::kCount + 2] == "c");  // 1
  const Utterance u = words.encode("c  zz a");
  CHECK(u.pieces == std::vector<std::string>{"c", "zz", "a"});
  CHECK(u.tokens[1] == Specials::kUnk);
  CHECK(u.surface == "c zz a");
  CHECK(WordVocab::from_symbols(syms) == words);
  CHECK_THROWS(WordVocab::from_symbols(
      std::vector<std::string>(syms.begin() + Specials::kCount, syms.end())));
}

TEST_CASE("bpe training follows most-frequent-pair merging") {
  // Word counts: aab x2, ab x1. Pair counts: (a,a)=2, (a,b)=3 -> merge (a,b).
  // Then aab = [a, ab] gives (a,ab)=2 -> merge (a,ab). No pairs remain.
  const std::vector<std::string> corpus{"aab aab ab"};
  const BpeModel bpe = BpeModel::train(corpus, 5);
  using P = std::pair<std::string, std::string>;
  CHECK(bpe.merges() == std::vector<P>{{"a", "b"}, {"a", "ab"}});
  CHECK(bpe.alphabet() == std::vector<std::string>{"a", "b"});
  const Utterance u = bpe.encode("ab aab ba");
  CHECK(u.pieces == std::vector<std::string>{"ab</w>", "aab</w>", "b", "a</w>"});
  CHECK(bpe.decode(u.tokens) == "ab aab ba");
}

TEST_CASE("bpe ties go to the lexicographically smallest pair") {
  const std::vector<std::string> corpus{"xy yz"};
  const BpeModel bpe = BpeModel::train(corpus, 1);
  REQUIRE(bpe.merges().size() == 1);
  CHECK(bpe.merges()[0] == std::pair<std::string, std::string>{"x", "y"});
}

TEST_CASE("bpe round trip, unknown characters and specials") {
  const std::vector<std::string> corpus{"the cat sat on the mat", "the hat"};
  const BpeModel bpe = BpeModel::train(corpus, 20);
  for (const std::string& s : corpus) CHECK(bpe.decode(bpe.encode(s).tokens) == s);
  const Utterance q = bpe.encode("cat?");
  CHECK(q.tokens.back() == Specials::kUnk);
  std::vector<TokenId> with_specials{Specials::kBos};
  for (TokenId t : bpe.encode("the mat").tokens) with_specials.push_back(t);
  with_specials.push_back(Specials::kEos);
  CHECK(bpe.decode(with_specials) == "the mat");
  CHECK_THROWS(bpe.decode(std::vector<TokenId>{static_cast<TokenId>(bpe.vocab_size())}));
  CHECK_THROWS_AS(BpeModel::train(std::vector<std::string>{"  "}, 3), DataError);
  CHECK(BpeModel::from_merges(bpe.alphabet(), bpe.merges()) == bpe);
}

TEST_CASE("bpe save and load") {
  const std::vector<std::string> corpus{"lower lowest low"};
  const BpeModel bpe = BpeModel::train(corpus, 4);
  const auto path = std::filesystem::temp_directory_path() / "dualinf_bpe_test.json";
  bpe.save(path);
  const BpeModel back = BpeModel::load(path);
  CHECK(back == bpe);
  CHECK(back.encode("lowest").tokens == bpe.encode("lowest").tokens);
  std::filesystem::remove(path);
}

TEST_CASE("label vocab and tag names") {
  LabelVocab labels;
  CHECK(labels.add_intent("x") == 0);
  CHECK(labels.add_intent("y") == 1);
  CHECK(labels.add_intent("x") == 0);
  CHECK(labels.parse_tag("B-city", true) == 1);
  CHECK(labels.parse_tag("I-city", false) == 2);
  CHECK(labels.parse_tag("O", false) == 0);
  CHECK_THROWS_AS(labels.parse_tag("B-date", false), StructuralError);
  CHECK_THROWS(labels.parse_tag("X-city", true));
  CHECK(labels.tag_name(2) == "I-city");
  SemanticFrame f;
  f.intent = 1;
  f.set(0, {"new", "york"});
  CHECK(labels.format(f) == "{intent[y], city[new york]}");
}

TEST_CASE("utf8 and whitespace helpers") {
  CHECK(utf8_chars("a\xc3\xa9z") == std::vector<std::string>{"a", "\xc3\xa9", "z"});
  CHECK(normalize_whitespace("  a   b \t") == "a b");
}
