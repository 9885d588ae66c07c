#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dualinf/frames.hpp"

namespace dualinf {

// Reserved ids shared by every token vocabulary.
struct Specials {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kCount = 4;

  static std::string_view name(TokenId id);
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kCount); }
};

// Dense string <-> id map whose first ids are the specials.
class Vocab {
 public:
  Vocab();

  TokenId add(const std::string& symbol);
  std::optional<TokenId> find(std::string_view symbol) const;
  TokenId id_or_unk(std::string_view symbol) const;
  const std::string& symbol(TokenId id) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Whole-word vocabulary. Feeds the NLU tagger, the frame encoders, and the
// word-level matching in frame_to_iob.
class WordVocab {
 public:
  WordVocab() = default;

  // Words ordered by descending frequency, then lexicographically.
  static WordVocab build(std::span<const std::string> texts, std::size_t min_count = 1);
  static WordVocab from_symbols(std::span<const std::string> symbols);

  Utterance encode(std::string_view text) const;
  Utterance encode_words(std::span<const std::string> words) const;
  TokenId id(std::string_view word) const { return vocab_.id_or_unk(word); }
  const Vocab& vocab() const { return vocab_; }
  std::size_t size() const { return vocab_.size(); }

  bool operator==(const WordVocab&) const = default;

 private:
  Vocab vocab_;
};

// Byte-pair-encoding subword model. Merges operate on the characters of one
// whitespace word; the final piece of a word carries the "</w>" suffix.
class BpeModel {
 public:
  static constexpr std::string_view kEndOfWord = "</w>";
  static constexpr int kFormatVersion = 1;

  BpeModel() = default;

  // Greedy most-frequent-pair merging; ties go to the lexicographically
  // smallest pair. Throws DataError on an empty corpus.
  static BpeModel train(std::span<const std::string> corpus, std::size_t merge_count);

  // Rebuilds the model from a character inventory and merge list.
  static BpeModel from_merges(std::vector<std::string> alphabet,
                              std::vector<std::pair<std::string, std::string>> merges);

  Utterance encode(std::string_view text) const;
  // Strips specials; throws DataError on ids outside the vocabulary.
  std::string decode(std::span<const TokenId> tokens) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }
  const Vocab& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  bool operator==(const BpeModel& other) const {
    return alphabet_ == other.alphabet_ && merges_ == other.merges_;
  }

 private:
  void build_vocab();
  std::vector<std::string> segment(const std::string& word) const;

  std::vector<std::string> alphabet_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  Vocab vocab_;
};

// Intent and slot-key inventories; the IOB tag inventory derives from keys.
class LabelVocab {
 public:
  LabelVocab() = default;

  LabelId add_intent(const std::string& name);
  LabelId add_key(const std::string& name);
  std::optional<LabelId> intent(std::string_view name) const;
  std::optional<LabelId> key(std::string_view name) const;
  const std::string& intent_name(LabelId id) const;
  const std::string& key_name(LabelId id) const;

  std::size_t intent_count() const { return intents_.size(); }
  std::size_t key_count() const { return keys_.size(); }
  const std::vector<std::string>& intents() const { return intents_; }
  const std::vector<std::string>& keys() const { return keys_; }
  TagScheme scheme() const { return TagScheme(keys_.size()); }

  // "O", "B-key", "I-key".
  std::string tag_name(TagId tag) const;
  // Parses a tag name, registering a new key when `grow` is set.
  TagId parse_tag(std::string_view name, bool grow);

  // `{intent[v], key[value], ...}`
  std::string format(const SemanticFrame& frame) const;

  bool operator==(const LabelVocab& other) const {
    return intents_ == other.intents_ && keys_ == other.keys_;
  }

 private:
  std::vector<std::string> intents_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, LabelId> intent_ids_;
  std::unordered_map<std::string, LabelId> key_ids_;
};

// Collapses whitespace runs and trims.
std::string normalize_whitespace(std::string_view text);

// Splits into UTF-8 code points.
std::vector<std::string> utf8_chars(std::string_view word);

}  // namespace dualinf
