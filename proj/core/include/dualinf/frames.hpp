#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dualinf {

using LabelId = std::int32_t;
using TokenId = std::int32_t;
using TagId = std::int32_t;

// A tokenized utterance. `pieces` holds the surface form of each token.
struct Utterance {
  std::string surface;
  std::vector<TokenId> tokens;
  std::vector<std::string> pieces;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Utterance&) const = default;
};

struct Slot {
  LabelId key = 0;
  std::vector<std::string> value;  // whitespace words, never empty

  bool operator==(const Slot&) const = default;
};

// Intent (absent for intent-less datasets) plus slot-key/value pairs with
// unique keys. Equality ignores slot order.
struct SemanticFrame {
  std::optional<LabelId> intent;
  std::vector<Slot> slots;

  // Number of encodable features: one per slot plus one for the intent.
  std::size_t feature_count() const {
    return slots.size() + (intent ? 1 : 0);
  }
  const Slot* find(LabelId key) const;
  // Replaces the value of an existing key in place, otherwise appends.
  void set(LabelId key, std::vector<std::string> value);
  // Throws StructuralError if keys repeat or a value is empty.
  void validate() const;

  friend bool operator==(const SemanticFrame& a, const SemanticFrame& b);
};

// IOB tag inventory derived from the slot-key count: O is 0, B-k is 1 + 2k,
// I-k is 2 + 2k.
class TagScheme {
 public:
  static constexpr TagId kOutside = 0;

  TagScheme() = default;
  explicit TagScheme(std::size_t key_count) : key_count_(key_count) {}

  std::size_t key_count() const { return key_count_; }
  std::size_t tag_count() const { return 1 + 2 * key_count_; }

  TagId begin(LabelId key) const { return static_cast<TagId>(1 + 2 * key); }
  TagId inside(LabelId key) const { return static_cast<TagId>(2 + 2 * key); }
  bool valid(TagId tag) const {
    return tag >= 0 && static_cast<std::size_t>(tag) < tag_count();
  }
  static bool is_outside(TagId tag) { return tag == kOutside; }
  static bool is_begin(TagId tag) { return tag > 0 && tag % 2 == 1; }
  static bool is_inside(TagId tag) { return tag > 0 && tag % 2 == 0; }
  static LabelId key_of(TagId tag) { return static_cast<LabelId>((tag - 1) / 2); }

 private:
  std::size_t key_count_ = 0;
};

struct IobSequence {
  std::vector<TagId> tags;

  std::size_t size() const { return tags.size(); }
  bool operator==(const IobSequence&) const = default;
};

// A labelled span [start, end) of key `key`.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  LabelId key = 0;

  auto operator<=>(const Span&) const = default;
};

// Rewrites a leading or key-switching I-k into B-k.
IobSequence repair_iob(const IobSequence& seq, const TagScheme& scheme);

// True when no I-k follows anything but B-k / I-k of the same key.
bool is_well_formed(const IobSequence& seq, const TagScheme& scheme);

// Maximal B-k I-k* runs of an (already repaired) sequence.
std::vector<Span> extract_spans(const IobSequence& seq, const TagScheme& scheme);

SemanticFrame iob_to_frame(const IobSequence& tags, std::optional<LabelId> intent,
                           const Utterance& utt, const TagScheme& scheme);

enum class MatchRule { kExact, kLowercase, kStem, kUnmatched };

std::string_view to_string(MatchRule rule);

struct SlotMatch {
  LabelId key = 0;
  MatchRule rule = MatchRule::kUnmatched;
  std::size_t start = 0;  // meaningful unless rule == kUnmatched
  std::size_t length = 0;
};

struct MatchReport {
  std::vector<SlotMatch> matches;  // one per frame slot, in frame order

  std::vector<LabelId> unmatched() const;
  std::size_t unmatched_count() const;
};

struct FrameAlignment {
  IobSequence tags;
  MatchReport report;
};

// Tags each slot value where it occurs in `utt.pieces`: longest value first,
// leftmost free span, never reusing claimed tokens. Each slot tries exact,
// then lowercase, then shared-prefix stem matching.
FrameAlignment frame_to_iob(const SemanticFrame& frame, const Utterance& utt,
                            const TagScheme& scheme);

// Lowercased with leading/trailing punctuation removed.
std::string normalize_word(std::string_view word);

// Stem equality used by the last matching fallback.
bool stem_match(std::string_view a, std::string_view b);

// Splits on ASCII whitespace.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

}  // namespace dualinf
