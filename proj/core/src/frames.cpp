#include "dualinf/frames.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dualinf/errors.hpp"

namespace dualinf {

const Slot* SemanticFrame::find(LabelId key) const {
  for (const Slot& s : slots) {
    if (s.key == key) return &s;
  }
  return nullptr;
}

void SemanticFrame::set(LabelId key, std::vector<std::string> value) {
  for (Slot& s : slots) {
    if (s.key == key) {
      s.value = std::move(value);
      return;
    }
  }
  slots.push_back(Slot{key, std::move(value)});
}

void SemanticFrame::validate() const {
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].value.empty()) {
      throw StructuralError("slot " + std::to_string(slots[i].key) + " has an empty value");
    }
    for (std::size_t j = i + 1; j < slots.size(); ++j) {
      if (slots[i].key == slots[j].key) {
        throw StructuralError("slot key " + std::to_string(slots[i].key) + " repeats in frame");
      }
    }
  }
}

bool operator==(const SemanticFrame& a, const SemanticFrame& b) {
  if (a.intent != b.intent || a.slots.size() != b.slots.size()) return false;
  for (const Slot& s : a.slots) {
    const Slot* other = b.find(s.key);
    if (other == nullptr || other->value != s.value) return false;
  }
  return true;
}

IobSequence repair_iob(const IobSequence& seq, const TagScheme& scheme) {
  IobSequence out = seq;
  TagId prev = TagScheme::kOutside;
  for (TagId& tag : out.tags) {
    if (!scheme.valid(tag)) {
      throw StructuralError("unknown tag id " + std::to_string(tag));
    }
    if (TagScheme::is_inside(tag)) {
      const LabelId key = TagScheme::key_of(tag);
      const bool continues = !TagScheme::is_outside(prev) && TagScheme::key_of(prev) == key;
      if (!continues) tag = scheme.begin(key);
    }
    prev = tag;
  }
  return out;
}

bool is_well_formed(const IobSequence& seq, const TagScheme& scheme) {
  return repair_iob(seq, scheme) == seq;
}

std::vector<Span> extract_spans(const IobSequence& seq, const TagScheme& scheme) {
  const IobSequence repaired = repair_iob(seq, scheme);
  std::vector<Span> spans;
  for (std::size_t i = 0; i < repaired.tags.size();) {
    const TagId tag = repaired.tags[i];
    if (!TagScheme::is_begin(tag)) {
      ++i;
      continue;
    }
    const LabelId key = TagScheme::key_of(tag);
    std::size_t j = i + 1;
    while (j < repaired.tags.size() && repaired.tags[j] == scheme.inside(key)) ++j;
    spans.push_back(Span{i, j, key});
    i = j;
  }
  return spans;
}

SemanticFrame iob_to_frame(const IobSequence& tags, std::optional<LabelId> intent,
                           const Utterance& utt, const TagScheme& scheme) {
  if (tags.size() != utt.pieces.size()) {
    throw StructuralError("tag sequence has " + std::to_string(tags.size()) +
                          " tags but utterance has " + std::to_string(utt.pieces.size()) +
                          " tokens");
  }
  SemanticFrame frame;
  frame.intent = intent;
  for (const Span& span : extract_spans(tags, scheme)) {
    std::vector<std::string> value(utt.pieces.begin() + static_cast<std::ptrdiff_t>(span.start),
                                   utt.pieces.begin() + static_cast<std::ptrdiff_t>(span.end));
    frame.set(span.key, std::move(value));
  }
  return frame;
}

std::string_view to_string(MatchRule rule) {
  switch (rule) {
    case MatchRule::kExact: return "exact";
    case MatchRule::kLowercase: return "lowercase";
    case MatchRule::kStem: return "stem";
    case MatchRule::kUnmatched: return "unmatched";
  }
  return "unmatched";
}

std::vector<LabelId> MatchReport::unmatched() const {
  std::vector<LabelId> keys;
  for (const SlotMatch& m : matches) {
    if (m.rule == MatchRule::kUnmatched) keys.push_back(m.key);
  }
  return keys;
}

std::size_t MatchReport::unmatched_count() const {
  return static_cast<std::size_t>(std::count_if(
      matches.begin(), matches.end(),
      [](const SlotMatch& m) { return m.rule == MatchRule::kUnmatched; }));
}

std::string normalize_word(std::string_view word) {
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  std::size_t begin = 0;
  std::size_t end = word.size();
  while (begin < end && is_punct(word[begin])) ++begin;
  while (end > begin && is_punct(word[end - 1])) --end;
  std::string out(word.substr(begin, end - begin));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool stem_match(std::string_view a, std::string_view b) {
  const std::string na = normalize_word(a);
  const std::string nb = normalize_word(b);
  const std::size_t shorter = std::min(na.size(), nb.size());
  if (shorter < 4) return false;
  std::size_t common = 0;
  while (common < shorter && na[common] == nb[common]) ++common;
  return common >= 4 && common + 1 >= shorter;
}

namespace {

bool words_match(MatchRule rule, const std::string& value, const std::string& token) {
  switch (rule) {
    case MatchRule::kExact: return value == token;
    case MatchRule::kLowercase: return normalize_word(value) == normalize_word(token);
    case MatchRule::kStem: return stem_match(value, token);
    case MatchRule::kUnmatched: return false;
  }
  return false;
}

std::optional<std::size_t> find_free_span(const std::vector<std::string>& value,
                                          const std::vector<std::string>& pieces,
                                          const std::vector<bool>& claimed, MatchRule rule) {
  if (value.empty() || value.size() > pieces.size()) return std::nullopt;
  for (std::size_t start = 0; start + value.size() <= pieces.size(); ++start) {
    bool ok = true;
    for (std::size_t k = 0; k < value.size() && ok; ++k) {
      ok = !claimed[start + k] && words_match(rule, value[k], pieces[start + k]);
    }
    if (ok) return start;
  }
  return std::nullopt;
}

}  // namespace

FrameAlignment frame_to_iob(const SemanticFrame& frame, const Utterance& utt,
                            const TagScheme& scheme) {
  FrameAlignment out;
  out.tags.tags.assign(utt.pieces.size(), TagScheme::kOutside);
  out.report.matches.resize(frame.slots.size());

  std::vector<std::size_t> order(frame.slots.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frame.slots[a].value.size() > frame.slots[b].value.size();
  });

  std::vector<bool> claimed(utt.pieces.size(), false);
  for (std::size_t idx : order) {
    const Slot& slot = frame.slots[idx];
    SlotMatch& match = out.report.matches[idx];
    match.key = slot.key;
    if (static_cast<std::size_t>(slot.key) >= scheme.key_count() || slot.key < 0) {
      continue;  // key outside the tag inventory cannot be tagged
    }
    for (MatchRule rule : {MatchRule::kExact, MatchRule::kLowercase, MatchRule::kStem}) {
      const auto start = find_free_span(slot.value, utt.pieces, claimed, rule);
      if (!start) continue;
      match.rule = rule;
      match.start = *start;
      match.length = slot.value.size();
      for (std::size_t k = 0; k < slot.value.size(); ++k) {
        claimed[*start + k] = true;
        out.tags.tags[*start + k] = k == 0 ? scheme.begin(slot.key) : scheme.inside(slot.key);
      }
      break;
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace dualinf
