#include "dualinf/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dualinf/errors.hpp"

namespace dualinf {

std::string_view Specials::name(TokenId id) {
  switch (id) {
    case kPad: return "<pad>";
    case kBos: return "<bos>";
    case kEos: return "<eos>";
    case kUnk: return "<unk>";
    default: return "";
  }
}

Vocab::Vocab() {
  for (TokenId id = 0; id < static_cast<TokenId>(Specials::kCount); ++id) {
    add(std::string(Specials::name(id)));
  }
}

TokenId Vocab::add(const std::string& symbol) {
  const auto it = ids_.find(symbol);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(symbols_.size());
  symbols_.push_back(symbol);
  ids_.emplace(symbol, id);
  return id;
}

std::optional<TokenId> Vocab::find(std::string_view symbol) const {
  const auto it = ids_.find(std::string(symbol));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id_or_unk(std::string_view symbol) const {
  return find(symbol).value_or(Specials::kUnk);
}

const std::string& Vocab::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::string normalize_whitespace(std::string_view text) {
  return join_words(split_words(text));
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, word.size() - i);
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

// ---------------------------------------------------------------------------
// WordVocab

WordVocab WordVocab::build(std::span<const std::string> texts, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : texts) {
    for (std::string& w : split_words(text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  WordVocab out;
  for (const auto& [word, count] : ordered) {
    if (count >= min_count) out.vocab_.add(word);
  }
  return out;
}

WordVocab WordVocab::from_symbols(std::span<const std::string> symbols) {
  WordVocab out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i < Specials::kCount) {
      if (symbols[i] != Specials::name(static_cast<TokenId>(i))) {
        throw DataError("word vocabulary does not start with the reserved symbols");
      }
      continue;
    }
    out.vocab_.add(symbols[i]);
  }
  if (out.vocab_.size() != std::max(symbols.size(), Specials::kCount)) {
    throw DataError("word vocabulary contains duplicate entries");
  }
  return out;
}

Utterance WordVocab::encode(std::string_view text) const {
  return encode_words(split_words(text));
}

Utterance WordVocab::encode_words(std::span<const std::string> words) const {
  Utterance utt;
  utt.surface = join_words(words);
  utt.pieces.assign(words.begin(), words.end());
  utt.tokens.reserve(words.size());
  for (const std::string& w : words) utt.tokens.push_back(vocab_.id_or_unk(w));
  return utt;
}

// ---------------------------------------------------------------------------
// BpeModel

namespace {

using Pair = std::pair<std::string, std::string>;

void apply_merge(std::vector<std::string>& symbols, const Pair& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(pair.first + pair.second);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

BpeModel BpeModel::train(std::span<const std::string> corpus, std::size_t merge_count) {
  std::map<std::string, std::size_t> word_counts;
  for (const std::string& line : corpus) {
    for (std::string& w : split_words(line)) ++word_counts[std::move(w)];
  }
  if (word_counts.empty()) throw DataError("cannot train BPE on an empty corpus");

  std::set<std::string> alphabet;
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) {
    auto chars = utf8_chars(word);
    alphabet.insert(chars.begin(), chars.end());
    words.emplace_back(std::move(chars), count);
  }

  std::vector<Pair> merges;
  for (std::size_t m = 0; m < merge_count; ++m) {
    std::map<Pair, std::size_t> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    if (pair_counts.empty()) break;
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const Pair chosen = best->first;
    for (auto& entry : words) apply_merge(entry.first, chosen);
    merges.push_back(chosen);
  }
  return from_merges(std::vector<std::string>(alphabet.begin(), alphabet.end()),
                     std::move(merges));
}

BpeModel BpeModel::from_merges(std::vector<std::string> alphabet, std::vector<Pair> merges) {
  BpeModel model;
  model.alphabet_ = std::move(alphabet);
  model.merges_ = std::move(merges);
  for (std::size_t i = 0; i < model.merges_.size(); ++i) {
    model.merge_rank_.emplace(model.merges_[i], i);
  }
  model.build_vocab();
  return model;
}

void BpeModel::build_vocab() {
  vocab_ = Vocab();
  const std::string eow(kEndOfWord);
  for (const std::string& c : alphabet_) {
    vocab_.add(c);
    vocab_.add(c + eow);
  }
  for (const auto& [left, right] : merges_) {
    vocab_.add(left + right);
    vocab_.add(left + right + eow);
  }
}

std::vector<std::string> BpeModel::segment(const std::string& word) const {
  std::vector<std::string> symbols = utf8_chars(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == merges_.size()) break;
    apply_merge(symbols, merges_[best_rank]);
  }
  return symbols;
}

Utterance BpeModel::encode(std::string_view text) const {
  Utterance utt;
  const std::vector<std::string> words = split_words(text);
  utt.surface = join_words(words);
  const std::string eow(kEndOfWord);
  for (const std::string& word : words) {
    std::vector<std::string> symbols = segment(word);
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      std::string piece = symbols[i];
      if (i + 1 == symbols.size()) piece += eow;
      utt.tokens.push_back(vocab_.id_or_unk(piece));
      utt.pieces.push_back(std::move(piece));
    }
  }
  return utt;
}

std::string BpeModel::decode(std::span<const TokenId> tokens) const {
  std::string joined;
  const std::string eow(kEndOfWord);
  for (TokenId id : tokens) {
    const std::string& sym = vocab_.symbol(id);
    if (Specials::is_special(id)) continue;
    if (sym.size() >= eow.size() && sym.compare(sym.size() - eow.size(), eow.size(), eow) == 0) {
      joined.append(sym, 0, sym.size() - eow.size());
      joined += ' ';
    } else {
      joined += sym;
    }
  }
  return normalize_whitespace(joined);
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write BPE model to " + path.string());
  nlohmann::json header;
  header["format"] = "dualinf-bpe";
  header["version"] = kFormatVersion;
  header["specials"] = {{"pad", Specials::kPad},
                        {"bos", Specials::kBos},
                        {"eos", Specials::kEos},
                        {"unk", Specials::kUnk}};
  header["alphabet"] = alphabet_;
  out << header.dump() << '\n';
  for (const auto& [left, right] : merges_) out << left << ' ' << right << '\n';
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open BPE model " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing BPE header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ":1: bad BPE header: " + e.what());
  }
  if (header.value("format", "") != "dualinf-bpe" ||
      header.value("version", -1) != kFormatVersion) {
    throw DataError(path.string() + ": unsupported BPE model format/version");
  }
  std::vector<std::string> alphabet = header.at("alphabet").get<std::vector<std::string>>();
  std::vector<Pair> merges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed merge line");
    }
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return from_merges(std::move(alphabet), std::move(merges));
}

// ---------------------------------------------------------------------------
// LabelVocab

LabelId LabelVocab::add_intent(const std::string& name) {
  const auto it = intent_ids_.find(name);
  if (it != intent_ids_.end()) return it->second;
  const auto id = static_cast<LabelId>(intents_.size());
  intents_.push_back(name);
  intent_ids_.emplace(name, id);
  return id;
}

LabelId LabelVocab::add_key(const std::string& name) {
  const auto it = key_ids_.find(name);
  if (it != key_ids_.end()) return it->second;
  const auto id = static_cast<LabelId>(keys_.size());
  keys_.push_back(name);
  key_ids_.emplace(name, id);
  return id;
}

std::optional<LabelId> LabelVocab::intent(std::string_view name) const {
  const auto it = intent_ids_.find(std::string(name));
  if (it == intent_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<LabelId> LabelVocab::key(std::string_view name) const {
  const auto it = key_ids_.find(std::string(name));
  if (it == key_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelVocab::intent_name(LabelId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= intents_.size()) {
    throw StructuralError("unknown intent id " + std::to_string(id));
  }
  return intents_[static_cast<std::size_t>(id)];
}

const std::string& LabelVocab::key_name(LabelId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= keys_.size()) {
    throw StructuralError("unknown slot key id " + std::to_string(id));
  }
  return keys_[static_cast<std::size_t>(id)];
}

std::string LabelVocab::tag_name(TagId tag) const {
  if (!scheme().valid(tag)) throw StructuralError("unknown tag id " + std::to_string(tag));
  if (TagScheme::is_outside(tag)) return "O";
  return (TagScheme::is_begin(tag) ? "B-" : "I-") + key_name(TagScheme::key_of(tag));
}

TagId LabelVocab::parse_tag(std::string_view name, bool grow) {
  if (name == "O") return TagScheme::kOutside;
  if (name.size() < 3 || name[1] != '-' || (name[0] != 'B' && name[0] != 'I')) {
    throw StructuralError("malformed IOB tag '" + std::string(name) + "'");
  }
  const std::string key_str(name.substr(2));
  std::optional<LabelId> id = key(key_str);
  if (!id) {
    if (!grow) throw StructuralError("unknown slot key in tag '" + std::string(name) + "'");
    id = add_key(key_str);
  }
  const TagScheme s = scheme();
  return name[0] == 'B' ? s.begin(*id) : s.inside(*id);
}

std::string LabelVocab::format(const SemanticFrame& frame) const {
  std::string out = "{";
  bool first = true;
  if (frame.intent) {
    out += "intent[" + intent_name(*frame.intent) + "]";
    first = false;
  }
  for (const Slot& slot : frame.slots) {
    if (!first) out += ", ";
    out += key_name(slot.key) + "[" + join_words(slot.value) + "]";
    first = false;
  }
  out += "}";
  return out;
}

}  // namespace dualinf
