#include "dualinf/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dualinf/errors.hpp"

namespace dualinf {

using nlohmann::json;
using nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

Utterance word_utterance(std::string_view text) {
  Utterance utt;
  utt.pieces = split_words(text);
  utt.surface = join_words(utt.pieces);
  utt.tokens.assign(utt.pieces.size(), Specials::kUnk);
  return utt;
}

namespace {

// Calls `fn(json, line_no)` for every non-blank line, wrapping any failure
// into a DataError that names the source and line.
template <typename Fn>
void for_each_line(std::string_view text, const std::string& source, Fn fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const std::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::optional<LabelId> parse_intent(const json& j, LabelVocab& labels, bool grow) {
  if (!j.contains("intent") || j["intent"].is_null()) return std::nullopt;
  const std::string name = j["intent"].get<std::string>();
  if (auto id = labels.intent(name)) return id;
  if (!grow) throw DataError("unknown intent '" + name + "'");
  return labels.add_intent(name);
}

LabelId parse_key(const std::string& name, LabelVocab& labels, bool grow) {
  if (auto id = labels.key(name)) return *id;
  if (!grow) throw DataError("unknown slot key '" + name + "'");
  return labels.add_key(name);
}

}  // namespace

std::vector<NluExample> parse_nlu(std::string_view text, LabelVocab& labels, bool grow,
                                  const std::string& source) {
  std::vector<NluExample> out;
  for_each_line(text, source, [&](const json& j, std::size_t) {
    if (!j.is_object()) throw DataError("expected a JSON object");
    NluExample ex;
    ex.text = normalize_whitespace(j.at("text").get<std::string>());
    const std::size_t words = split_words(ex.text).size();
    const auto& tags = j.at("tags");
    if (!tags.is_array()) throw DataError("'tags' must be an array");
    for (const auto& t : tags) ex.tags.tags.push_back(labels.parse_tag(t.get<std::string>(), grow));
    if (ex.tags.size() != words) {
      throw DataError(std::to_string(ex.tags.size()) + " tags for " + std::to_string(words) +
                      " words");
    }
    ex.intent = parse_intent(j, labels, grow);
    out.push_back(std::move(ex));
  });
  if (out.empty()) throw DataError(source + ": no examples");
  return out;
}

std::vector<NlgExample> parse_nlg(std::string_view text, LabelVocab& labels, bool grow,
                                  const std::string& source) {
  std::vector<NlgExample> out;
  for_each_line(text, source, [&](const json& j, std::size_t) {
    if (!j.is_object()) throw DataError("expected a JSON object");
    NlgExample ex;
    const json& frame = j.at("frame");
    ex.frame.intent = parse_intent(frame, labels, grow);
    for (const auto& pair : frame.at("slots")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw DataError("each slot must be a [key, value] pair");
      }
      const LabelId key = parse_key(pair[0].get<std::string>(), labels, grow);
      ex.frame.slots.push_back(Slot{key, split_words(pair[1].get<std::string>())});
    }
    ex.frame.validate();
    for (const auto& r : j.at("refs")) ex.refs.push_back(normalize_whitespace(r.get<std::string>()));
    if (ex.refs.empty()) throw DataError("an NLG example needs at least one reference");
    out.push_back(std::move(ex));
  });
  if (out.empty()) throw DataError(source + ": no examples");
  return out;
}

std::vector<NluExample> load_nlu(const std::filesystem::path& path, LabelVocab& labels,
                                 bool grow) {
  return parse_nlu(read_file(path), labels, grow, path.string());
}

std::vector<NlgExample> load_nlg(const std::filesystem::path& path, LabelVocab& labels,
                                 bool grow) {
  return parse_nlg(read_file(path), labels, grow, path.string());
}

std::string format_nlu(std::span<const NluExample> examples, const LabelVocab& labels) {
  std::string out;
  for (const NluExample& ex : examples) {
    ordered_json j;
    j["text"] = ex.text;
    json tags = json::array();
    for (TagId t : ex.tags.tags) tags.push_back(labels.tag_name(t));
    j["tags"] = std::move(tags);
    if (ex.intent) j["intent"] = labels.intent_name(*ex.intent);
    out += j.dump() + "\n";
  }
  return out;
}

std::string format_nlg(std::span<const NlgExample> examples, const LabelVocab& labels) {
  std::string out;
  for (const NlgExample& ex : examples) {
    ordered_json frame;
    if (ex.frame.intent) frame["intent"] = labels.intent_name(*ex.frame.intent);
    json slots = json::array();
    for (const Slot& s : ex.frame.slots) {
      slots.push_back(json::array({labels.key_name(s.key), join_words(s.value)}));
    }
    frame["slots"] = std::move(slots);
    ordered_json j;
    j["frame"] = std::move(frame);
    j["refs"] = ex.refs;
    out += j.dump() + "\n";
  }
  return out;
}

void save_nlu(const std::filesystem::path& path, std::span<const NluExample> examples,
              const LabelVocab& labels) {
  write_file(path, format_nlu(examples, labels));
}

void save_nlg(const std::filesystem::path& path, std::span<const NlgExample> examples,
              const LabelVocab& labels) {
  write_file(path, format_nlg(examples, labels));
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::filesystem::path root = path.parent_path();
  DatasetManifest m;
  try {
    const json j = json::parse(read_file(path));
    m.name = j.value("name", std::string());
    const auto read_splits = [&](const char* field, auto& target) {
      if (!j.contains(field)) return;
      for (const auto& [split, file] : j.at(field).items()) {
        const std::filesystem::path p(file.template get<std::string>());
        target[split] = p.is_absolute() ? p : root / p;
      }
    };
    read_splits("nlu", m.nlu);
    read_splits("nlg", m.nlg);
    if (j.contains("counts")) {
      for (const auto& [split, n] : j.at("counts").items()) m.counts[split] = n.get<std::size_t>();
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("manifest '" + path.string() + "': " + e.what());
  }
  if (m.nlu.empty() && m.nlg.empty()) {
    throw DataError("manifest '" + path.string() + "' names no splits");
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  const std::filesystem::path root = path.parent_path();
  const auto rel = [&](const std::filesystem::path& p) {
    if (root.empty()) return p.generic_string();
    const std::filesystem::path r = p.lexically_relative(root);
    const bool inside = !r.empty() && *r.begin() != "..";
    return (inside ? r : p).generic_string();
  };
  json j;
  j["name"] = manifest.name;
  json nlu = json::object();
  for (const auto& [split, p] : manifest.nlu) nlu[split] = rel(p);
  json nlg = json::object();
  for (const auto& [split, p] : manifest.nlg) nlg[split] = rel(p);
  j["nlu"] = std::move(nlu);
  j["nlg"] = std::move(nlg);
  j["counts"] = manifest.counts;
  write_file(path, j.dump(2) + "\n");
}

std::optional<KnownCounts> known_counts(std::string_view dataset_name) {
  std::string name(dataset_name);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "snips") return KnownCounts{13084, 700};
  if (name == "atis") return KnownCounts{4478, 893};
  if (name == "e2e") return KnownCounts{42063, 4693};
  return std::nullopt;
}

std::vector<std::string> check_counts(const DatasetManifest& manifest, std::string_view split,
                                      std::size_t actual) {
  std::vector<std::string> warnings;
  const std::string s(split);
  if (const auto it = manifest.counts.find(s); it != manifest.counts.end() && it->second != actual) {
    warnings.push_back("split '" + s + "' has " + std::to_string(actual) +
                       " examples but the manifest declares " + std::to_string(it->second));
  }
  if (const auto known = known_counts(manifest.name)) {
    std::optional<std::size_t> expected;
    if (split == "train") expected = known->train;
    if (split == "test") expected = known->test;
    if (expected && *expected != actual) {
      warnings.push_back("split '" + s + "' of " + manifest.name + " has " +
                         std::to_string(actual) + " examples; the published size is " +
                         std::to_string(*expected));
    }
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// Augmentation

std::vector<NlgExample> augment_nlu_to_nlg(std::span<const NluExample> examples,
                                           const TagScheme& scheme) {
  std::vector<NlgExample> out;
  out.reserve(examples.size());
  for (const NluExample& ex : examples) {
    const Utterance utt = word_utterance(ex.text);
    out.push_back(NlgExample{iob_to_frame(ex.tags, ex.intent, utt, scheme), {utt.surface}});
  }
  return out;
}

NlgToNluResult augment_nlg_to_nlu(std::span<const NlgExample> examples, const TagScheme& scheme) {
  NlgToNluResult result;
  for (const NlgExample& ex : examples) {
    for (const std::string& ref : ex.refs) {
      const Utterance utt = word_utterance(ref);
      FrameAlignment aligned = frame_to_iob(ex.frame, utt, scheme);
      if (2 * aligned.report.unmatched_count() > ex.frame.slots.size()) {
        ++result.dropped;
        continue;
      }
      result.examples.push_back(NluExample{utt.surface, std::move(aligned.tags), ex.frame.intent});
      result.reports.push_back(std::move(aligned.report));
    }
  }
  return result;
}

namespace {

// Canonical keys: equal examples (frames compared order-insensitively) map
// to equal strings.
std::string dedup_key(const NluExample& ex) {
  std::string key = ex.text + '\x1f' + std::to_string(ex.intent.value_or(-1));
  for (TagId t : ex.tags.tags) key += '\x1f' + std::to_string(t);
  return key;
}

std::string dedup_key(const NlgExample& ex) {
  std::vector<Slot> slots = ex.frame.slots;
  std::sort(slots.begin(), slots.end(),
            [](const Slot& a, const Slot& b) { return a.key < b.key; });
  std::string key = std::to_string(ex.frame.intent.value_or(-1));
  for (const Slot& s : slots) key += '\x1e' + std::to_string(s.key) + '\x1f' + join_words(s.value);
  for (const std::string& r : ex.refs) key += '\x1d' + r;
  return key;
}

template <typename T>
std::vector<T> merge_unique_impl(std::span<const T> a, std::span<const T> b) {
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  std::set<std::string> seen;
  const auto add = [&](const T& item) {
    if (seen.insert(dedup_key(item)).second) out.push_back(item);
  };
  for (const T& item : a) add(item);
  for (const T& item : b) add(item);
  return out;
}

}  // namespace

std::vector<NluExample> merge_unique(std::span<const NluExample> a,
                                     std::span<const NluExample> b) {
  return merge_unique_impl(a, b);
}

std::vector<NlgExample> merge_unique(std::span<const NlgExample> a,
                                     std::span<const NlgExample> b) {
  return merge_unique_impl(a, b);
}

}  // namespace dualinf
