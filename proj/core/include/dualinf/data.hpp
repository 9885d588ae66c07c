#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualinf/frames.hpp"
#include "dualinf/textproc.hpp"

namespace dualinf {

// Utterance text with word-level gold tags and optional intent.
struct NluExample {
  std::string text;
  IobSequence tags;
  std::optional<LabelId> intent;

  bool operator==(const NluExample&) const = default;
};

// Semantic frame with one or more reference texts.
struct NlgExample {
  SemanticFrame frame;
  std::vector<std::string> refs;

  bool operator==(const NlgExample&) const = default;
};

// Word-level utterance whose pieces are the whitespace words of `text`
// (token ids are all UNK; use WordVocab::encode for model input).
Utterance word_utterance(std::string_view text);

// JSON-lines I/O. Loading registers unseen intents and slot keys in
// `labels` when `grow` is set and rejects them otherwise. Every malformed
// line raises DataError naming the file and line; an empty file is an error.
std::vector<NluExample> load_nlu(const std::filesystem::path& path, LabelVocab& labels,
                                 bool grow = true);
std::vector<NlgExample> load_nlg(const std::filesystem::path& path, LabelVocab& labels,
                                 bool grow = true);
std::vector<NluExample> parse_nlu(std::string_view text, LabelVocab& labels, bool grow,
                                  const std::string& source = "<memory>");
std::vector<NlgExample> parse_nlg(std::string_view text, LabelVocab& labels, bool grow,
                                  const std::string& source = "<memory>");
std::string format_nlu(std::span<const NluExample> examples, const LabelVocab& labels);
std::string format_nlg(std::span<const NlgExample> examples, const LabelVocab& labels);
void save_nlu(const std::filesystem::path& path, std::span<const NluExample> examples,
              const LabelVocab& labels);
void save_nlg(const std::filesystem::path& path, std::span<const NlgExample> examples,
              const LabelVocab& labels);

// Dataset manifest: split name -> file for each example shape, plus declared
// example counts per split. Relative paths resolve against the manifest's
// directory.
struct DatasetManifest {
  std::string name;
  std::map<std::string, std::filesystem::path> nlu;
  std::map<std::string, std::filesystem::path> nlg;
  std::map<std::string, std::size_t> counts;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
// Files under the manifest's directory are written relative to it; other
// paths are kept as given.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct KnownCounts {
  std::size_t train = 0;
  std::size_t test = 0;
};

// Published train/test sizes of the reference corpora ("snips", "atis",
// "e2e"; case-insensitive).
std::optional<KnownCounts> known_counts(std::string_view dataset_name);

// Warnings for a split whose size differs from the manifest's declared
// count or from the published size of a known dataset. Empty when all agree.
std::vector<std::string> check_counts(const DatasetManifest& manifest, std::string_view split,
                                      std::size_t actual);

// NLU -> NLG: the gold tags and intent become a frame and the utterance its
// single reference.
std::vector<NlgExample> augment_nlu_to_nlg(std::span<const NluExample> examples,
                                           const TagScheme& scheme);

struct NlgToNluResult {
  std::vector<NluExample> examples;
  std::vector<MatchReport> reports;  // one per kept example
  std::size_t dropped = 0;
};

// NLG -> NLU: one example per (frame, reference) pair aligned by
// frame_to_iob; pairs with more than half of their slots unmatched are
// dropped and counted.
NlgToNluResult augment_nlg_to_nlu(std::span<const NlgExample> examples, const TagScheme& scheme);

// Concatenation with exact duplicates removed (first occurrence kept).
std::vector<NluExample> merge_unique(std::span<const NluExample> a, std::span<const NluExample> b);
std::vector<NlgExample> merge_unique(std::span<const NlgExample> a, std::span<const NlgExample> b);

// Reads a whole file; throws DataError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
// Writes bytes exactly; throws DataError on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dualinf
