#include "dualinf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string_view>

#include "dualinf/errors.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf {

namespace {

struct KeyValues {
  std::string_view key;
  std::array<std::string_view, 5> values;
};

constexpr std::array<std::string_view, 4> kIntents = {"flight", "hotel", "weather", "restaurant"};

constexpr std::array<KeyValues, 6> kKeys = {{
    {"origin", {"boston", "denver", "chicago", "san diego", "new york"}},
    {"destination", {"seattle", "miami", "atlanta", "los angeles", "dallas"}},
    {"date", {"monday", "friday", "tomorrow", "next week", "tonight"}},
    {"cuisine", {"thai", "italian", "mexican", "korean", "indian"}},
    {"area", {"downtown", "riverside", "city centre", "uptown", "harbor"}},
    {"price", {"cheap", "moderate", "expensive", "luxury", "budget"}},
}};

struct Template {
  std::string_view intent;
  std::string_view pattern;  // words; {key} marks a slot
};

constexpr std::array<Template, 10> kTemplates = {{
    {"flight", "show me flights from {origin} to {destination}"},
    {"flight", "i need a flight from {origin} to {destination} on {date}"},
    {"flight", "book a {price} flight to {destination}"},
    {"hotel", "find a {price} hotel in the {area}"},
    {"hotel", "i want a hotel near {area} for {date}"},
    {"weather", "what is the weather like in {destination} {date}"},
    {"weather", "will it rain {date}"},
    {"restaurant", "find a {cuisine} restaurant in the {area}"},
    {"restaurant", "i want {price} {cuisine} food {date}"},
    {"restaurant", "book a table for {date} at a {cuisine} place near {area}"},
}};

const KeyValues& key_values(std::string_view key) {
  for (const KeyValues& kv : kKeys) {
    if (kv.key == key) return kv;
  }
  throw StructuralError("template names unknown slot key '" + std::string(key) + "'");
}

}  // namespace

void register_synth_labels(LabelVocab& labels) {
  for (std::string_view intent : kIntents) labels.add_intent(std::string(intent));
  for (const KeyValues& kv : kKeys) labels.add_key(std::string(kv.key));
}

SynthCorpus synth_corpus(std::uint64_t seed, std::size_t size, LabelVocab& labels) {
  register_synth_labels(labels);
  const TagScheme scheme = labels.scheme();
  Rng rng(seed);
  SynthCorpus corpus;
  for (std::size_t i = 0; i < size; ++i) {
    const Template& t = kTemplates[i % kTemplates.size()];
    NluExample nlu;
    NlgExample nlg;
    nlu.intent = labels.intent(t.intent);
    nlg.frame.intent = nlu.intent;
    std::vector<std::string> words;
    for (const std::string& part : split_words(t.pattern)) {
      if (part.size() < 3 || part.front() != '{' || part.back() != '}') {
        words.push_back(part);
        nlu.tags.tags.push_back(TagScheme::kOutside);
        continue;
      }
      const std::string_view key_name = std::string_view(part).substr(1, part.size() - 2);
      const KeyValues& kv = key_values(key_name);
      const LabelId key = *labels.key(key_name);
      const std::vector<std::string> value = split_words(kv.values[rng.below(kv.values.size())]);
      for (std::size_t w = 0; w < value.size(); ++w) {
        words.push_back(value[w]);
        nlu.tags.tags.push_back(w == 0 ? scheme.begin(key) : scheme.inside(key));
      }
      nlg.frame.slots.push_back(Slot{key, value});
    }
    nlu.text = join_words(words);
    nlg.refs.push_back(nlu.text);
    corpus.nlu.push_back(std::move(nlu));
    corpus.nlg.push_back(std::move(nlg));
  }
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  SynthCorpus shuffled;
  for (std::size_t i : order) {
    shuffled.nlu.push_back(std::move(corpus.nlu[i]));
    shuffled.nlg.push_back(std::move(corpus.nlg[i]));
  }
  return shuffled;
}

std::vector<NlgExample> corrupt_frames(std::span<const NlgExample> examples, double fraction,
                                       std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("corruption fraction must lie in [0, 1]");
  std::map<LabelId, std::vector<std::vector<std::string>>> pools;
  for (const NlgExample& ex : examples) {
    for (const Slot& s : ex.frame.slots) {
      auto& pool = pools[s.key];
      if (std::find(pool.begin(), pool.end(), s.value) == pool.end()) pool.push_back(s.value);
    }
  }
  for (auto& [key, pool] : pools) std::sort(pool.begin(), pool.end());

  std::vector<NlgExample> out(examples.begin(), examples.end());
  Rng rng(seed);
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(out.size())));
  for (std::size_t k = 0; k < count; ++k) {
    SemanticFrame& frame = out[order[k]].frame;
    if (frame.slots.empty()) continue;
    Slot& slot = frame.slots[rng.below(frame.slots.size())];
    const auto& pool = pools.at(slot.key);
    if (pool.size() < 2) continue;
    std::vector<const std::vector<std::string>*> others;
    for (const auto& v : pool) {
      if (v != slot.value) others.push_back(&v);
    }
    slot.value = *others[rng.below(others.size())];
  }
  return out;
}

}  // namespace dualinf
