#include "dualinf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dualinf/decode.hpp"
#include "dualinf/errors.hpp"

namespace dualinf {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw StructuralError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                          std::to_string(b) + " references");
  }
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[Words(words.begin() + static_cast<std::ptrdiff_t>(i),
                   words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t overlap(const NgramCounts& a, const NgramCounts& b) {
  std::size_t total = 0;
  for (const auto& [gram, count] : a) {
    const auto it = b.find(gram);
    if (it != b.end()) total += std::min(count, it->second);
  }
  return total;
}

double f_measure(std::size_t matched, std::size_t hyp_total, std::size_t ref_total) {
  if (matched == 0 || hyp_total == 0 || ref_total == 0) return 0.0;
  const double p = static_cast<double>(matched) / static_cast<double>(hyp_total);
  const double r = static_cast<double>(matched) / static_cast<double>(ref_total);
  return 2.0 * p * r / (p + r);
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void require_references(std::span<const Words> refs) {
  if (refs.empty()) throw StructuralError("empty reference set");
}

}  // namespace

double intent_accuracy(std::span<const LabelId> predicted, std::span<const LabelId> gold) {
  require_same_length(predicted.size(), gold.size(), "intent_accuracy");
  if (gold.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

SpanScore slot_f1(std::span<const IobSequence> predicted, std::span<const IobSequence> gold,
                  const TagScheme& scheme) {
  require_same_length(predicted.size(), gold.size(), "slot_f1");
  SpanScore s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    require_same_length(predicted[i].size(), gold[i].size(), "slot_f1 tags");
    const std::vector<Span> p = extract_spans(predicted[i], scheme);
    const std::vector<Span> g = extract_spans(gold[i], scheme);
    const std::set<Span> gold_set(g.begin(), g.end());
    for (const Span& span : p) s.matched += gold_set.count(span);
    s.predicted += p.size();
    s.gold += g.size();
  }
  if (s.predicted > 0) s.precision = static_cast<double>(s.matched) / static_cast<double>(s.predicted);
  if (s.gold > 0) s.recall = static_cast<double>(s.matched) / static_cast<double>(s.gold);
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

double bleu(std::span<const Words> hypotheses, std::span<const std::vector<Words>> references) {
  require_same_length(hypotheses.size(), references.size(), "bleu");
  constexpr std::size_t kOrder = 4;
  std::array<std::size_t, kOrder> matched{};
  std::array<std::size_t, kOrder> total{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Words& hyp = hypotheses[i];
    const std::vector<Words>& refs = references[i];
    require_references(refs);
    hyp_len += hyp.size();
    std::size_t closest = refs.front().size();
    for (const Words& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
      };
      if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
        closest = r.size();
      }
    }
    ref_len += closest;
    for (std::size_t n = 1; n <= kOrder; ++n) {
      const NgramCounts hyp_counts = count_ngrams(hyp, n);
      NgramCounts max_ref;
      for (const Words& r : refs) {
        for (const auto& [gram, count] : count_ngrams(r, n)) {
          std::size_t& slot = max_ref[gram];
          slot = std::max(slot, count);
        }
      }
      matched[n - 1] += overlap(hyp_counts, max_ref);
      total[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < kOrder; ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  log_precision /= static_cast<double>(kOrder);
  const double brevity =
      hyp_len > ref_len
          ? 0.0
          : 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len);
  return std::exp(brevity + log_precision);
}

double rouge_n(const Words& hypothesis, std::span<const Words> references, std::size_t n) {
  require_references(references);
  if (n == 0) throw StructuralError("ROUGE-N needs n >= 1");
  const NgramCounts hyp = count_ngrams(hypothesis, n);
  const std::size_t hyp_total = hypothesis.size() >= n ? hypothesis.size() - n + 1 : 0;
  double best = 0.0;
  for (const Words& r : references) {
    const std::size_t ref_total = r.size() >= n ? r.size() - n + 1 : 0;
    best = std::max(best, f_measure(overlap(hyp, count_ngrams(r, n)), hyp_total, ref_total));
  }
  return best;
}

double rouge_l(const Words& hypothesis, std::span<const Words> references) {
  require_references(references);
  double best = 0.0;
  for (const Words& r : references) {
    best = std::max(best, f_measure(lcs_length(hypothesis, r), hypothesis.size(), r.size()));
  }
  return best;
}

RougeScores corpus_rouge(std::span<const Words> hypotheses,
                         std::span<const std::vector<Words>> references) {
  require_same_length(hypotheses.size(), references.size(), "rouge");
  RougeScores s;
  if (hypotheses.empty()) return s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    s.rouge1 += rouge_n(hypotheses[i], references[i], 1);
    s.rouge2 += rouge_n(hypotheses[i], references[i], 2);
    s.rougeL += rouge_l(hypotheses[i], references[i]);
  }
  const auto n = static_cast<double>(hypotheses.size());
  s.rouge1 /= n;
  s.rouge2 /= n;
  s.rougeL /= n;
  return s;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["nlu_examples"] = nlu_examples;
  if (intent_accuracy) j["intent_accuracy"] = *intent_accuracy;
  if (slots) {
    j["slot_precision"] = slots->precision;
    j["slot_recall"] = slots->recall;
    j["slot_f1"] = slots->f1;
  }
  j["nlg_examples"] = nlg_examples;
  if (bleu) j["bleu"] = *bleu;
  if (rouge) {
    j["rouge1"] = rouge->rouge1;
    j["rouge2"] = rouge->rouge2;
    j["rougeL"] = rouge->rougeL;
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::csv_header() {
  return "nlu_examples,intent_accuracy,slot_precision,slot_recall,slot_f1,nlg_examples,bleu,"
         "rouge1,rouge2,rougeL\n";
}

std::string EvalReport::csv_row() const {
  std::ostringstream out;
  const auto cell = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << format_double(*v);
  };
  out << nlu_examples;
  cell(intent_accuracy);
  cell(slots ? std::optional<double>(slots->precision) : std::nullopt);
  cell(slots ? std::optional<double>(slots->recall) : std::nullopt);
  cell(slots ? std::optional<double>(slots->f1) : std::nullopt);
  out << ',' << nlg_examples;
  cell(bleu);
  cell(rouge ? std::optional<double>(rouge->rouge1) : std::nullopt);
  cell(rouge ? std::optional<double>(rouge->rouge2) : std::nullopt);
  cell(rouge ? std::optional<double>(rouge->rougeL) : std::nullopt);
  out << '\n';
  return out.str();
}

}  // namespace dualinf
