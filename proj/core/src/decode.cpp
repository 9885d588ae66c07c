#include "dualinf/decode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dualinf/errors.hpp"

namespace dualinf {

// ---------------------------------------------------------------------------
// Steppers

NlgStepper::NlgStepper(const NlgModel& model, const FrameInput& frame) : model_(model) {
  NoGradGuard no_grad;
  encoded_ = model.encode(frame);
}

Stepper::Result NlgStepper::step(const Tensor& state, std::int32_t prev, std::size_t) const {
  NlgModel::Step s = model_.step(encoded_, state, prev);
  return Result{std::move(s.word_logprobs), std::move(s.state)};
}

Stepper::Result LmStepper::step(const Tensor& state, std::int32_t prev, std::size_t) const {
  LmModel::Step s = model_.step(state, prev);
  return Result{std::move(s.word_logprobs), std::move(s.state)};
}

Stepper::Result NluStepper::step(const Tensor& state, std::int32_t prev,
                                 std::size_t position) const {
  if (position >= words_.tokens.size()) {
    throw StructuralError("tag position " + std::to_string(position) + " beyond utterance of " +
                          std::to_string(words_.tokens.size()) + " words");
  }
  NluModel::Step s = model_.step(state, words_.tokens[position], prev);
  return Result{std::move(s.tag_logprobs), std::move(s.state)};
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Live {
  std::vector<std::int32_t> payload;
  std::vector<double> per_step;
  double score = 0.0;
  Tensor state;
  std::int32_t prev = 0;
};

struct Candidate {
  std::size_t parent = 0;
  std::int32_t symbol = 0;
  double score = 0.0;
  double logprob = 0.0;
};

// Orders candidate extensions by score, then by the extended payload.
struct CandidateOrder {
  const std::vector<Live>* live;
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.score != b.score) return a.score > b.score;
    const auto& pa = (*live)[a.parent].payload;
    const auto& pb = (*live)[b.parent].payload;
    if (pa != pb) return pa < pb;
    return a.symbol < b.symbol;
  }
};

bool output_order(const BeamOutput& a, const BeamOutput& b) {
  const Hypothesis& x = a.hypothesis;
  const Hypothesis& y = b.hypothesis;
  if (x.forward_logprob != y.forward_logprob) return x.forward_logprob > y.forward_logprob;
  if (x.payload.size() != y.payload.size()) return x.payload.size() < y.payload.size();
  return x.payload < y.payload;
}

BeamOutput finish(const Live& from, std::int32_t symbol, double logprob, Tensor state,
                  bool append) {
  BeamOutput out;
  out.hypothesis.payload = from.payload;
  if (append) out.hypothesis.payload.push_back(symbol);
  out.hypothesis.per_step = from.per_step;
  out.hypothesis.per_step.push_back(logprob);
  out.hypothesis.forward_logprob = from.score + logprob;
  out.final_state = std::move(state);
  return out;
}

// The k-th best (1-based) forward score among finished outputs.
double kth_best(const std::vector<BeamOutput>& finished, std::size_t k) {
  std::vector<double> scores;
  scores.reserve(finished.size());
  for (const BeamOutput& f : finished) scores.push_back(f.hypothesis.forward_logprob);
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   scores.end(), std::greater<>());
  return scores[k - 1];
}

std::vector<BeamOutput> fixed_length_search(const Stepper& stepper, const BeamConfig& config) {
  std::vector<Live> live(1);
  live[0].state = stepper.initial_state();
  live[0].prev = stepper.start_symbol();
  const std::size_t vocab = stepper.vocab_size();
  for (std::size_t t = 0; t < config.max_len; ++t) {
    std::vector<Tensor> states;
    std::vector<Candidate> cands;
    cands.reserve(live.size() * vocab);
    for (std::size_t i = 0; i < live.size(); ++i) {
      Stepper::Result r = stepper.step(live[i].state, live[i].prev, t);
      for (std::size_t v = 0; v < vocab; ++v) {
        cands.push_back({i, static_cast<std::int32_t>(v), live[i].score + r.logprobs[v],
                         r.logprobs[v]});
      }
      states.push_back(std::move(r.state));
    }
    const std::size_t keep = std::min(config.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), CandidateOrder{&live});
    std::vector<Live> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      Live l;
      l.payload = live[c.parent].payload;
      l.payload.push_back(c.symbol);
      l.per_step = live[c.parent].per_step;
      l.per_step.push_back(c.logprob);
      l.score = c.score;
      l.state = states[c.parent];
      l.prev = c.symbol;
      next.push_back(std::move(l));
    }
    live = std::move(next);
  }
  std::vector<BeamOutput> out;
  out.reserve(live.size());
  for (Live& l : live) {
    BeamOutput o;
    o.hypothesis.payload = std::move(l.payload);
    o.hypothesis.per_step = std::move(l.per_step);
    o.hypothesis.forward_logprob = l.score;
    o.final_state = std::move(l.state);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<BeamOutput> eos_search(const Stepper& stepper, const BeamConfig& config) {
  const std::int32_t eos = *config.eos;
  const std::size_t vocab = stepper.vocab_size();
  if (eos < 0 || static_cast<std::size_t>(eos) >= vocab) {
    throw ConfigError("EOS symbol " + std::to_string(eos) + " outside vocabulary of " +
                      std::to_string(vocab));
  }
  const auto eos_index = static_cast<std::size_t>(eos);
  std::vector<BeamOutput> finished;
  std::vector<Live> live(1);
  live[0].state = stepper.initial_state();
  live[0].prev = stepper.start_symbol();

  for (std::size_t t = 0; !live.empty(); ++t) {
    const bool eos_only = t + 1 == config.max_len;
    std::vector<Tensor> states;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Stepper::Result r = stepper.step(live[i].state, live[i].prev, t);
      finished.push_back(finish(live[i], eos, r.logprobs[eos_index], r.state, false));
      if (!eos_only) {
        for (std::size_t v = 0; v < vocab; ++v) {
          if (v == eos_index) continue;
          cands.push_back({i, static_cast<std::int32_t>(v), live[i].score + r.logprobs[v],
                           r.logprobs[v]});
        }
      }
      states.push_back(std::move(r.state));
    }
    if (eos_only || cands.empty()) break;

    if (t + 2 == config.max_len) {
      // Extensions are at the length limit: complete each with EOS now. Final
      // scores never exceed the extension score, so once `beam` finished
      // hypotheses beat it, no later candidate can enter the result.
      std::sort(cands.begin(), cands.end(), CandidateOrder{&live});
      for (const Candidate& c : cands) {
        if (finished.size() >= config.beam && kth_best(finished, config.beam) > c.score) break;
        Live ext;
        ext.payload = live[c.parent].payload;
        ext.payload.push_back(c.symbol);
        ext.per_step = live[c.parent].per_step;
        ext.per_step.push_back(c.logprob);
        ext.score = c.score;
        Stepper::Result r = stepper.step(states[c.parent], c.symbol, t + 1);
        finished.push_back(finish(ext, eos, r.logprobs[eos_index], std::move(r.state), false));
      }
      break;
    }

    const std::size_t keep = std::min(config.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), CandidateOrder{&live});
    std::vector<Live> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      Live l;
      l.payload = live[c.parent].payload;
      l.payload.push_back(c.symbol);
      l.per_step = live[c.parent].per_step;
      l.per_step.push_back(c.logprob);
      l.score = c.score;
      l.state = states[c.parent];
      l.prev = c.symbol;
      next.push_back(std::move(l));
    }
    live = std::move(next);
    // Scores only decrease, so stop once no live prefix can reach the top.
    if (finished.size() >= config.beam && live.front().score < kth_best(finished, config.beam)) {
      break;
    }
  }
  return finished;
}

}  // namespace

std::vector<BeamOutput> beam_search_states(const Stepper& stepper, const BeamConfig& config) {
  if (config.beam == 0) throw ConfigError("beam size must be at least 1");
  if (config.eos && config.max_len == 0) {
    throw ConfigError("max_len must be at least 1 when decoding to an end symbol");
  }
  NoGradGuard no_grad;
  std::vector<BeamOutput> out =
      config.eos ? eos_search(stepper, config) : fixed_length_search(stepper, config);
  std::stable_sort(out.begin(), out.end(), output_order);
  if (out.size() > config.beam) out.resize(config.beam);
  return out;
}

std::vector<Hypothesis> beam_search(const Stepper& stepper, const BeamConfig& config) {
  std::vector<Hypothesis> out;
  for (BeamOutput& o : beam_search_states(stepper, config)) {
    out.push_back(std::move(o.hypothesis));
  }
  return out;
}

std::vector<Hypothesis> nlu_hypotheses(const NluModel& model, const Utterance& words,
                                       std::size_t beam, std::size_t k_intent) {
  if (k_intent == 0) throw ConfigError("k_intent must be at least 1");
  NoGradGuard no_grad;
  const NluStepper stepper(model, words);
  const BeamConfig config{beam, words.tokens.size(), std::nullopt};
  std::vector<BeamOutput> tag_beam = beam_search_states(stepper, config);
  std::vector<Hypothesis> out;
  if (model.sizes().intents == 0) {
    for (BeamOutput& o : tag_beam) out.push_back(std::move(o.hypothesis));
    return out;
  }
  for (const BeamOutput& o : tag_beam) {
    const Tensor intents = model.intent_logprobs(o.final_state);
    std::vector<std::size_t> order(intents.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(k_intent, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (intents[a] != intents[b]) return intents[a] > intents[b];
                        return a < b;
                      });
    for (std::size_t j = 0; j < k; ++j) {
      Hypothesis h = o.hypothesis;
      h.intent = static_cast<LabelId>(order[j]);
      h.per_step.push_back(intents[order[j]]);
      h.forward_logprob += intents[order[j]];
      out.push_back(std::move(h));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.forward_logprob != b.forward_logprob) return a.forward_logprob > b.forward_logprob;
    if (a.payload != b.payload) return a.payload < b.payload;
    return a.intent < b.intent;
  });
  if (out.size() > beam) out.resize(beam);
  return out;
}

std::vector<Hypothesis> nlg_hypotheses(const NlgModel& model, const FrameInput& frame,
                                       std::size_t beam, std::size_t max_len) {
  const NlgStepper stepper(model, frame);
  return beam_search(stepper, BeamConfig{beam, max_len, Specials::kEos});
}

// ---------------------------------------------------------------------------
// Dual inference

void DualWeights::validate() const {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(alpha) || !in_unit(beta)) {
    throw ConfigError("dual weights must lie in [0, 1] (alpha=" + format_double(alpha) +
                      ", beta=" + format_double(beta) + ")");
  }
}

double combine(const DualComponents& c, DualWeights w) {
  return w.alpha * c.forward +
         (1.0 - w.alpha) * (c.backward + w.beta * c.marg_out - w.beta * c.marg_in);
}

double ranking_score(const DualComponents& c, DualWeights w) {
  return w.alpha * c.forward + (1.0 - w.alpha) * (c.backward + w.beta * c.marg_out);
}

DualScore make_dual_score(const DualComponents& c, DualWeights w) {
  return DualScore{c, combine(c, w), ranking_score(c, w)};
}

Utterance nlg_surface(const Hypothesis& candidate, const Lexicon& lexicon) {
  return lexicon.words.encode(lexicon.bpe.decode(candidate.payload));
}

SemanticFrame nlu_frame(const Hypothesis& candidate, const Utterance& words,
                        const Lexicon& lexicon) {
  return iob_to_frame(IobSequence{candidate.payload}, candidate.intent, words,
                      lexicon.labels.scheme());
}

double nlg_backward(const Hypothesis& candidate, const SemanticFrame& input_frame,
                    const DualModels& models) {
  const Utterance words = nlg_surface(candidate, models.lexicon);
  const FrameAlignment aligned =
      frame_to_iob(input_frame, words, models.lexicon.labels.scheme());
  return models.nlu.score(words, aligned.tags, input_frame.intent).total;
}

namespace {

DualComponents nlg_components(const Hypothesis& candidate, const SemanticFrame& input_frame,
                              const DualModels& models, double marg_in) {
  DualComponents c;
  c.forward = candidate.forward_logprob;
  c.backward = nlg_backward(candidate, input_frame, models);
  c.marg_out = models.lm.score(candidate.payload);
  c.marg_in = marg_in;
  return c;
}

DualComponents nlu_components(const Hypothesis& candidate, const Utterance& input_words,
                              std::span<const TokenId> input_subwords, const DualModels& models,
                              double marg_in, Rng& rng) {
  const FrameInput frame =
      make_frame_input(nlu_frame(candidate, input_words, models.lexicon), models.lexicon.words);
  DualComponents c;
  c.forward = candidate.forward_logprob;
  c.backward = models.nlg.score(frame, input_subwords);
  c.marg_out = models.mfm.score(frame, rng);
  c.marg_in = marg_in;
  return c;
}

}  // namespace

DualScore dual_score_nlg(const Hypothesis& candidate, const SemanticFrame& input_frame,
                         const DualModels& models, DualWeights w, Rng& rng) {
  const double marg_in =
      models.mfm.score(make_frame_input(input_frame, models.lexicon.words), rng);
  return make_dual_score(nlg_components(candidate, input_frame, models, marg_in), w);
}

DualScore dual_score_nlu(const Hypothesis& candidate, const Utterance& input_words,
                         const DualModels& models, DualWeights w, Rng& rng) {
  const Utterance subwords = models.lexicon.bpe.encode(input_words.surface);
  const double marg_in = models.lm.score(subwords.tokens);
  return make_dual_score(
      nlu_components(candidate, input_words, subwords.tokens, models, marg_in, rng), w);
}

std::vector<ScoredHypothesis> score_nlg_candidates(std::span<const Hypothesis> candidates,
                                                   const SemanticFrame& input_frame,
                                                   const DualModels& models, std::uint64_t seed,
                                                   std::size_t example_index) {
  Rng rng(derive_seed(seed, example_index, 0));
  const double marg_in =
      models.mfm.score(make_frame_input(input_frame, models.lexicon.words), rng);
  std::vector<ScoredHypothesis> out;
  out.reserve(candidates.size());
  for (const Hypothesis& h : candidates) {
    out.push_back({h, nlg_components(h, input_frame, models, marg_in)});
  }
  return out;
}

std::vector<ScoredHypothesis> score_nlu_candidates(std::span<const Hypothesis> candidates,
                                                   const Utterance& input_words,
                                                   const DualModels& models, std::uint64_t seed,
                                                   std::size_t example_index) {
  const Utterance subwords = models.lexicon.bpe.encode(input_words.surface);
  const double marg_in = models.lm.score(subwords.tokens);
  std::vector<ScoredHypothesis> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Rng rng(derive_seed(seed, example_index, 1 + i));
    out.push_back({candidates[i], nlu_components(candidates[i], input_words, subwords.tokens,
                                                 models, marg_in, rng)});
  }
  return out;
}

std::size_t rerank(std::span<const DualScore> scores) {
  if (scores.empty()) throw StructuralError("cannot rerank an empty hypothesis list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const DualScore& a = scores[i];
    const DualScore& b = scores[best];
    if (a.ranking > b.ranking ||
        (a.ranking == b.ranking && a.components.forward > b.components.forward)) {
      best = i;
    }
  }
  return best;
}

std::size_t rerank(std::span<const ScoredHypothesis> scored, DualWeights w) {
  std::vector<DualScore> scores;
  scores.reserve(scored.size());
  for (const ScoredHypothesis& s : scored) scores.push_back(make_dual_score(s.components, w));
  return rerank(scores);
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<double> grid_values(double step) {
  if (!(step > 0.0) || step > 1.0) throw ConfigError("grid step must lie in (0, 1]");
  const double inv = 1.0 / step;
  const auto n = static_cast<std::size_t>(std::llround(inv));
  if (std::abs(inv - static_cast<double>(n)) > 1e-9) {
    throw ConfigError("grid step " + format_double(step) + " does not divide 1");
  }
  std::vector<double> values;
  values.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    values.push_back(static_cast<double>(i) / static_cast<double>(n));
  }
  return values;
}

std::vector<DualWeights> grid_points(double step) {
  const std::vector<double> values = grid_values(step);
  std::vector<DualWeights> points;
  points.reserve(values.size() * values.size());
  for (double a : values) {
    for (double b : values) points.push_back({a, b});
  }
  return points;
}

std::vector<GridChoice> select_best(std::span<const GridRow> rows) {
  if (rows.empty()) throw StructuralError("cannot select from an empty grid");
  std::vector<GridChoice> best;
  for (std::size_t m = 0; m < rows.front().metrics.size(); ++m) {
    GridChoice choice{rows.front().metrics[m].name, rows.front().weights,
                      rows.front().metrics[m].value};
    for (const GridRow& row : rows) {
      const double v = row.metrics.at(m).value;
      const bool better =
          v > choice.value ||
          (v == choice.value &&
           (row.weights.alpha > choice.weights.alpha ||
            (row.weights.alpha == choice.weights.alpha && row.weights.beta < choice.weights.beta)));
      if (better) {
        choice.weights = row.weights;
        choice.value = v;
      }
    }
    best.push_back(std::move(choice));
  }
  return best;
}

GridResult grid_search(std::span<const std::vector<ScoredHypothesis>> examples, double step,
                       const SelectionMetric& metric) {
  if (examples.empty()) throw StructuralError("grid search needs at least one example");
  GridResult result;
  std::vector<std::size_t> selection(examples.size());
  for (const DualWeights& w : grid_points(step)) {
    for (std::size_t e = 0; e < examples.size(); ++e) selection[e] = rerank(examples[e], w);
    result.rows.push_back({w, metric(selection)});
  }
  result.best = select_best(result.rows);
  return result;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string grid_csv(std::span<const GridRow> rows) {
  std::ostringstream out;
  out << "alpha,beta";
  if (!rows.empty()) {
    for (const MetricValue& m : rows.front().metrics) out << ',' << m.name;
  }
  out << '\n';
  for (const GridRow& row : rows) {
    out << format_double(row.weights.alpha) << ',' << format_double(row.weights.beta);
    for (const MetricValue& m : row.metrics) out << ',' << format_double(m.value);
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos
                                                                           : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError("grid CSV line " + std::to_string(line_no) + ": bad number '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<GridRow> parse_grid_csv(std::string_view text) {
  std::vector<GridRow> rows;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (header.empty()) {
      if (fields.size() < 2 || fields[0] != "alpha" || fields[1] != "beta") {
        throw DataError("grid CSV header must start with alpha,beta");
      }
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header.size()) {
      throw DataError("grid CSV line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    GridRow row;
    row.weights = {parse_number(fields[0], line_no), parse_number(fields[1], line_no)};
    for (std::size_t i = 2; i < fields.size(); ++i) {
      row.metrics.push_back({header[i], parse_number(fields[i], line_no)});
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw DataError("grid CSV is empty");
  return rows;
}

}  // namespace dualinf
