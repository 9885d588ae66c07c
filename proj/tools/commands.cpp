#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualinf/checkpoint.hpp"
#include "dualinf/data.hpp"
#include "dualinf/errors.hpp"
#include "dualinf/pipeline.hpp"
#include "dualinf/synth.hpp"

namespace dualinf::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

constexpr std::array<ModelKind, 4> kAllKinds = {ModelKind::kNlu, ModelKind::kNlg, ModelKind::kLm,
                                                ModelKind::kMaskedFrame};

std::size_t kind_index(ModelKind kind) {
  return static_cast<std::size_t>(std::find(kAllKinds.begin(), kAllKinds.end(), kind) -
                                  kAllKinds.begin());
}

// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }
  ~Section() = default;

  template <typename T>
  void read(const char* key, T& dst) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + qualified(key) + "': " + e.what());
    }
  }

  void read_path(const char* key, fs::path& dst, const fs::path& base) {
    std::string s;
    if (!j_.contains(key)) return;
    read(key, s);
    dst = s.empty() ? fs::path() : resolve(s, base);
  }

  std::optional<Section> child(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Section(j_.at(key), qualified(key));
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }
  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

  static fs::path resolve(const std::string& s, const fs::path& base) {
    const fs::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
  }

 private:
  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void check_direction(const std::string& d) {
  if (d != "nlu" && d != "nlg" && d != "both") {
    throw ConfigError("direction must be nlu, nlg or both (got '" + d + "')");
  }
}

void check_config(const RunConfig& c) {
  check_direction(c.direction);
  c.weights.validate();
  if (c.beam == 0) throw ConfigError("beam must be at least 1");
  if (c.max_len == 0) throw ConfigError("max_len must be at least 1");
  if (c.k_intent == 0) throw ConfigError("k_intent must be at least 1");
  if (c.train.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (c.dims.hidden == 0 || c.dims.embedding == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  grid_values(c.grid_step);
}

}  // namespace

RunConfig parse_config(std::string_view json_text, const fs::path& base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("command") && doc.contains("config")) {
    doc = json(doc.at("config"));
  }
  RunConfig c;
  Section top(doc, "");
  top.read("seed", c.seed);
  top.read_path("data", c.data, base);
  top.read_path("out", c.out, base);
  top.read_path("checkpoint_dir", c.checkpoint_dir, base);
  if (auto s = top.child("model")) {
    s->read("hidden", c.dims.hidden);
    s->read("embedding", c.dims.embedding);
    s->finish();
  }
  if (auto s = top.child("train")) {
    s->read("epochs", c.train.epochs);
    s->read("batch", c.train.batch_size);
    s->read("teacher_forcing", c.train.teacher_forcing);
    s->read("mask_prob", c.train.mask_prob);
    s->read("clip", c.train.clip_norm);
    s->read("lr", c.train.adam.lr);
    s->read("beta1", c.train.adam.beta1);
    s->read("beta2", c.train.adam.beta2);
    s->read("eps", c.train.adam.eps);
    if (s->has("models")) {
      c.models.clear();
      for (const auto& m : s->raw("models")) {
        if (!m.is_string()) throw ConfigError("train.models entries must be strings");
        c.models.push_back(parse_model_kind(m.get<std::string>()));
      }
    }
    s->finish();
  }
  if (auto s = top.child("bpe")) {
    s->read("merges", c.bpe_merges);
    s->finish();
  }
  if (auto s = top.child("decode")) {
    s->read("beam", c.beam);
    s->read("max_len", c.max_len);
    s->read("k_intent", c.k_intent);
    s->finish();
  }
  if (auto s = top.child("dual")) {
    s->read("alpha", c.weights.alpha);
    s->read("beta", c.weights.beta);
    s->read("direction", c.direction);
    s->finish();
  }
  if (auto s = top.child("grid")) {
    s->read("step", c.grid_step);
    s->read("split", c.grid_split);
    s->read("test_eval", c.grid_test_eval);
    s->finish();
  }
  if (auto s = top.child("eval")) {
    s->read("split", c.eval_split);
    s->finish();
  }
  if (top.has("checkpoints")) {
    const json& cks = top.raw("checkpoints");
    if (!cks.is_object()) throw ConfigError("config section 'checkpoints' must be an object");
    for (const auto& [kind, p] : cks.items()) {
      parse_model_kind(kind);
      if (!p.is_string()) throw ConfigError("checkpoint path for '" + kind + "' must be a string");
      c.checkpoints[kind] = Section::resolve(p.get<std::string>(), base);
    }
  }
  if (auto s = top.child("synth")) {
    s->read("train", c.synth.train);
    s->read("valid", c.synth.valid);
    s->read("test", c.synth.test);
    s->read("nlg_noise", c.synth.nlg_noise);
    s->finish();
  }
  top.finish();
  check_config(c);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  }
  return parse_config(text, path.parent_path());
}

namespace {

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["data"] = c.data.generic_string();
  j["out"] = c.out.generic_string();
  j["checkpoint_dir"] = c.checkpoint_dir.generic_string();
  j["model"] = {{"hidden", c.dims.hidden}, {"embedding", c.dims.embedding}};
  ordered_json models = json::array();
  for (ModelKind k : c.models) models.push_back(std::string(to_string(k)));
  j["train"] = {{"epochs", c.train.epochs},
                {"batch", c.train.batch_size},
                {"teacher_forcing", c.train.teacher_forcing},
                {"mask_prob", c.train.mask_prob},
                {"clip", c.train.clip_norm},
                {"lr", c.train.adam.lr},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps},
                {"models", models}};
  j["bpe"] = {{"merges", c.bpe_merges}};
  j["decode"] = {{"beam", c.beam}, {"max_len", c.max_len}, {"k_intent", c.k_intent}};
  j["dual"] = {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"direction", c.direction}};
  j["grid"] = {{"step", c.grid_step}, {"split", c.grid_split}, {"test_eval", c.grid_test_eval}};
  j["eval"] = {{"split", c.eval_split}};
  ordered_json cks = json::object();
  for (const auto& [k, p] : c.checkpoints) cks[k] = p.generic_string();
  j["checkpoints"] = cks;
  j["synth"] = {{"train", c.synth.train},
                {"valid", c.synth.valid},
                {"test", c.synth.test},
                {"nlg_noise", c.synth.nlg_noise}};
  return j;
}

}  // namespace

std::string config_json(const RunConfig& config) { return config_to_json(config).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

std::string fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Collects outputs and inputs of one command and writes its run manifest.
class Run {
 public:
  Run(std::string command, const RunConfig& config, std::ostream& log)
      : command_(std::move(command)), config_(config), log_(log) {}

  std::ostream& log() { return log_; }

  void input(const fs::path& p) {
    if (std::find(inputs_.begin(), inputs_.end(), p) == inputs_.end()) inputs_.push_back(p);
  }

  void warn(const std::string& message) {
    log_ << "warning: " << message << "\n";
    result_.warnings.push_back(message);
  }

  fs::path write(const std::string& name, std::string_view bytes) {
    const fs::path p = config_.out / name;
    write_file(p, bytes);
    result_.outputs.push_back(p);
    return p;
  }

  CommandResult finish() {
    ordered_json m;
    m["command"] = command_;
    m["config"] = config_to_json(config_);
    m["overrides"] = config_.overrides;
    ordered_json inputs = json::array();
    for (const fs::path& p : inputs_) {
      inputs.push_back({{"path", p.generic_string()}, {"fnv1a64", fnv1a64(read_file(p))}});
    }
    m["inputs"] = inputs;
    ordered_json outputs = json::array();
    for (const fs::path& p : result_.outputs) outputs.push_back(p.filename().generic_string());
    m["outputs"] = outputs;
    m["warnings"] = result_.warnings;
    const fs::path p = config_.out / (command_ + "_run.json");
    write_file(p, m.dump(2) + "\n");
    result_.outputs.push_back(p);
    return result_;
  }

 private:
  std::string command_;
  const RunConfig& config_;
  std::ostream& log_;
  std::vector<fs::path> inputs_;
  CommandResult result_;
};

std::vector<std::string> ordered_splits(const std::map<std::string, fs::path>& splits) {
  std::vector<std::string> out;
  for (const char* s : {"train", "valid", "test"}) {
    if (splits.count(s)) out.emplace_back(s);
  }
  for (const auto& [name, path] : splits) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, std::vector<NluExample>> nlu;
  std::map<std::string, std::vector<NlgExample>> nlg;
};

// Loads the requested splits (all when `only` is empty) in the order
// train, valid, test, others; NLU files before NLG files.
Dataset load_dataset(const RunConfig& config, LabelVocab& labels, bool grow,
                     const std::set<std::string>& only, Run& run) {
  if (config.data.empty()) throw ConfigError("no dataset manifest given (set \"data\" or --data)");
  if (!fs::exists(config.data)) {
    throw ConfigError("dataset manifest '" + config.data.string() + "' does not exist");
  }
  Dataset d;
  d.manifest = load_manifest(config.data);
  run.input(config.data);
  const auto wanted = [&](const std::string& s) { return only.empty() || only.count(s) > 0; };
  for (const std::string& split : ordered_splits(d.manifest.nlu)) {
    if (!wanted(split)) continue;
    const fs::path& p = d.manifest.nlu.at(split);
    d.nlu[split] = load_nlu(p, labels, grow);
    run.input(p);
    for (const std::string& w : check_counts(d.manifest, split, d.nlu[split].size())) run.warn(w);
  }
  for (const std::string& split : ordered_splits(d.manifest.nlg)) {
    if (!wanted(split)) continue;
    const fs::path& p = d.manifest.nlg.at(split);
    d.nlg[split] = load_nlg(p, labels, grow);
    run.input(p);
    if (!d.manifest.nlu.count(split)) {
      for (const std::string& w : check_counts(d.manifest, split, d.nlg[split].size())) {
        run.warn(w);
      }
    }
  }
  return d;
}

std::vector<NluExample> nlu_split(const Dataset& d, const std::string& split,
                                  const TagScheme& scheme) {
  if (auto it = d.nlu.find(split); it != d.nlu.end()) return it->second;
  if (auto it = d.nlg.find(split); it != d.nlg.end()) {
    return augment_nlg_to_nlu(it->second, scheme).examples;
  }
  throw DataError("dataset has no '" + split + "' split");
}

std::vector<NlgExample> nlg_split(const Dataset& d, const std::string& split,
                                  const TagScheme& scheme) {
  if (auto it = d.nlg.find(split); it != d.nlg.end()) return it->second;
  if (auto it = d.nlu.find(split); it != d.nlu.end()) {
    return augment_nlu_to_nlg(it->second, scheme);
  }
  throw DataError("dataset has no '" + split + "' split");
}

bool has_split(const Dataset& d, const std::string& split) {
  return d.nlu.count(split) > 0 || d.nlg.count(split) > 0;
}

bool wants_nlu(const RunConfig& c) { return c.direction != "nlg"; }
bool wants_nlg(const RunConfig& c) { return c.direction != "nlu"; }

fs::path checkpoint_path(const RunConfig& c, ModelKind kind) {
  const std::string name(to_string(kind));
  if (auto it = c.checkpoints.find(name); it != c.checkpoints.end()) return it->second;
  return (c.checkpoint_dir.empty() ? c.out : c.checkpoint_dir) / (name + ".ckpt");
}

struct Models {
  Lexicon lexicon;
  std::optional<NluModel> nlu;
  std::optional<NlgModel> nlg;
  std::optional<LmModel> lm;
  std::optional<MaskedFrameModel> mfm;

  DualModels dual() const { return DualModels{*nlu, *nlg, *lm, *mfm, lexicon}; }
};

Models load_models(const RunConfig& c, const std::vector<ModelKind>& kinds, Run& run) {
  Models m;
  bool first = true;
  for (ModelKind kind : kinds) {
    const fs::path p = checkpoint_path(c, kind);
    const Checkpoint ck = load_checkpoint(p);
    run.input(p);
    if (first) {
      m.lexicon = ck.lexicon;
      first = false;
    } else if (!(ck.lexicon == m.lexicon)) {
      throw CheckpointError("checkpoint '" + p.string() +
                            "' was built with different inventories than the other checkpoints");
    }
    switch (kind) {
      case ModelKind::kNlu: m.nlu.emplace(nlu_from_checkpoint(ck)); break;
      case ModelKind::kNlg: m.nlg.emplace(nlg_from_checkpoint(ck)); break;
      case ModelKind::kLm: m.lm.emplace(lm_from_checkpoint(ck)); break;
      case ModelKind::kMaskedFrame: m.mfm.emplace(mfm_from_checkpoint(ck)); break;
    }
  }
  return m;
}

DecodeOptions decode_options(const RunConfig& c) {
  return DecodeOptions{c.beam, c.max_len, c.k_intent, c.seed};
}

EvalReport merge_reports(const EvalReport& nlu, const EvalReport& nlg) {
  EvalReport r = nlu;
  r.nlg_examples = nlg.nlg_examples;
  r.bleu = nlg.bleu;
  r.rouge = nlg.rouge;
  return r;
}

std::set<std::string> split_set(std::initializer_list<std::string> names) {
  return std::set<std::string>(names);
}

std::map<std::string, double> config_echo(const RunConfig& c) {
  return {{"embedding", static_cast<double>(c.dims.embedding)},
          {"hidden", static_cast<double>(c.dims.hidden)},
          {"epochs", static_cast<double>(c.train.epochs)},
          {"batch", static_cast<double>(c.train.batch_size)},
          {"teacher_forcing", c.train.teacher_forcing},
          {"mask_prob", c.train.mask_prob},
          {"clip", c.train.clip_norm},
          {"lr", c.train.adam.lr},
          {"beta1", c.train.adam.beta1},
          {"beta2", c.train.adam.beta2},
          {"eps", c.train.adam.eps},
          {"bpe_merges", static_cast<double>(c.bpe_merges)}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

CommandResult cmd_synth(const RunConfig& config, std::ostream& log) {
  Run run("synth", config, log);
  LabelVocab labels;
  register_synth_labels(labels);
  DatasetManifest manifest;
  manifest.name = "synthetic";
  const std::array<std::pair<const char*, std::size_t>, 3> splits = {
      {{"train", config.synth.train}, {"valid", config.synth.valid}, {"test", config.synth.test}}};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, size] = splits[s];
    if (size == 0) continue;
    SynthCorpus corpus = synth_corpus(derive_seed(config.seed, 100 + s), size, labels);
    if (std::string_view(name) == "train" && config.synth.nlg_noise > 0.0) {
      corpus.nlg = corrupt_frames(corpus.nlg, config.synth.nlg_noise, derive_seed(config.seed, 200));
    }
    const std::string nlu_name = std::string("nlu_") + name + ".jsonl";
    const std::string nlg_name = std::string("nlg_") + name + ".jsonl";
    run.write(nlu_name, format_nlu(corpus.nlu, labels));
    run.write(nlg_name, format_nlg(corpus.nlg, labels));
    manifest.nlu[name] = config.out / nlu_name;
    manifest.nlg[name] = config.out / nlg_name;
    manifest.counts[name] = size;
    log << "synth: " << name << " split with " << size << " examples\n";
  }
  save_manifest(config.out / "manifest.json", manifest);
  run.write("manifest.json", read_file(config.out / "manifest.json"));
  return run.finish();
}

CommandResult cmd_train(const RunConfig& config, std::ostream& log) {
  Run run("train", config, log);
  if (config.models.empty()) throw ConfigError("no models requested for training");
  LabelVocab labels;
  const Dataset data = load_dataset(config, labels, true, {}, run);
  const TagScheme scheme = labels.scheme();
  if (!has_split(data, "train")) throw DataError("dataset has no 'train' split");
  const std::vector<NluExample> nlu_train = nlu_split(data, "train", scheme);
  const std::vector<NlgExample> nlg_train = nlg_split(data, "train", scheme);
  // The frame marginal learns from frames paired with NLU data when present.
  const std::vector<NlgExample> frames =
      data.nlu.count("train") ? augment_nlu_to_nlg(nlu_train, scheme) : nlg_train;
  const Lexicon lexicon = build_lexicon(nlu_train, nlg_train, labels, config.bpe_merges);
  const InventorySizes sizes = InventorySizes::of(lexicon);
  log << "train: " << nlu_train.size() << " NLU / " << nlg_train.size() << " NLG examples, "
      << lexicon.words.size() << " words, " << lexicon.bpe.vocab_size() << " subwords\n";

  std::string train_log;
  for (ModelKind kind : config.models) {
    const std::string name(to_string(kind));
    const std::size_t k = kind_index(kind);
    Rng init(derive_seed(config.seed, k, 0));
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, k, 1);
    const EpochCallback on_epoch = [&](const EpochStats& s) {
      ordered_json line;
      line["model"] = name;
      line["epoch"] = s.epoch;
      line["total_loss"] = s.total_loss;
      line["predictions"] = s.predictions;
      line["mean_loss"] = s.mean_loss();
      train_log += line.dump() + "\n";
      log << "train: " << name << " epoch " << s.epoch << " mean loss " << s.mean_loss() << "\n";
    };
    const auto save = [&](const ParameterStore& params) {
      const Checkpoint ck =
          make_checkpoint(kind, config.dims, lexicon, config.seed, config_echo(config), params);
      run.write(name + ".ckpt", serialize_checkpoint(ck));
    };
    switch (kind) {
      case ModelKind::kNlu: {
        NluModel m(config.dims, sizes, init);
        train_nlu(m, make_nlu_items(nlu_train, lexicon), tc, on_epoch);
        save(m.params());
        break;
      }
      case ModelKind::kNlg: {
        NlgModel m(config.dims, sizes, init);
        train_nlg(m, make_nlg_items(nlg_train, lexicon), tc, on_epoch);
        save(m.params());
        break;
      }
      case ModelKind::kLm: {
        LmModel m(config.dims, sizes, init);
        train_lm(m, make_lm_items(nlu_train, nlg_train, lexicon), tc, on_epoch);
        save(m.params());
        break;
      }
      case ModelKind::kMaskedFrame: {
        MaskedFrameModel m(config.dims, sizes, init);
        train_mfm(m, make_mfm_items(frames, lexicon), tc, on_epoch);
        save(m.params());
        break;
      }
    }
  }
  run.write("train_log.jsonl", train_log);
  return run.finish();
}

CommandResult cmd_eval(const RunConfig& config, std::ostream& log) {
  Run run("eval", config, log);
  std::vector<ModelKind> kinds;
  if (wants_nlu(config)) kinds.push_back(ModelKind::kNlu);
  if (wants_nlg(config)) kinds.push_back(ModelKind::kNlg);
  Models models = load_models(config, kinds, run);
  LabelVocab labels = models.lexicon.labels;
  const Dataset data = load_dataset(config, labels, false, split_set({config.eval_split}), run);
  const TagScheme scheme = labels.scheme();
  const DecodeOptions opts = decode_options(config);
  EvalReport nlu_part;
  EvalReport nlg_part;
  std::string predictions;
  const auto predict = [&](const char* direction, std::size_t i, const std::string& input,
                           const std::string& output) {
    ordered_json line;
    line["direction"] = direction;
    line["example"] = i;
    line["input"] = input;
    line["output"] = output;
    predictions += line.dump() + "\n";
  };
  if (wants_nlu(config)) {
    const auto examples = nlu_split(data, config.eval_split, scheme);
    const auto hyps = decode_nlu(*models.nlu, examples, models.lexicon, opts);
    const std::vector<std::size_t> top(examples.size(), 0);
    nlu_part = nlu_report(examples, hyps, top, models.lexicon);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const Utterance words = models.lexicon.words.encode(examples[i].text);
      predict("nlu", i, examples[i].text,
              labels.format(nlu_frame(hyps[i].front(), words, models.lexicon)));
    }
  }
  if (wants_nlg(config)) {
    const auto examples = nlg_split(data, config.eval_split, scheme);
    const auto hyps = decode_nlg(*models.nlg, examples, models.lexicon, opts);
    const std::vector<std::size_t> top(examples.size(), 0);
    nlg_part = nlg_report(examples, hyps, top, models.lexicon);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      predict("nlg", i, labels.format(examples[i].frame),
              hypothesis_text(hyps[i].front(), models.lexicon));
    }
  }
  const EvalReport report = merge_reports(nlu_part, nlg_part);
  run.write("eval_report.json", report.to_json());
  run.write("eval_report.csv", EvalReport::csv_header() + report.csv_row());
  run.write("eval_predictions.jsonl", predictions);
  log << report.to_json();
  return run.finish();
}

namespace {

ordered_json components_json(const ScoredHypothesis& s, DualWeights w) {
  const DualScore d = make_dual_score(s.components, w);
  return {{"forward", d.components.forward},
          {"backward", d.components.backward},
          {"marg_out", d.components.marg_out},
          {"marg_in", d.components.marg_in},
          {"combined", d.combined}};
}

}  // namespace

CommandResult cmd_dualinf(const RunConfig& config, std::ostream& log) {
  Run run("dualinf", config, log);
  Models models = load_models(config, {kAllKinds.begin(), kAllKinds.end()}, run);
  LabelVocab labels = models.lexicon.labels;
  const Dataset data = load_dataset(config, labels, false, split_set({config.eval_split}), run);
  const TagScheme scheme = labels.scheme();
  const DecodeOptions opts = decode_options(config);
  const DualModels dual = models.dual();
  const DualWeights w = config.weights;
  std::string trace;
  EvalReport nlu_part;
  EvalReport nlg_part;
  if (wants_nlu(config)) {
    const auto examples = nlu_split(data, config.eval_split, scheme);
    const auto hyps = decode_nlu(*models.nlu, examples, models.lexicon, opts);
    const auto scored = score_nlu(hyps, examples, dual, config.seed);
    const auto chosen = select(scored, w);
    nlu_part = nlu_report(examples, hyps, chosen, models.lexicon);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const Utterance words = models.lexicon.words.encode(examples[i].text);
      ordered_json line;
      line["direction"] = "nlu";
      line["example"] = i;
      line["input"] = examples[i].text;
      line["selected"] = chosen[i];
      line["output"] =
          labels.format(nlu_frame(scored[i][chosen[i]].hypothesis, words, models.lexicon));
      ordered_json list = json::array();
      for (std::size_t r = 0; r < scored[i].size(); ++r) {
        ordered_json h;
        h["rank"] = r;
        h["output"] = labels.format(nlu_frame(scored[i][r].hypothesis, words, models.lexicon));
        h["scores"] = components_json(scored[i][r], w);
        list.push_back(std::move(h));
      }
      line["hypotheses"] = std::move(list);
      trace += line.dump() + "\n";
    }
  }
  if (wants_nlg(config)) {
    const auto examples = nlg_split(data, config.eval_split, scheme);
    const auto hyps = decode_nlg(*models.nlg, examples, models.lexicon, opts);
    const auto scored = score_nlg(hyps, examples, dual, config.seed);
    const auto chosen = select(scored, w);
    nlg_part = nlg_report(examples, hyps, chosen, models.lexicon);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      ordered_json line;
      line["direction"] = "nlg";
      line["example"] = i;
      line["input"] = labels.format(examples[i].frame);
      line["selected"] = chosen[i];
      line["output"] = hypothesis_text(scored[i][chosen[i]].hypothesis, models.lexicon);
      ordered_json list = json::array();
      for (std::size_t r = 0; r < scored[i].size(); ++r) {
        ordered_json h;
        h["rank"] = r;
        h["output"] = hypothesis_text(scored[i][r].hypothesis, models.lexicon);
        h["scores"] = components_json(scored[i][r], w);
        list.push_back(std::move(h));
      }
      line["hypotheses"] = std::move(list);
      trace += line.dump() + "\n";
    }
  }
  const EvalReport report = merge_reports(nlu_part, nlg_part);
  run.write("dualinf_report.json", report.to_json());
  run.write("dualinf_report.csv", EvalReport::csv_header() + report.csv_row());
  run.write("dualinf_trace.jsonl", trace);
  log << report.to_json();
  return run.finish();
}

CommandResult cmd_gridsearch(const RunConfig& config, std::ostream& log) {
  Run run("gridsearch", config, log);
  Models models = load_models(config, {kAllKinds.begin(), kAllKinds.end()}, run);
  LabelVocab labels = models.lexicon.labels;
  std::set<std::string> splits{config.grid_split};
  if (config.grid_test_eval) splits.insert(config.eval_split);
  const Dataset data = load_dataset(config, labels, false, splits, run);
  if (!has_split(data, config.grid_split)) {
    throw DataError("dataset has no '" + config.grid_split + "' split for the grid search");
  }
  const bool test_eval = config.grid_test_eval && has_split(data, config.eval_split);
  const TagScheme scheme = labels.scheme();
  const DecodeOptions opts = decode_options(config);
  const DualModels dual = models.dual();

  ordered_json selection;
  const auto record = [&](const char* direction, const GridResult& grid, const auto& test_value) {
    ordered_json dir;
    for (const GridChoice& choice : grid.best) {
      ordered_json entry;
      entry["alpha"] = choice.weights.alpha;
      entry["beta"] = choice.weights.beta;
      entry["valid"] = choice.value;
      if (test_eval) entry["test"] = test_value(choice);
      dir[choice.metric] = std::move(entry);
      log << "gridsearch: " << direction << " " << choice.metric << " best at alpha="
          << choice.weights.alpha << " beta=" << choice.weights.beta << " (" << choice.value
          << ")\n";
    }
    selection[direction] = std::move(dir);
  };

  if (wants_nlu(config)) {
    const auto examples = nlu_split(data, config.grid_split, scheme);
    const auto hyps = decode_nlu(*models.nlu, examples, models.lexicon, opts);
    const auto scored = score_nlu(hyps, examples, dual, config.seed);
    const GridResult grid =
        grid_search(scored, config.grid_step, [&](std::span<const std::size_t> sel) {
          return nlu_metric_values(nlu_report(examples, hyps, sel, models.lexicon));
        });
    run.write("grid_nlu.csv", grid_csv(grid.rows));
    std::vector<NluExample> test;
    std::vector<std::vector<Hypothesis>> test_hyps;
    std::vector<std::vector<ScoredHypothesis>> test_scored;
    if (test_eval) {
      test = nlu_split(data, config.eval_split, scheme);
      test_hyps = decode_nlu(*models.nlu, test, models.lexicon, opts);
      test_scored = score_nlu(test_hyps, test, dual, config.seed);
    }
    record("nlu", grid, [&](const GridChoice& choice) {
      const auto values = nlu_metric_values(
          nlu_report(test, test_hyps, select(test_scored, choice.weights), models.lexicon));
      for (const MetricValue& v : values) {
        if (v.name == choice.metric) return v.value;
      }
      return 0.0;
    });
  }
  if (wants_nlg(config)) {
    const auto examples = nlg_split(data, config.grid_split, scheme);
    const auto hyps = decode_nlg(*models.nlg, examples, models.lexicon, opts);
    const auto scored = score_nlg(hyps, examples, dual, config.seed);
    const GridResult grid =
        grid_search(scored, config.grid_step, [&](std::span<const std::size_t> sel) {
          return nlg_metric_values(nlg_report(examples, hyps, sel, models.lexicon));
        });
    run.write("grid_nlg.csv", grid_csv(grid.rows));
    std::vector<NlgExample> test;
    std::vector<std::vector<Hypothesis>> test_hyps;
    std::vector<std::vector<ScoredHypothesis>> test_scored;
    if (test_eval) {
      test = nlg_split(data, config.eval_split, scheme);
      test_hyps = decode_nlg(*models.nlg, test, models.lexicon, opts);
      test_scored = score_nlg(test_hyps, test, dual, config.seed);
    }
    record("nlg", grid, [&](const GridChoice& choice) {
      const auto values = nlg_metric_values(
          nlg_report(test, test_hyps, select(test_scored, choice.weights), models.lexicon));
      for (const MetricValue& v : values) {
        if (v.name == choice.metric) return v.value;
      }
      return 0.0;
    });
  }
  run.write("gridsearch_selection.json", selection.dump(2) + "\n");
  return run.finish();
}

// ---------------------------------------------------------------------------
// Command line

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual inference between language understanding and generation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::size_t> beam;
  std::optional<std::string> direction;
  std::optional<std::string> out_dir;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint_dir;

  const std::array<std::pair<const char*, const char*>, 5> commands = {{
      {"synth", "Generate the synthetic corpus and its dataset manifest"},
      {"train", "Train the NLU, NLG, language and frame models"},
      {"eval", "Evaluate plain beam top-1 decoding"},
      {"dualinf", "Re-rank beam hypotheses with dual inference"},
      {"gridsearch", "Sweep (alpha, beta) on the validation split"},
  }};
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON config file (flags take precedence)");
    sub->add_option("--seed", seed, "Experiment seed");
    sub->add_option("--alpha", alpha, "Forward-score weight in [0, 1]");
    sub->add_option("--beta", beta, "Marginal weight in [0, 1]");
    sub->add_option("--beam", beam, "Beam size");
    sub->add_option("--direction", direction, "nlu, nlg or both");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--data", data, "Dataset manifest");
    sub->add_option("--checkpoint-dir", checkpoint_dir, "Directory holding <kind>.ckpt files");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    const auto override_with = [&](const char* key, const std::string& shown) {
      config.overrides[key] = shown;
    };
    if (seed) {
      config.seed = *seed;
      override_with("seed", std::to_string(*seed));
    }
    if (alpha) {
      config.weights.alpha = *alpha;
      override_with("alpha", format_double(*alpha));
    }
    if (beta) {
      config.weights.beta = *beta;
      override_with("beta", format_double(*beta));
    }
    if (beam) {
      config.beam = *beam;
      override_with("beam", std::to_string(*beam));
    }
    if (direction) {
      config.direction = *direction;
      override_with("direction", *direction);
    }
    if (out_dir) {
      config.out = *out_dir;
      override_with("out", *out_dir);
    }
    if (data) {
      config.data = *data;
      override_with("data", *data);
    }
    if (checkpoint_dir) {
      config.checkpoint_dir = *checkpoint_dir;
      override_with("checkpoint_dir", *checkpoint_dir);
    }
    check_config(config);

    CommandResult result;
    if (command == "synth") result = cmd_synth(config, out);
    if (command == "train") result = cmd_train(config, out);
    if (command == "eval") result = cmd_eval(config, out);
    if (command == "dualinf") result = cmd_dualinf(config, out);
    if (command == "gridsearch") result = cmd_gridsearch(config, out);
    for (const fs::path& p : result.outputs) out << "wrote " << p.generic_string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "dualinf " << command << ": configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "dualinf " << command << ": checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const Error& e) {
    err << "dualinf " << command << ": data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "dualinf " << command << ": " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace dualinf::cli
