#include "dualinf/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "dualinf/data.hpp"
#include "dualinf/errors.hpp"

namespace dualinf {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "dualinf-checkpoint";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

json shape_json(const Shape& s) { return s.dims(); }

Shape shape_from(const json& j) {
  const auto dims = j.get<std::vector<std::size_t>>();
  switch (dims.size()) {
    case 0: return Shape();
    case 1: return Shape(dims[0]);
    case 2: return Shape(dims[0], dims[1]);
    default: throw CheckpointError("parameter rank " + std::to_string(dims.size()) + " unsupported");
  }
}

json lexicon_json(const Lexicon& lex) {
  json merges = json::array();
  for (const auto& [l, r] : lex.bpe.merges()) merges.push_back(json::array({l, r}));
  json j;
  j["words"] = lex.words.vocab().symbols();
  j["bpe_alphabet"] = lex.bpe.alphabet();
  j["bpe_merges"] = std::move(merges);
  j["intents"] = lex.labels.intents();
  j["keys"] = lex.labels.keys();
  return j;
}

Lexicon lexicon_from(const json& j) {
  Lexicon lex;
  lex.words = WordVocab::from_symbols(j.at("words").get<std::vector<std::string>>());
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& m : j.at("bpe_merges")) {
    merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  lex.bpe = BpeModel::from_merges(j.at("bpe_alphabet").get<std::vector<std::string>>(),
                                  std::move(merges));
  for (const auto& i : j.at("intents")) lex.labels.add_intent(i.get<std::string>());
  for (const auto& k : j.at("keys")) lex.labels.add_key(k.get<std::string>());
  if (lex.labels.intent_count() != j.at("intents").size() ||
      lex.labels.key_count() != j.at("keys").size()) {
    throw CheckpointError("label inventories contain duplicates");
  }
  return lex;
}

template <typename Model>
Model model_from(const Checkpoint& checkpoint, ModelKind expected) {
  if (checkpoint.kind != expected) {
    throw CheckpointError("checkpoint holds a " + std::string(to_string(checkpoint.kind)) +
                          " model, expected " + std::string(to_string(expected)));
  }
  Rng rng(0);
  Model model(checkpoint.dims, InventorySizes::of(checkpoint.lexicon), rng);
  restore_parameters(checkpoint, model.params());
  return model;
}

}  // namespace

Checkpoint make_checkpoint(ModelKind kind, ModelDims dims, const Lexicon& lexicon,
                           std::uint64_t seed, std::map<std::string, double> config,
                           const ParameterStore& params) {
  Checkpoint c;
  c.kind = kind;
  c.dims = dims;
  c.lexicon = lexicon;
  c.seed = seed;
  c.config = std::move(config);
  c.names = params.names();
  for (const Tensor& t : params.tensors()) {
    c.shapes.push_back(t.shape());
    c.values.emplace_back(t.values().begin(), t.values().end());
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  if (c.names.size() != c.shapes.size() || c.names.size() != c.values.size()) {
    throw CheckpointError("checkpoint names, shapes and values disagree in count");
  }
  json params = json::array();
  std::size_t scalars = 0;
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    if (c.values[i].size() != c.shapes[i].numel()) {
      throw CheckpointError("parameter '" + c.names[i] + "' has " +
                            std::to_string(c.values[i].size()) + " values for shape " +
                            c.shapes[i].str());
    }
    json p;
    p["name"] = c.names[i];
    p["shape"] = shape_json(c.shapes[i]);
    params.push_back(std::move(p));
    scalars += c.values[i].size();
  }
  json header;
  header["format"] = kFormat;
  header["version"] = Checkpoint::kVersion;
  header["kind"] = to_string(c.kind);
  header["dims"] = {{"embedding", c.dims.embedding}, {"hidden", c.dims.hidden}};
  header["seed"] = c.seed;
  header["config"] = c.config;
  header["lexicon"] = lexicon_json(c.lexicon);
  header["parameters"] = std::move(params);
  header["payload_bytes"] = scalars * sizeof(double);

  std::string out = header.dump() + "\n";
  const std::size_t offset = out.size();
  out.resize(offset + scalars * sizeof(double));
  char* dst = out.data() + offset;
  for (const auto& vals : c.values) {
    for (double v : vals) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      std::memcpy(dst, &bits, sizeof(bits));
      dst += sizeof(bits);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw CheckpointError("checkpoint has no header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    if (header.at("format").get<std::string>() != kFormat) {
      throw CheckpointError("not a dualinf checkpoint (format '" +
                            header.at("format").get<std::string>() + "')");
    }
    const int version = header.at("version").get<int>();
    if (version != Checkpoint::kVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(Checkpoint::kVersion) + ")");
    }
    c.kind = parse_model_kind(header.at("kind").get<std::string>());
    c.dims.embedding = header.at("dims").at("embedding").get<std::size_t>();
    c.dims.hidden = header.at("dims").at("hidden").get<std::size_t>();
    c.seed = header.at("seed").get<std::uint64_t>();
    c.config = header.at("config").get<std::map<std::string, double>>();
    c.lexicon = lexicon_from(header.at("lexicon"));
    for (const auto& p : header.at("parameters")) {
      c.names.push_back(p.at("name").get<std::string>());
      c.shapes.push_back(shape_from(p.at("shape")));
    }
    std::size_t scalars = 0;
    for (const Shape& s : c.shapes) scalars += s.numel();
    const std::size_t declared = header.at("payload_bytes").get<std::size_t>();
    const std::size_t available = bytes.size() - nl - 1;
    if (declared != scalars * sizeof(double) || available != declared) {
      throw CheckpointError("checkpoint payload holds " + std::to_string(available) +
                            " bytes; header declares " + std::to_string(declared) +
                            " and shapes require " + std::to_string(scalars * sizeof(double)));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  const char* src = bytes.data() + nl + 1;
  for (const Shape& s : c.shapes) {
    std::vector<double> vals(s.numel());
    for (double& v : vals) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, src, sizeof(bits));
      src += sizeof(bits);
      v = std::bit_cast<double>(to_little_endian(bits));
    }
    c.values.push_back(std::move(vals));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  try {
    return parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void restore_parameters(const Checkpoint& checkpoint, ParameterStore& params) {
  const auto& names = params.names();
  if (names.size() != checkpoint.names.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(checkpoint.names.size()) +
                          " parameters; the model has " + std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != checkpoint.names[i]) {
      throw CheckpointError("parameter " + std::to_string(i) + " is '" + checkpoint.names[i] +
                            "' in the checkpoint but '" + names[i] + "' in the model");
    }
    Tensor& t = params.tensors()[i];
    if (!(t.shape() == checkpoint.shapes[i])) {
      throw CheckpointError("parameter '" + names[i] + "' has shape " +
                            checkpoint.shapes[i].str() + " in the checkpoint but " +
                            t.shape().str() + " in the model");
    }
    std::copy(checkpoint.values[i].begin(), checkpoint.values[i].end(),
              t.mutable_values().begin());
  }
}

NluModel nlu_from_checkpoint(const Checkpoint& c) {
  return model_from<NluModel>(c, ModelKind::kNlu);
}
NlgModel nlg_from_checkpoint(const Checkpoint& c) {
  return model_from<NlgModel>(c, ModelKind::kNlg);
}
LmModel lm_from_checkpoint(const Checkpoint& c) { return model_from<LmModel>(c, ModelKind::kLm); }
MaskedFrameModel mfm_from_checkpoint(const Checkpoint& c) {
  return model_from<MaskedFrameModel>(c, ModelKind::kMaskedFrame);
}

}  // namespace dualinf
