#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dualinf/layers.hpp"
#include "dualinf/models.hpp"

namespace dualinf {

// On disk: one JSON header line (sorted keys) describing the model kind,
// dimensions, lexicon, training seed, config echo and parameter shapes,
// followed by the parameter values as little-endian float64 in header order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelKind kind = ModelKind::kNlu;
  ModelDims dims;
  Lexicon lexicon;
  std::uint64_t seed = 0;
  std::map<std::string, double> config;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
};

// Snapshot of a parameter store.
Checkpoint make_checkpoint(ModelKind kind, ModelDims dims, const Lexicon& lexicon,
                           std::uint64_t seed, std::map<std::string, double> config,
                           const ParameterStore& params);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws CheckpointError with a diagnostic on any format, version or size
// problem.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `params`. Names and shapes must match one to
// one; nothing is ever left at its initial value. Throws CheckpointError.
void restore_parameters(const Checkpoint& checkpoint, ParameterStore& params);

// Rebuilds a model from a checkpoint of the matching kind.
NluModel nlu_from_checkpoint(const Checkpoint& checkpoint);
NlgModel nlg_from_checkpoint(const Checkpoint& checkpoint);
LmModel lm_from_checkpoint(const Checkpoint& checkpoint);
MaskedFrameModel mfm_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace dualinf
