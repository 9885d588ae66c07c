#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualinf/decode.hpp"
#include "dualinf/models.hpp"
#include "dualinf/training.hpp"

namespace dualinf::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,       // bad flags or configuration
  kExitData = 3,        // unreadable or malformed data
  kExitCheckpoint = 4,  // missing, corrupt or mutually incompatible checkpoints
};

struct SynthOptions {
  std::size_t train = 2000;
  std::size_t valid = 200;
  std::size_t test = 700;
  double nlg_noise = 0.0;  // fraction of NLG training frames corrupted
};

// Everything a command needs. Defaults follow the reference training setup:
// hidden 200, embedding 50, batch 48, 10 epochs, teacher forcing 0.9,
// beam 20.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path data;  // dataset manifest
  ModelDims dims;
  TrainConfig train;
  std::vector<ModelKind> models{ModelKind::kNlu, ModelKind::kNlg, ModelKind::kLm,
                                ModelKind::kMaskedFrame};
  std::size_t bpe_merges = 1000;
  std::size_t beam = 20;
  std::size_t max_len = 60;
  std::size_t k_intent = 3;
  DualWeights weights;
  std::string direction = "both";  // nlu, nlg or both
  std::string eval_split = "test";
  std::string grid_split = "valid";
  double grid_step = 0.1;
  bool grid_test_eval = true;
  std::filesystem::path checkpoint_dir;  // defaults to `out`
  std::map<std::string, std::filesystem::path> checkpoints;  // per-kind overrides
  SynthOptions synth;
  std::filesystem::path out = "run";
  // Flag overrides applied on top of the file, recorded in run manifests.
  std::map<std::string, std::string> overrides;
};

// Parses a JSON config document over the defaults. Relative paths resolve
// against `base`. A run manifest (with "command" and "config") is accepted
// and its embedded config used. Throws ConfigError on unknown keys or bad
// values.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base);
RunConfig load_config(const std::filesystem::path& path);
// The fully resolved config as a JSON document that parse_config accepts.
std::string config_json(const RunConfig& config);

struct CommandResult {
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> warnings;
};

// Each command writes its outputs plus a `<command>_run.json` manifest into
// config.out and throws dualinf::Error subclasses on failure.
CommandResult cmd_synth(const RunConfig& config, std::ostream& log);
CommandResult cmd_train(const RunConfig& config, std::ostream& log);
CommandResult cmd_eval(const RunConfig& config, std::ostream& log);
CommandResult cmd_dualinf(const RunConfig& config, std::ostream& log);
CommandResult cmd_gridsearch(const RunConfig& config, std::ostream& log);

// Command-line entry point (arguments exclude the program name). Precedence:
// built-in defaults, then the --config file, then flags.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dualinf::cli
