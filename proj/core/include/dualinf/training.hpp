#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dualinf/frames.hpp"
#include "dualinf/models.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 48;
  double teacher_forcing = 0.9;
  double mask_prob = 0.3;
  double clip_norm = 5.0;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct NluTrainItem {
  Utterance words;
  IobSequence tags;
  std::optional<LabelId> intent;
};

struct NlgTrainItem {
  FrameInput frame;
  std::vector<TokenId> tokens;  // subwords, without BOS/EOS
};

struct EpochStats {
  std::size_t epoch = 0;      // 1-based
  double total_loss = 0.0;    // summed negative log-likelihood
  std::size_t predictions = 0;  // tags + intents, tokens + EOS, or frames (masked-frame model)

  double mean_loss() const {
    return predictions == 0 ? 0.0 : total_loss / static_cast<double>(predictions);
  }
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch MLE training. Each epoch visits the items in a fresh seeded
// shuffle; per batch the per-item losses are averaged, the gradient is
// clipped to `clip_norm`, and one Adam step is taken. All randomness
// (shuffles, teacher forcing, masking) comes from Rng(config.seed).
// Throws DataError on an empty dataset.
std::vector<EpochStats> train_nlu(NluModel& model, std::span<const NluTrainItem> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch = {});
std::vector<EpochStats> train_nlg(NlgModel& model, std::span<const NlgTrainItem> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch = {});
std::vector<EpochStats> train_lm(LmModel& model, std::span<const std::vector<TokenId>> items,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {});
std::vector<EpochStats> train_mfm(MaskedFrameModel& model, std::span<const FrameInput> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace dualinf
