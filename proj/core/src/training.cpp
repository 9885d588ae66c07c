#include "dualinf/training.hpp"

#include <numeric>

#include "dualinf/errors.hpp"

namespace dualinf {

namespace {

// Shared epoch/batch loop. `loss_of(i, rng)` builds the graph for item i and
// returns its summed loss; `count_of(i)` is the number of predictions in it.
template <typename LossFn, typename CountFn>
std::vector<EpochStats> run_training(ParameterStore& params, std::size_t item_count,
                                     const TrainConfig& config, const EpochCallback& on_epoch,
                                     LossFn loss_of, CountFn count_of) {
  if (item_count == 0) throw DataError("cannot train on an empty dataset");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");

  Rng rng(config.seed);
  AdamState adam;
  adam.config = config.adam;
  std::vector<std::size_t> order(item_count);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochStats> history;
  history.reserve(config.epochs);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t begin = 0; begin < item_count; begin += config.batch_size) {
      const std::size_t end = std::min(item_count, begin + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - begin);
      params.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const Tensor loss = loss_of(order[k], rng);
        stats.total_loss += loss.item();
        stats.predictions += count_of(order[k]);
        backward(scale(loss, inv));
      }
      clip_grad_norm(params.tensors(), config.clip_norm);
      adam_step(params.tensors(), adam);
    }
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

}  // namespace

std::vector<EpochStats> train_nlu(NluModel& model, std::span<const NluTrainItem> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(
      model.params(), items.size(), config, on_epoch,
      [&](std::size_t i, Rng& rng) {
        return model.loss(items[i].words, items[i].tags, items[i].intent, config.teacher_forcing,
                          rng);
      },
      [&](std::size_t i) { return items[i].tags.size() + (items[i].intent ? 1 : 0); });
}

std::vector<EpochStats> train_nlg(NlgModel& model, std::span<const NlgTrainItem> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(
      model.params(), items.size(), config, on_epoch,
      [&](std::size_t i, Rng& rng) {
        return model.loss(items[i].frame, items[i].tokens, config.teacher_forcing, rng);
      },
      [&](std::size_t i) { return items[i].tokens.size() + 1; });
}

std::vector<EpochStats> train_lm(LmModel& model, std::span<const std::vector<TokenId>> items,
                                 const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(
      model.params(), items.size(), config, on_epoch,
      [&](std::size_t i, Rng&) { return model.loss(items[i]); },
      [&](std::size_t i) { return items[i].size() + 1; });
}

std::vector<EpochStats> train_mfm(MaskedFrameModel& model, std::span<const FrameInput> items,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(
      model.params(), items.size(), config, on_epoch,
      [&](std::size_t i, Rng& rng) { return model.loss(items[i], config.mask_prob, rng); },
      [](std::size_t) { return std::size_t{1}; });
}

}  // namespace dualinf
