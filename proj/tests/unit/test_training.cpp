#include <doctest.h>

#include "dualinf/errors.hpp"
#include "dualinf/training.hpp"

using namespace dualinf;

namespace {

const ModelDims kDims{6, 10};
const InventorySizes kSizes{12, 10, 2, 2};

std::vector<NluTrainItem> nlu_items() {
  std::vector<NluTrainItem> items;
  for (int i = 0; i < 6; ++i) {
    NluTrainItem item;
    item.words.tokens = {4 + i % 4, 5 + i % 3, 6};
    item.words.pieces = {"a", "b", "c"};
    item.tags = IobSequence{{0, 1 + 2 * (i % 2), 2 + 2 * (i % 2)}};
    item.intent = i % 2;
    items.push_back(item);
  }
  return items;
}

std::vector<double> flat_params(const ParameterStore& store) {
  std::vector<double> out;
  for (const Tensor& t : store.tensors()) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace

TEST_CASE("nlu training reduces loss and counts predictions") {
  Rng init(1);
  NluModel model(kDims, kSizes, init);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 2;
  cfg.adam.lr = 0.01;
  cfg.seed = 3;
  std::size_t callbacks = 0;
  const auto stats = train_nlu(model, nlu_items(), cfg, [&](const EpochStats&) { ++callbacks; });
  REQUIRE(stats.size() == 30);
  CHECK(callbacks == 30);
  CHECK(stats[0].epoch == 1);
  CHECK(stats[0].predictions == 6 * (3 + 1));
  CHECK(stats.back().mean_loss() < 0.5 * stats.front().mean_loss());
}

TEST_CASE("training is deterministic under a seed") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.teacher_forcing = 0.5;
  cfg.seed = 9;
  Rng init_a(1);
  NluModel a(kDims, kSizes, init_a);
  Rng init_b(1);
  NluModel b(kDims, kSizes, init_b);
  const auto sa = train_nlu(a, nlu_items(), cfg);
  const auto sb = train_nlu(b, nlu_items(), cfg);
  CHECK(sa.back().total_loss == sb.back().total_loss);
  CHECK(flat_params(a.params()) == flat_params(b.params()));
  cfg.seed = 10;
  Rng init_c(1);
  NluModel c(kDims, kSizes, init_c);
  train_nlu(c, nlu_items(), cfg);
  CHECK(flat_params(c.params()) != flat_params(a.params()));
}

TEST_CASE("full teacher forcing makes the loss independent of sampling") {
  Rng init(1);
  const NluModel model(kDims, kSizes, init);
  const NluTrainItem item = nlu_items()[1];
  Rng r1(1);
  Rng r2(12345);
  CHECK(model.loss(item.words, item.tags, item.intent, 1.0, r1).item() ==
        model.loss(item.words, item.tags, item.intent, 1.0, r2).item());
}

TEST_CASE("nlg, lm and masked-frame training run and improve") {
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 2;
  cfg.adam.lr = 0.01;
  cfg.seed = 4;

  std::vector<NlgTrainItem> nlg;
  std::vector<std::vector<TokenId>> lm;
  std::vector<FrameInput> frames;
  for (int i = 0; i < 4; ++i) {
    FrameInput f;
    f.features.push_back({FrameFeature::Kind::kIntent, i % 2, {}});
    f.features.push_back({FrameFeature::Kind::kSlot, i % 2, {4 + i}});
    nlg.push_back({f, {4 + i, 8, 9}});
    lm.push_back({4 + i, 8, 9});
    frames.push_back(f);
  }
  Rng init(2);
  NlgModel g(kDims, kSizes, init);
  const auto gs = train_nlg(g, nlg, cfg);
  CHECK(gs[0].predictions == 4 * 4);
  CHECK(gs.back().mean_loss() < 0.5 * gs.front().mean_loss());

  LmModel l(kDims, kSizes, init);
  const auto ls = train_lm(l, lm, cfg);
  CHECK(ls[0].predictions == 4 * 4);
  CHECK(ls.back().mean_loss() < ls.front().mean_loss());

  // Masking is random, so compare the deterministic all-positions fit.
  MaskedFrameModel m(kDims, kSizes, init);
  const auto fit = [&] {
    double total = 0.0;
    for (const FrameInput& f : frames) {
      for (std::size_t pos = 0; pos < f.features.size(); ++pos) total += m.masked_logprob(f, pos);
    }
    return total;
  };
  const double before = fit();
  const auto ms = train_mfm(m, frames, cfg);
  CHECK(ms[0].predictions == 4);
  CHECK(fit() > before);
}

TEST_CASE("empty datasets are rejected") {
  Rng init(1);
  NluModel model(kDims, kSizes, init);
  CHECK_THROWS_AS(train_nlu(model, std::vector<NluTrainItem>{}, TrainConfig{}), DataError);
}
