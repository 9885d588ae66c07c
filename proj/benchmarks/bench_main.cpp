#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dualinf/decode.hpp"
#include "dualinf/layers.hpp"
#include "dualinf/metrics.hpp"
#include "dualinf/models.hpp"

using namespace dualinf;

namespace {

const InventorySizes kSizes{400, 300, 6, 4};

// One recurrent step at the default hidden size, with and without a tape.
void BM_GruStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const bool record = state.range(1) != 0;
  Rng rng(1);
  ParameterStore store;
  const GruCell cell(store, "gru", 50, hidden, rng);
  const Tensor x = Tensor::vector(std::vector<double>(50, 0.1));
  Tensor h = cell.zero_state();
  for (auto _ : state) {
    if (record) {
      benchmark::DoNotOptimize(cell.step(x, h));
    } else {
      NoGradGuard guard;
      benchmark::DoNotOptimize(cell.step(x, h));
    }
  }
}
BENCHMARK(BM_GruStep)->Args({64, 0})->Args({200, 0})->Args({200, 1});

// Language-model beam search over a 300-subword vocabulary.
void BM_BeamSearch(benchmark::State& state) {
  Rng rng(2);
  const LmModel lm(ModelDims{32, 64}, kSizes, rng);
  const LmStepper stepper(lm);
  const BeamConfig config{static_cast<std::size_t>(state.range(0)), 20, Specials::kEos};
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(stepper, config));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

// Corpus BLEU over synthetic sentence pairs.
void BM_CorpusBleu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<Words> hyps(n);
  std::vector<std::vector<Words>> refs(n, std::vector<Words>(2));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < 15; ++t) {
      hyps[i].push_back("w" + std::to_string(rng.below(50)));
      refs[i][0].push_back("w" + std::to_string(rng.below(50)));
      refs[i][1].push_back("w" + std::to_string(rng.below(50)));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(hyps, refs));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_CorpusBleu)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
