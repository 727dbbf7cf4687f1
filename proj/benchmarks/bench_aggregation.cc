#include <benchmark/benchmark.h>

#include "isofed/aggregation.h"
#include "isofed/model.h"

using namespace isofed;

namespace {

std::vector<ClientModel> clients(std::size_t k) {
  ModelConfig mc;
  mc.num_classes = 8;
  std::vector<ClientModel> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({CnnClassifier::init(i, mc).extract_params(), 500 + 100 * i});
  return out;
}

void BM_DynamicWeighted(benchmark::State& state) {
  const auto models = clients(static_cast<std::size_t>(state.range(0)));
  AggregationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dynamic_weighted_agg(models, cfg));
}
BENCHMARK(BM_DynamicWeighted)->Arg(1)->Arg(3)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_FedAvg(benchmark::State& state) {
  const auto models = clients(4);
  for (auto _ : state) benchmark::DoNotOptimize(fedavg(models));
}
BENCHMARK(BM_FedAvg)->Unit(benchmark::kMicrosecond);

}  // namespace
