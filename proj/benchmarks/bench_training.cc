#include <benchmark/benchmark.h>

#include "isofed/data.h"
#include "isofed/training.h"

using namespace isofed;

namespace {

// 28x28 single-channel images with random pixels; content does not matter
// for timing.
Dataset noise(std::size_t n) {
  Dataset d;
  d.num_classes = 8;
  d.height = d.width = 28;
  d.channels = 1;
  CounterRng rng(7);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint16_t>(i % 8));
  d.pixels.resize(n * 28 * 28);
  for (auto& p : d.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return d;
}

struct Setup {
  Dataset data = noise(64);
  NormStats stats = compute_norm_stats(data);
  ClientShard labeled{0, ClientRole::kLabeled, {}};
  ClientShard unlabeled{1, ClientRole::kUnlabeled, {}};
  ModelParams init;
  TrainerConfig cfg;
  Setup() {
    for (std::size_t i = 0; i < data.size(); ++i) {
      labeled.indices.push_back(i);
      unlabeled.indices.push_back(i);
    }
    ModelConfig mc;
    mc.num_classes = 8;
    init = CnnClassifier::init(1, mc).extract_params();
    cfg.batch_size = 64;
  }
};

// One epoch over 64 samples is exactly one optimizer step.
void BM_LabeledStep(benchmark::State& state) {
  Setup s;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_labeled_client(s.init, ClientData{s.data, s.labeled, s.stats}, s.cfg, CounterRng(1)));
}
BENCHMARK(BM_LabeledStep)->Unit(benchmark::kMillisecond);

void BM_MeanTeacherStep(benchmark::State& state) {
  Setup s;
  TeacherStudent ts;
  for (auto _ : state)
    benchmark::DoNotOptimize(train_unlabeled_client(
        s.init, ts, ClientData{s.data, s.unlabeled, s.stats}, s.cfg, CounterRng(1)));
}
BENCHMARK(BM_MeanTeacherStep)->Unit(benchmark::kMillisecond);

void BM_ImPretrainStep(benchmark::State& state) {
  Setup s;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        im_pretrain(s.init, ClientData{s.data, s.unlabeled, s.stats}, s.cfg, CounterRng(1)));
}
BENCHMARK(BM_ImPretrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
