#include <filesystem>
#include <numeric>
#include <vector>

#include <benchmark/benchmark.h>

#include "efuf/extraction.hpp"
#include "efuf/model.hpp"
#include "efuf/relevance.hpp"
#include "efuf/synthetic.hpp"

namespace {

void BM_ScoreObjectStub(benchmark::State& state) {
  const efuf::StubEmbeddingBackend backend(1, 256);
  efuf::WindowConfig wc;
  wc.grid_rows = wc.grid_cols = static_cast<int>(state.range(0));
  const efuf::ImageRef image{"bench", {}};
  for (auto _ : state) benchmark::DoNotOptimize(efuf::score_object(backend, image, "dog", wc));
  state.counters["windows"] = static_cast<double>(efuf::count_windows(wc));
}
BENCHMARK(BM_ScoreObjectStub)->Arg(3)->Arg(4)->Arg(6);

void BM_ScoreObjectScene(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / "efuf_bench_scene";
  std::filesystem::create_directories(dir);
  efuf::write_scene(dir / "s.json", efuf::Scene{"s", 3, 3, {"dog", "", "cat", "", "", "", "cup", "", ""}});
  const efuf::SceneEmbeddingBackend backend(efuf::Lexicon::coco(), 0);
  const efuf::ImageRef image{"s", dir / "s.json"};
  const efuf::WindowConfig wc;
  for (auto _ : state) benchmark::DoNotOptimize(efuf::score_object(backend, image, "dog", wc));
}
BENCHMARK(BM_ScoreObjectScene);

efuf::ModelConfig bench_model(int embed) {
  efuf::ModelConfig c;
  c.vocab_size = 120;
  c.embed_dim = embed;
  return c;
}

void BM_ModelForward(benchmark::State& state) {
  const efuf::ToyMLLM model(bench_model(static_cast<int>(state.range(0))), 3);
  const std::vector<double> image(16, 0.5);
  std::vector<int> ids(24);
  std::iota(ids.begin(), ids.end(), 5);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image, ids));
}
BENCHMARK(BM_ModelForward)->Arg(16)->Arg(32)->Arg(64);

void BM_ModelBackward(benchmark::State& state) {
  const efuf::ToyMLLM model(bench_model(static_cast<int>(state.range(0))), 3);
  auto grad = model.parameters().zeros_like();
  const std::vector<double> image(16, 0.5);
  std::vector<int> context(12), target(12);
  std::iota(context.begin(), context.end(), 5);
  std::iota(target.begin(), target.end(), 40);
  for (auto _ : state) {
    grad.set_zero();
    benchmark::DoNotOptimize(model.accumulate_gradient(image, context, target, 1.0, grad));
  }
}
BENCHMARK(BM_ModelBackward)->Arg(16)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
