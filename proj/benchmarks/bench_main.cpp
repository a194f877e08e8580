#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "compass/clustering.hpp"
#include "compass/embedding.hpp"
#include "compass/trace_model.hpp"
#include "support/trace_gen.hpp"

using namespace compass;

namespace {

std::vector<embedding::Vector> blobs(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<embedding::Vector> pts;
  for (std::size_t i = 0; i < n; ++i) {
    embedding::Vector v;
    for (std::size_t d = 0; d < dim; ++d) v.values.push_back(noise(rng) + (d == i % dim ? 20.0 : 0.0));
    pts.push_back(std::move(v));
  }
  return pts;
}

void BM_Hdbscan(benchmark::State& state) {
  const auto pts = blobs(static_cast<std::size_t>(state.range(0)), 8);
  clustering::ClusterParams params;
  params.min_cluster_size = 5;
  for (auto _ : state) benchmark::DoNotOptimize(clustering::hdbscan(pts, params));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hdbscan)->RangeMultiplier(2)->Range(64, 512)->Complexity();

// A wide, shallow trace with long attribute values so truncation runs.
std::vector<trace::SpanRecord> wide_trace(int n) {
  std::vector<trace::SpanRecord> spans{testing::make_span("root", std::nullopt, 0)};
  for (int i = 0; i < n; ++i) {
    auto s = testing::make_span("s" + std::to_string(i), i % 4 == 0 ? std::optional<std::string>("root")
                                                                   : "s" + std::to_string(i - i % 4),
                                i);
    s.attributes.push_back({"output.value", std::string(5000, 'x')});
    spans.push_back(std::move(s));
  }
  return spans;
}

void BM_SerializeOutline(benchmark::State& state) {
  const auto tree = trace::build_trace_tree(wide_trace(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(trace::serialize_outline(tree, 2000));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SerializeOutline)->Arg(100)->Arg(1000);

void BM_HashEmbed(benchmark::State& state) {
  embedding::HashEmbedder embedder(static_cast<std::size_t>(state.range(0)));
  const std::string text =
      "Tool & System Failures/Tool Execution/Rate Limit | search api rejected the request | 429 too many requests";
  for (auto _ : state) benchmark::DoNotOptimize(embedder.embed(text));
}
BENCHMARK(BM_HashEmbed)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
