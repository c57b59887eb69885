#include <benchmark/benchmark.h>

#include <cstring>
#include <random>
#include <vector>

#include "pcpipe/pipeline.hpp"

namespace {

pcpipe::Sample make_sample(std::uint64_t, std::uint64_t index) {
  std::mt19937_64 rng(index);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  std::vector<float> v(256 * 3);
  for (auto& x : v) x = d(rng);
  pcpipe::Blob b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  pcpipe::Sample s;
  s.values["data"] = std::move(b);
  return s;
}

pcpipe::PipelineGraph make_graph(std::uint32_t workers) {
  pcpipe::PipelineGraph g;
  pcpipe::OpNode source;
  source.id = 0;
  source.kind = pcpipe::OpNode::Kind::kSource;
  pcpipe::OpNode map;
  map.id = 1;
  map.kind = pcpipe::OpNode::Kind::kMap;
  map.transforms = {{pcpipe::MapKind::kJitter, pcpipe::json::object()}};
  map.seed_op_ids = {1};
  map.num_workers = workers;
  pcpipe::OpNode batch;
  batch.id = 2;
  batch.kind = pcpipe::OpNode::Kind::kBatch;
  batch.batch_size = 16;
  pcpipe::OpNode sink;
  sink.id = 3;
  sink.kind = pcpipe::OpNode::Kind::kSink;
  g.nodes = {source, map, batch, sink};
  return g;
}

void BM_PipelineThroughput(benchmark::State& state) {
  const auto workers = static_cast<std::uint32_t>(state.range(0));
  const std::uint64_t samples = 512;
  std::uint64_t items = 0;
  for (auto _ : state) {
    auto [batches, stats] =
        pcpipe::run_pipeline(make_graph(workers), make_sample, samples);
    items += batches.size() * 16;
    benchmark::DoNotOptimize(batches.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(items));
}

}  // namespace

BENCHMARK(BM_PipelineThroughput)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
