#include <benchmark/benchmark.h>

#include <cstring>
#include <random>
#include <vector>

#include "pcpipe/format.hpp"

namespace {

// coordinate column resembling a real cloud: a smooth walk, so consecutive
// float bit patterns share high bits and the delta stage pays off
pcpipe::Blob smooth_coords(std::size_t points) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> step(-0.01f, 0.01f);
  std::vector<float> v(points * 3);
  float x = 0, y = 0, z = 0;
  for (std::size_t i = 0; i < points; ++i) {
    x += step(rng);
    y += step(rng);
    z += step(rng);
    v[3 * i] = x;
    v[3 * i + 1] = y;
    v[3 * i + 2] = z;
  }
  pcpipe::Blob b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

void BM_XorDeltaEncode(benchmark::State& state) {
  const auto raw = smooth_coords(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto enc = pcpipe::xor_delta_encode(raw, 4);
    benchmark::DoNotOptimize(enc.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(raw.size()));
}

void BM_BlockPageEncode(benchmark::State& state) {
  const auto raw = smooth_coords(static_cast<std::size_t>(state.range(0)));
  const pcpipe::ColumnRange col{0, raw.size(), 4};
  for (auto _ : state) {
    auto page = pcpipe::encode_block_page(raw, {{col}});
    benchmark::DoNotOptimize(page.payload.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(raw.size()));
}

void BM_BlockPageDecode(benchmark::State& state) {
  const auto raw = smooth_coords(static_cast<std::size_t>(state.range(0)));
  const pcpipe::ColumnRange col{0, raw.size(), 4};
  const auto page = pcpipe::encode_block_page(raw, {{col}});
  for (auto _ : state) {
    auto back = pcpipe::decode_block_page(page, {{col}});
    benchmark::DoNotOptimize(back.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(raw.size()));
}

}  // namespace

BENCHMARK(BM_XorDeltaEncode)->Arg(1024)->Arg(65536);
BENCHMARK(BM_BlockPageEncode)->Arg(1024)->Arg(65536);
BENCHMARK(BM_BlockPageDecode)->Arg(1024)->Arg(65536);
