#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pcpipe/lz4_block.hpp"

namespace {

std::vector<std::uint8_t> make_input(std::size_t size, bool compressible) {
  std::mt19937_64 rng(7);
  std::vector<std::uint8_t> data(size);
  if (compressible) {
    // runs of repeating 16-byte motifs with occasional noise
    std::size_t i = 0;
    while (i < size) {
      const std::uint8_t motif = static_cast<std::uint8_t>(rng());
      const std::size_t run = 16 + rng() % 240;
      for (std::size_t j = 0; j < run && i < size; ++j, ++i)
        data[i] = (j % 16 == 15) ? static_cast<std::uint8_t>(rng()) : motif;
    }
  } else {
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  }
  return data;
}

void BM_Lz4Compress(benchmark::State& state) {
  const auto input = make_input(static_cast<std::size_t>(state.range(0)),
                                state.range(1) != 0);
  std::vector<std::uint8_t> dst(pcpipe::lz4::max_compressed_size(input.size()));
  for (auto _ : state) {
    auto n = pcpipe::lz4::compress(input.data(), input.size(), dst.data(),
                                   dst.size());
    benchmark::DoNotOptimize(n);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(input.size()));
}

void BM_Lz4Decompress(benchmark::State& state) {
  const auto input = make_input(static_cast<std::size_t>(state.range(0)),
                                state.range(1) != 0);
  std::vector<std::uint8_t> dst(pcpipe::lz4::max_compressed_size(input.size()));
  const auto n =
      pcpipe::lz4::compress(input.data(), input.size(), dst.data(), dst.size());
  std::vector<std::uint8_t> out(input.size());
  for (auto _ : state) {
    pcpipe::lz4::decompress(dst.data(), n, out.data(), out.size());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(input.size()));
}

}  // namespace

BENCHMARK(BM_Lz4Compress)->Args({1 << 16, 1})->Args({1 << 20, 1})->Args({1 << 16, 0});
BENCHMARK(BM_Lz4Decompress)->Args({1 << 16, 1})->Args({1 << 20, 1})->Args({1 << 16, 0});
