#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcpipe/pipeline.hpp"

namespace pcpipe {

struct BenchReport {
  double cost_time_s = 0;       // mean wall time per run, warm-up excluded
  double avg_cpu_percent = 0;   // may exceed 100 on multi-worker runs
  double avg_mem_percent = 0;   // of total system memory
  std::uint64_t peak_rss_bytes = 0;
  std::vector<double> batch_items_per_sec;  // last run, one entry per batch
  std::vector<double> run_times_s;          // one entry per repeat
  std::optional<double> deviation;          // stddev/mean; null for one run
  std::uint64_t batches = 0;
  std::uint64_t items = 0;

  json to_json() const;
  std::string to_csv() const;  // fixed columns, one row per run
};

// Runs the graph `repeats` times, timing each full pass minus one warm-up
// batch, while a background sampler records CPU and memory usage.
BenchReport run_benchmark(const PipelineGraph& graph, const SourceFn& source,
                          std::uint64_t samples_per_epoch, std::uint32_t repeats,
                          std::uint32_t sample_interval_ms = 10);

}  // namespace pcpipe
