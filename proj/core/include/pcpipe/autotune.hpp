#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "pcpipe/pipeline.hpp"

namespace pcpipe {

// ---------------------------------------------------------------------------
// Monitoring

struct MetricsSample {
  double timestamp_s = 0;  // monotone, relative to collection start
  struct OpStat {
    std::uint32_t op_id = 0;
    double delay_ms = 0;           // average processing delay per item
    double queue_utilization = 0;  // occupancy / capacity, in [0, 1]
  };
  std::vector<OpStat> ops;
  double cpu_percent = 0;  // process CPU, may exceed 100 on multi-core
  std::uint64_t rss_bytes = 0;
  // cumulative sink poll counters plus the ratio over this interval
  std::uint64_t sink_polls = 0;
  std::uint64_t sink_empty_polls = 0;
  double sink_empty_ratio = 0;
};

// Blocks for count samples at the given cadence. Throws PipelineStopped when
// the pipeline is not running.
std::vector<MetricsSample> collect_metrics(Pipeline& pipeline,
                                           std::uint32_t interval_ms,
                                           std::size_t count);

enum class Bottleneck { kDataSide, kNetworkSide };

// data_side iff the sink empty-ratio over the whole window exceeds the
// threshold; needs >= 30 samples (InsufficientSamples otherwise). Pure.
Bottleneck detect_bottleneck(const std::vector<MetricsSample>& window,
                             double threshold = 0.3);

// ---------------------------------------------------------------------------
// Search space

struct SearchSpace {
  std::vector<std::uint32_t> op_ids;  // tunable (map) operators
  std::uint32_t max_workers = 8;
  std::vector<std::uint32_t> queue_capacities = {1, 2, 4, 8, 16, 32, 64};
  std::vector<std::pair<std::uint32_t, std::uint32_t>> fusable_pairs;
  // configs whose sum of workers*capacity exceeds this are never proposed
  std::uint64_t max_total_queue_items = UINT64_MAX;

  void validate() const;
  std::size_t dimensions() const;
  // number of distinct assignments (saturating)
  std::uint64_t cardinality() const;
};

struct TuneConfig {
  // op_id -> (workers, queue capacity)
  std::map<std::uint32_t, std::pair<std::uint32_t, std::uint32_t>> ops;
  std::vector<bool> fuse;  // parallel to SearchSpace::fusable_pairs
  double objective = 0;    // mean items/sec over the evaluation window

  bool same_assignment(const TuneConfig& o) const {
    return ops == o.ops && fuse == o.fuse;
  }
};

struct SurrogateState {
  std::vector<TuneConfig> observed;  // assignments distinct
  double length_scale = 0.35;        // on min-max-normalized dimensions
  double signal_variance = 1.0;
  double noise = 1e-3;

  double best_objective() const;
};

enum class TunePhase { kSeed, kRefine };

// Seed phase: uniform random unobserved point. Refine phase: argmax expected
// improvement under a Gaussian-process surrogate (isotropic squared-
// exponential kernel) over 512 random candidates. SpaceExhausted when every
// assignment has been observed.
TuneConfig propose_config(const SurrogateState& state, const SearchSpace& space,
                          TunePhase phase, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Live application

// Mean items/sec after a one-window warm-up.
double measure_throughput(Pipeline& pipeline, std::chrono::milliseconds window);

// Applies workers/queue per op sequentially via update_op_config, then
// measures. Fuse toggles are ignored on a live pipeline (fusion is a graph
// construction choice).
double apply_and_measure(Pipeline& pipeline, const TuneConfig& config,
                         std::chrono::milliseconds eval_window);

void persist_best(const TuneConfig& config, const std::filesystem::path& path);
// expected_ops guards against configs written for a different graph
// (SchemaMismatch). IoFailure when unreadable.
TuneConfig load_best(const std::filesystem::path& path,
                     const std::vector<std::uint32_t>& expected_ops);

// ---------------------------------------------------------------------------
// Search loop (Algorithm 3 shape: random seeding, then surrogate refinement)

struct TuneOptions {
  std::uint32_t iterations = 10;
  std::uint32_t seed_phase = 5;  // observations before switching to the GP
  std::chrono::milliseconds eval_window{300};
  std::uint64_t seed = 0;
};

struct TuneResult {
  TuneConfig best;
  std::vector<TuneConfig> history;  // in evaluation order
};

// Evaluates candidates on the live pipeline and leaves the best one applied.
TuneResult autotune(Pipeline& pipeline, const SearchSpace& space,
                    const TuneOptions& opts);

}  // namespace pcpipe
