#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcpipe/format.hpp"
#include "pcpipe/transforms.hpp"

namespace pcpipe {

// ---------------------------------------------------------------------------
// Graph description

struct OpNode {
  enum class Kind { kSource, kMap, kBatch, kSink };

  std::uint32_t id = 0;
  Kind kind = Kind::kMap;
  // map nodes; more than one entry after fusion, applied in order
  std::vector<std::pair<MapKind, json>> transforms;
  std::vector<std::uint32_t> seed_op_ids;  // original op ids, drives seeding
  std::uint32_t num_workers = 1;
  std::uint32_t out_queue_capacity = 8;
  std::uint32_t batch_size = 1;  // batch nodes
};

struct PipelineGraph {
  std::vector<OpNode> nodes;
  std::uint64_t base_seed = 0;
  bool drop_remainder = true;

  void validate() const;  // throws on malformed graphs
  json to_json() const;
  static PipelineGraph from_json(const json& j);
  const OpNode* find(std::uint32_t op_id) const;
  std::vector<std::uint32_t> map_op_ids() const;
};

// Merges adjacent map nodes; per-sample seeds keyed by the original op ids,
// so fused and unfused runs produce identical samples.
PipelineGraph fuse_maps(const PipelineGraph& graph);

struct Batch {
  std::uint64_t epoch = 0;
  std::uint64_t batch_index = 0;
  std::vector<Sample> samples;

  bool operator==(const Batch&) const = default;
  // Per-field concatenation with leading dimension batch size; requires
  // uniform per-field byte lengths.
  std::map<std::string, Value> stacked() const;
};

// ---------------------------------------------------------------------------
// Connector: the bounded-queue junction between operators (one internal
// queue per producer worker, round-robin polling on the consumer side).

enum class ItemControl { kData, kEnd, kStop };

struct Item {
  std::uint64_t epoch = 0;
  std::uint64_t index = 0;  // position within the epoch
  Sample sample;
  ItemControl control = ItemControl::kData;
};

class Connector {
 public:
  Connector(std::size_t producer_size, std::size_t consumer_size,
            std::size_t capacity);

  // producer worker_id enqueues to its own queue; blocks while full
  void push(std::size_t worker_id, Item item);
  // single polling consumer: pops queues[pop_from] and advances the counter
  Item pop();
  // timed variant; nullopt when nothing arrived within the window
  std::optional<Item> pop_for(std::chrono::milliseconds wait);
  // stages a popped item for consumer expect_consumer; a full wave is
  // released to the per-consumer local queues when the counter wraps
  void dispatch(Item item);
  void flush_partial();                // release an incomplete wave
  void send_local_all(const Item& it); // e.g. end-of-stream markers
  Item pop_local(std::size_t consumer_id);

  void shutdown();
  // reconfiguration; both require the affected side to be empty
  void resize_producers(std::size_t producer_size, std::size_t capacity);
  void resize_consumers(std::size_t consumer_size);

  std::size_t producer_size() const;
  std::size_t consumer_size() const;
  std::size_t capacity() const;
  std::size_t pop_from() const;
  std::size_t expect_consumer() const;
  std::size_t staged_count() const;
  std::size_t total_queued() const;  // producer queues + staged + local

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<Item>> queues_;
  std::vector<std::deque<Item>> local_queues_;
  std::vector<Item> staged_;
  std::size_t pop_from_ = 0;
  std::size_t expect_consumer_ = 0;
  std::size_t capacity_;
  bool shutdown_ = false;
};

// ---------------------------------------------------------------------------
// Pipeline execution

using SourceFn = std::function<Sample(std::uint64_t epoch, std::uint64_t index)>;

struct PipelineOptions {
  std::optional<std::size_t> sink_capacity;  // overrides the sink node config
  std::uint64_t epochs = 1;
  bool loop_forever = false;
  std::uint32_t max_workers = 64;
};

struct OpMetrics {
  std::uint32_t op_id = 0;
  std::string kind;
  std::uint32_t num_workers = 0;
  std::uint64_t items = 0;
  double busy_seconds = 0;
  std::size_t out_queue_size = 0;
  std::size_t out_queue_capacity = 0;
};

struct MetricsSnapshot {
  double uptime_seconds = 0;
  std::vector<OpMetrics> ops;
  std::uint64_t sink_polls = 0;
  std::uint64_t sink_empty_polls = 0;
  std::size_t sink_size = 0;
  std::size_t sink_capacity = 0;
  std::uint64_t batches_emitted = 0;
  std::uint64_t items_emitted = 0;
};

struct RunStats {
  std::vector<double> items_per_sec;  // one entry per batch
  std::vector<OpMetrics> ops;
  double wall_seconds = 0;
};

class Pipeline {
 public:
  Pipeline(PipelineGraph graph, SourceFn source, std::uint64_t samples_per_epoch,
           PipelineOptions opts = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void start();
  // Blocking; nullopt once the final epoch drained. Rethrows worker failures.
  std::optional<Batch> next_batch();
  // Applied at the next item boundary of that operator; blocks until applied.
  void update_op_config(std::uint32_t op_id,
                        std::optional<std::uint32_t> num_workers,
                        std::optional<std::uint32_t> queue_capacity);
  MetricsSnapshot metrics() const;
  std::vector<double> batch_throughput() const;
  std::size_t total_queued() const;
  bool running() const;
  void stop();
  const PipelineGraph& graph() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::pair<std::vector<Batch>, RunStats> run_pipeline(
    const PipelineGraph& graph, SourceFn source, std::uint64_t samples_per_epoch,
    std::optional<std::size_t> sink_capacity = {});

}  // namespace pcpipe
