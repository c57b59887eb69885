#include "pcpipe/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <future>
#include <thread>

#include "pcpipe/bounded_queue.hpp"

namespace pcpipe {

using Clock = std::chrono::steady_clock;
using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// Graph

namespace {

const char* op_kind_name(OpNode::Kind k) {
  switch (k) {
    case OpNode::Kind::kSource: return "source";
    case OpNode::Kind::kMap: return "map";
    case OpNode::Kind::kBatch: return "batch";
    case OpNode::Kind::kSink: return "sink";
  }
  return "?";
}

OpNode::Kind op_kind_from_name(const std::string& n) {
  if (n == "source") return OpNode::Kind::kSource;
  if (n == "map") return OpNode::Kind::kMap;
  if (n == "batch") return OpNode::Kind::kBatch;
  if (n == "sink") return OpNode::Kind::kSink;
  fail(Errc::kUnknownOp, "op kind '" + n + "'");
}

}  // namespace

void PipelineGraph::validate() const {
  if (nodes.size() < 3) fail(Errc::kUnknownOp, "graph needs source, batch, sink");
  if (nodes.front().kind != OpNode::Kind::kSource)
    fail(Errc::kUnknownOp, "first node must be a source");
  if (nodes.back().kind != OpNode::Kind::kSink)
    fail(Errc::kUnknownOp, "last node must be a sink");
  bool batch_seen = false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    for (std::size_t k = 0; k < i; ++k)
      if (nodes[k].id == n.id) fail(Errc::kUnknownOp, "duplicate op id");
    if (n.num_workers < 1 || n.out_queue_capacity < 1)
      fail(Errc::kOutOfBounds, "workers and queue capacity must be >= 1");
    switch (n.kind) {
      case OpNode::Kind::kSource:
        if (i != 0) fail(Errc::kUnknownOp, "source must come first");
        break;
      case OpNode::Kind::kMap:
        if (batch_seen) fail(Errc::kUnknownOp, "map after batch");
        if (n.transforms.empty()) fail(Errc::kUnknownOp, "map without transform");
        if (n.seed_op_ids.size() != n.transforms.size())
          fail(Errc::kUnknownOp, "seed op ids out of step");
        break;
      case OpNode::Kind::kBatch:
        if (batch_seen) fail(Errc::kUnknownOp, "more than one batch node");
        if (n.batch_size < 1) fail(Errc::kOutOfBounds, "batch_size must be >= 1");
        batch_seen = true;
        break;
      case OpNode::Kind::kSink:
        if (i + 1 != nodes.size()) fail(Errc::kUnknownOp, "sink must come last");
        break;
    }
  }
  if (!batch_seen) fail(Errc::kUnknownOp, "graph needs a batch node");
}

const OpNode* PipelineGraph::find(std::uint32_t op_id) const {
  for (const auto& n : nodes)
    if (n.id == op_id) return &n;
  return nullptr;
}

std::vector<std::uint32_t> PipelineGraph::map_op_ids() const {
  std::vector<std::uint32_t> ids;
  for (const auto& n : nodes)
    if (n.kind == OpNode::Kind::kMap) ids.push_back(n.id);
  return ids;
}

json PipelineGraph::to_json() const {
  json ops = json::array();
  for (const auto& n : nodes) {
    json o{{"id", n.id}, {"kind", op_kind_name(n.kind)}};
    if (n.kind == OpNode::Kind::kMap) {
      if (n.transforms.size() == 1) {
        o["map"] = map_kind_name(n.transforms[0].first);
        o["params"] = n.transforms[0].second;
      } else {
        json fused = json::array();
        for (std::size_t i = 0; i < n.transforms.size(); ++i)
          fused.push_back(json{{"map", map_kind_name(n.transforms[i].first)},
                               {"params", n.transforms[i].second},
                               {"op_id", n.seed_op_ids[i]}});
        o["fused"] = fused;
      }
    }
    o["num_workers"] = n.num_workers;
    o["queue_capacity"] = n.out_queue_capacity;
    if (n.kind == OpNode::Kind::kBatch) o["batch_size"] = n.batch_size;
    ops.push_back(std::move(o));
  }
  return json{{"base_seed", base_seed},
              {"drop_remainder", drop_remainder},
              {"ops", ops}};
}

PipelineGraph PipelineGraph::from_json(const json& j) {
  PipelineGraph g;
  g.base_seed = j.value("base_seed", std::uint64_t{0});
  g.drop_remainder = j.value("drop_remainder", true);
  for (const auto& o : j.at("ops")) {
    OpNode n;
    n.id = o.at("id").get<std::uint32_t>();
    n.kind = op_kind_from_name(o.at("kind").get<std::string>());
    n.num_workers = o.value("num_workers", 1u);
    n.out_queue_capacity = o.value("queue_capacity", 8u);
    if (n.kind == OpNode::Kind::kMap) {
      if (o.contains("fused")) {
        for (const auto& f : o["fused"]) {
          n.transforms.emplace_back(
              map_kind_from_name(f.at("map").get<std::string>()),
              f.value("params", json::object()));
          n.seed_op_ids.push_back(f.at("op_id").get<std::uint32_t>());
        }
      } else {
        n.transforms.emplace_back(
            map_kind_from_name(o.at("map").get<std::string>()),
            o.value("params", json::object()));
        n.seed_op_ids.push_back(n.id);
      }
    }
    if (n.kind == OpNode::Kind::kBatch) n.batch_size = o.value("batch_size", 1u);
    g.nodes.push_back(std::move(n));
  }
  g.validate();
  return g;
}

PipelineGraph fuse_maps(const PipelineGraph& graph) {
  graph.validate();
  PipelineGraph out;
  out.base_seed = graph.base_seed;
  out.drop_remainder = graph.drop_remainder;
  for (const auto& n : graph.nodes) {
    if (n.kind == OpNode::Kind::kMap && !out.nodes.empty() &&
        out.nodes.back().kind == OpNode::Kind::kMap) {
      OpNode& prev = out.nodes.back();
      for (std::size_t i = 0; i < n.transforms.size(); ++i) {
        prev.transforms.push_back(n.transforms[i]);
        prev.seed_op_ids.push_back(n.seed_op_ids[i]);
      }
      prev.num_workers = std::max(prev.num_workers, n.num_workers);
      prev.out_queue_capacity = n.out_queue_capacity;
      continue;
    }
    out.nodes.push_back(n);
  }
  return out;
}

std::map<std::string, Value> Batch::stacked() const {
  std::map<std::string, Value> out;
  if (samples.empty()) return out;
  for (const auto& [name, v0] : samples.front().values) {
    Value acc = v0;
    std::visit(
        [&](auto& dst) {
          using T = std::decay_t<decltype(dst)>;
          if constexpr (std::is_same_v<T, std::string>) {
            fail(Errc::kSchemaMismatch, "string fields cannot be stacked");
          } else {
            const std::size_t per = dst.size();
            dst.reserve(per * samples.size());
            for (std::size_t i = 1; i < samples.size(); ++i) {
              auto it = samples[i].values.find(name);
              if (it == samples[i].values.end() ||
                  !std::holds_alternative<T>(it->second))
                fail(Errc::kSchemaMismatch,
                     "missing or mistyped field '" + name + "'");
              const auto& src = std::get<T>(it->second);
              if (src.size() != per)
                fail(Errc::kSchemaMismatch, "ragged field '" + name + "'");
              dst.insert(dst.end(), src.begin(), src.end());
            }
          }
        },
        acc);
    out[name] = std::move(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Connector

Connector::Connector(std::size_t producer_size, std::size_t consumer_size,
                     std::size_t capacity)
    : queues_(producer_size), local_queues_(consumer_size), capacity_(capacity) {
  if (producer_size == 0 || consumer_size == 0 || capacity == 0)
    fail(Errc::kOutOfBounds, "connector sizes must be positive");
}

void Connector::push(std::size_t worker_id, Item item) {
  std::unique_lock lock(mu_);
  if (worker_id >= queues_.size())
    fail(Errc::kOutOfBounds, "worker id outside connector");
  cv_.wait(lock, [&] {
    return shutdown_ || queues_[worker_id].size() < capacity_;
  });
  if (shutdown_) fail(Errc::kShutdown, "connector shut down");
  queues_[worker_id].push_back(std::move(item));
  cv_.notify_all();
}

Item Connector::pop() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return shutdown_ || !queues_[pop_from_].empty(); });
  if (shutdown_) fail(Errc::kShutdown, "connector shut down");
  Item item = std::move(queues_[pop_from_].front());
  queues_[pop_from_].pop_front();
  pop_from_ = (pop_from_ + 1) % queues_.size();
  cv_.notify_all();
  return item;
}

std::optional<Item> Connector::pop_for(std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, wait,
                    [&] { return shutdown_ || !queues_[pop_from_].empty(); }))
    return std::nullopt;
  if (shutdown_) fail(Errc::kShutdown, "connector shut down");
  Item item = std::move(queues_[pop_from_].front());
  queues_[pop_from_].pop_front();
  pop_from_ = (pop_from_ + 1) % queues_.size();
  cv_.notify_all();
  return item;
}

void Connector::dispatch(Item item) {
  std::unique_lock lock(mu_);
  staged_.push_back(std::move(item));
  expect_consumer_ = (expect_consumer_ + 1) % local_queues_.size();
  if (expect_consumer_ == 0) {
    // wave complete: release staged items to their consumers in order
    for (std::size_t j = 0; j < staged_.size(); ++j) {
      cv_.wait(lock, [&] {
        return shutdown_ || local_queues_[j].size() < capacity_;
      });
      if (shutdown_) fail(Errc::kShutdown, "connector shut down");
      local_queues_[j].push_back(std::move(staged_[j]));
    }
    staged_.clear();
    cv_.notify_all();
  }
}

void Connector::flush_partial() {
  std::unique_lock lock(mu_);
  for (std::size_t j = 0; j < staged_.size(); ++j) {
    cv_.wait(lock,
             [&] { return shutdown_ || local_queues_[j].size() < capacity_; });
    if (shutdown_) fail(Errc::kShutdown, "connector shut down");
    local_queues_[j].push_back(std::move(staged_[j]));
  }
  staged_.clear();
  expect_consumer_ = 0;
  cv_.notify_all();
}

void Connector::send_local_all(const Item& it) {
  std::unique_lock lock(mu_);
  for (std::size_t j = 0; j < local_queues_.size(); ++j) {
    cv_.wait(lock,
             [&] { return shutdown_ || local_queues_[j].size() < capacity_ + 1; });
    if (shutdown_) fail(Errc::kShutdown, "connector shut down");
    local_queues_[j].push_back(it);
  }
  cv_.notify_all();
}

Item Connector::pop_local(std::size_t consumer_id) {
  std::unique_lock lock(mu_);
  if (consumer_id >= local_queues_.size())
    fail(Errc::kOutOfBounds, "consumer id outside connector");
  cv_.wait(lock, [&] {
    return shutdown_ || (consumer_id < local_queues_.size() &&
                         !local_queues_[consumer_id].empty());
  });
  if (shutdown_) fail(Errc::kShutdown, "connector shut down");
  Item item = std::move(local_queues_[consumer_id].front());
  local_queues_[consumer_id].pop_front();
  cv_.notify_all();
  return item;
}

void Connector::shutdown() {
  std::lock_guard lock(mu_);
  shutdown_ = true;
  cv_.notify_all();
}

void Connector::resize_producers(std::size_t producer_size,
                                 std::size_t capacity) {
  std::lock_guard lock(mu_);
  for (const auto& q : queues_)
    if (!q.empty()) fail(Errc::kOutOfBounds, "resize of non-empty producer side");
  queues_.assign(producer_size, {});
  pop_from_ = 0;
  capacity_ = capacity;
  cv_.notify_all();
}

void Connector::resize_consumers(std::size_t consumer_size) {
  std::lock_guard lock(mu_);
  if (!staged_.empty()) fail(Errc::kOutOfBounds, "resize with staged items");
  for (const auto& q : local_queues_)
    if (!q.empty()) fail(Errc::kOutOfBounds, "resize of non-empty consumer side");
  local_queues_.assign(consumer_size, {});
  expect_consumer_ = 0;
  cv_.notify_all();
}

std::size_t Connector::producer_size() const {
  std::lock_guard lock(mu_);
  return queues_.size();
}
std::size_t Connector::consumer_size() const {
  std::lock_guard lock(mu_);
  return local_queues_.size();
}
std::size_t Connector::capacity() const {
  std::lock_guard lock(mu_);
  return capacity_;
}
std::size_t Connector::pop_from() const {
  std::lock_guard lock(mu_);
  return pop_from_;
}
std::size_t Connector::expect_consumer() const {
  std::lock_guard lock(mu_);
  return expect_consumer_;
}
std::size_t Connector::staged_count() const {
  std::lock_guard lock(mu_);
  return staged_.size();
}
std::size_t Connector::total_queued() const {
  std::lock_guard lock(mu_);
  std::size_t n = staged_.size();
  for (const auto& q : queues_) n += q.size();
  for (const auto& q : local_queues_) n += q.size();
  return n;
}

// ---------------------------------------------------------------------------
// Pipeline implementation

struct PendingConfig {
  std::optional<std::uint32_t> num_workers;
  std::optional<std::uint32_t> queue_capacity;
  std::promise<void> done;
};

struct Pipeline::Impl {
  PipelineGraph graph;
  SourceFn source;
  std::uint64_t samples_per_epoch;
  PipelineOptions opts;

  struct Node {
    OpNode cfg;
    Connector* in = nullptr;   // upstream connector
    Connector* out = nullptr;  // downstream connector (null for batch)
    std::vector<std::thread> workers;
    std::thread scheduler;
    std::atomic<std::uint64_t> items{0};
    std::atomic<std::uint64_t> busy_ns{0};
    std::atomic<std::uint64_t> dispatched{0};
    std::atomic<std::uint64_t> completed{0};
    std::atomic<bool> finished{false};
    std::mutex pending_mu;
    std::unique_ptr<PendingConfig> pending;
  };

  std::vector<std::unique_ptr<Connector>> connectors;
  std::vector<std::unique_ptr<Node>> nodes;  // source + maps + batch
  std::unique_ptr<BoundedQueue<Batch>> sink;

  std::atomic<bool> started{false};
  std::atomic<bool> stopping{false};
  Clock::time_point start_time;

  std::mutex fail_mu;
  std::string failure;
  std::uint32_t failed_op = 0;
  bool has_failure = false;

  std::mutex stats_mu;
  std::vector<double> throughput;
  Clock::time_point last_emit;
  std::atomic<std::uint64_t> batches{0};
  std::atomic<std::uint64_t> items_out{0};
  std::mutex config_mu;  // serializes update_op_config calls

  void record_failure(std::uint32_t op, const std::string& what) {
    {
      std::lock_guard lock(fail_mu);
      if (!has_failure) {
        has_failure = true;
        failed_op = op;
        failure = what;
      }
    }
    abort_all();
  }

  void abort_all() {
    for (auto& c : connectors) c->shutdown();
    if (sink) sink->shutdown();
  }

  template <typename Fn>
  void guarded(std::uint32_t op, Fn&& fn) {
    try {
      fn();
    } catch (const PcError& e) {
      if (e.code() != Errc::kShutdown) record_failure(op, e.what());
    } catch (const std::exception& e) {
      record_failure(op, e.what());
    }
  }

  void source_worker(Node& n, std::uint32_t w) {
    guarded(n.cfg.id, [&] {
      const std::uint64_t stride = n.cfg.num_workers;
      for (std::uint64_t seq = w;; seq += stride) {
        if (stopping.load()) return;
        const std::uint64_t epoch = seq / samples_per_epoch;
        const std::uint64_t idx = seq % samples_per_epoch;
        if (!opts.loop_forever && epoch >= opts.epochs) break;
        const auto t0 = Clock::now();
        Sample s = source(epoch, idx);
        n.busy_ns.fetch_add(
            std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0)
                .count());
        n.out->push(w, Item{epoch, idx, std::move(s), ItemControl::kData});
        n.items.fetch_add(1);
      }
      Item end;
      end.control = ItemControl::kEnd;
      n.out->push(w, end);
    });
  }

  void map_worker(Node& n, std::uint32_t w) {
    guarded(n.cfg.id, [&] {
      while (true) {
        Item it = n.in->pop_local(w);
        if (it.control == ItemControl::kStop) return;
        if (it.control == ItemControl::kEnd) {
          n.out->push(w, it);
          return;
        }
        const auto t0 = Clock::now();
        for (std::size_t t = 0; t < n.cfg.transforms.size(); ++t) {
          const auto seed = mix_seed(graph.base_seed, it.epoch, it.index,
                                     n.cfg.seed_op_ids[t]);
          it.sample = apply_map(n.cfg.transforms[t].first,
                                n.cfg.transforms[t].second,
                                std::move(it.sample), seed);
        }
        n.busy_ns.fetch_add(
            std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0)
                .count());
        n.items.fetch_add(1);
        n.out->push(w, std::move(it));
        n.completed.fetch_add(1);
      }
    });
  }

  void apply_pending(Node& n) {
    std::unique_ptr<PendingConfig> cfg;
    {
      std::lock_guard lock(n.pending_mu);
      cfg = std::move(n.pending);
    }
    if (!cfg) return;
    try {
      // quiesce: release the partial wave, let the workers drain, and wait
      // for downstream to consume everything this node produced
      n.in->flush_partial();
      while (n.completed.load() != n.dispatched.load()) {
        if (stopping.load()) fail(Errc::kShutdown, "stopping");
        std::this_thread::sleep_for(200us);
      }
      while (n.out->total_queued() != 0) {
        if (stopping.load()) fail(Errc::kShutdown, "stopping");
        std::this_thread::sleep_for(200us);
      }
      Item stop;
      stop.control = ItemControl::kStop;
      n.in->send_local_all(stop);
      for (auto& t : n.workers) t.join();
      n.workers.clear();

      if (cfg->num_workers) n.cfg.num_workers = *cfg->num_workers;
      if (cfg->queue_capacity) n.cfg.out_queue_capacity = *cfg->queue_capacity;
      n.in->resize_consumers(n.cfg.num_workers);
      n.out->resize_producers(n.cfg.num_workers, n.cfg.out_queue_capacity);
      n.dispatched = 0;
      n.completed = 0;
      for (std::uint32_t w = 0; w < n.cfg.num_workers; ++w)
        n.workers.emplace_back([this, &n, w] { map_worker(n, w); });
      cfg->done.set_value();
    } catch (...) {
      cfg->done.set_exception(std::current_exception());
    }
  }

  void map_scheduler(Node& n) {
    guarded(n.cfg.id, [&] {
      while (true) {
        {
          std::unique_lock lock(n.pending_mu);
          const bool pending = n.pending != nullptr;
          lock.unlock();
          if (pending) apply_pending(n);
        }
        auto it = n.in->pop_for(1ms);
        if (!it) continue;
        if (it->control == ItemControl::kEnd) {
          // one end marker per upstream worker; round-robin polling may hand
          // us remaining data from the other queues first, so keep dispatching
          std::size_t ends = 1;
          while (ends < n.in->producer_size()) {
            Item rest = n.in->pop();
            if (rest.control == ItemControl::kEnd) {
              ++ends;
              continue;
            }
            n.dispatched.fetch_add(1);
            n.in->dispatch(std::move(rest));
          }
          n.in->flush_partial();
          Item end;
          end.control = ItemControl::kEnd;
          n.in->send_local_all(end);
          n.finished = true;
          return;
        }
        n.dispatched.fetch_add(1);
        n.in->dispatch(std::move(*it));
      }
    });
  }

  void batch_scheduler(Node& n) {
    guarded(n.cfg.id, [&] {
      std::vector<Sample> acc;
      std::uint64_t batch_index = 0;
      std::uint64_t cur_epoch = 0;
      auto emit = [&] {
        const auto now = Clock::now();
        Batch b;
        b.epoch = cur_epoch;
        b.batch_index = batch_index++;
        b.samples = std::move(acc);
        acc.clear();
        const std::size_t count = b.samples.size();
        {
          std::lock_guard lock(stats_mu);
          const double dt =
              std::chrono::duration<double>(now - last_emit).count();
          throughput.push_back(dt > 0 ? count / dt : 0.0);
          last_emit = now;
        }
        n.items.fetch_add(count);
        items_out.fetch_add(count);
        sink->push(std::move(b));
        batches.fetch_add(1);
      };
      std::size_t ends = 0;
      while (true) {
        Item cur = n.in->pop();
        if (cur.control == ItemControl::kEnd) {
          if (++ends < n.in->producer_size()) continue;
          if (!graph.drop_remainder && !acc.empty()) emit();
          sink->close();
          n.finished = true;
          return;
        }
        auto it = &cur;
        if (it->epoch != cur_epoch) {
          if (!graph.drop_remainder && !acc.empty()) emit();
          acc.clear();
          cur_epoch = it->epoch;
          batch_index = 0;
        }
        acc.push_back(std::move(it->sample));
        if (acc.size() >= n.cfg.batch_size) emit();
      }
    });
  }
};

Pipeline::Pipeline(PipelineGraph graph, SourceFn source,
                   std::uint64_t samples_per_epoch, PipelineOptions opts)
    : impl_(std::make_unique<Impl>()) {
  graph.validate();
  if (samples_per_epoch == 0) fail(Errc::kEmptyDataset, "no samples");
  impl_->graph = std::move(graph);
  impl_->source = std::move(source);
  impl_->samples_per_epoch = samples_per_epoch;
  impl_->opts = opts;
}

Pipeline::~Pipeline() {
  if (impl_ && impl_->started.load()) stop();
}

void Pipeline::start() {
  auto& im = *impl_;
  if (im.started.exchange(true)) fail(Errc::kOutOfBounds, "already started");
  im.start_time = Clock::now();
  im.last_emit = im.start_time;

  const auto& nodes = im.graph.nodes;
  // producing nodes: everything except the sink
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    im.nodes.push_back(std::make_unique<Impl::Node>());
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    im.nodes[i]->cfg = nodes[i];

  // connectors between consecutive producing nodes
  for (std::size_t i = 0; i + 2 < nodes.size(); ++i) {
    im.connectors.push_back(std::make_unique<Connector>(
        nodes[i].num_workers, nodes[i + 1].num_workers,
        nodes[i].out_queue_capacity));
    im.nodes[i]->out = im.connectors.back().get();
    im.nodes[i + 1]->in = im.connectors.back().get();
  }
  const std::size_t sink_cap =
      im.opts.sink_capacity.value_or(nodes.back().out_queue_capacity);
  im.sink = std::make_unique<BoundedQueue<Batch>>(sink_cap);

  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    auto& n = *im.nodes[i];
    switch (n.cfg.kind) {
      case OpNode::Kind::kSource:
        for (std::uint32_t w = 0; w < n.cfg.num_workers; ++w)
          n.workers.emplace_back([&im, &n, w] { im.source_worker(n, w); });
        break;
      case OpNode::Kind::kMap:
        for (std::uint32_t w = 0; w < n.cfg.num_workers; ++w)
          n.workers.emplace_back([&im, &n, w] { im.map_worker(n, w); });
        n.scheduler = std::thread([&im, &n] { im.map_scheduler(n); });
        break;
      case OpNode::Kind::kBatch:
        n.scheduler = std::thread([&im, &n] { im.batch_scheduler(n); });
        break;
      case OpNode::Kind::kSink:
        break;
    }
  }
}

std::optional<Batch> Pipeline::next_batch() {
  auto& im = *impl_;
  if (!im.started.load()) fail(Errc::kPipelineStopped, "pipeline not started");
  try {
    return im.sink->pop();
  } catch (const PcError&) {
    std::lock_guard lock(im.fail_mu);
    if (im.has_failure)
      fail(Errc::kWorkerPanic,
           "op " + std::to_string(im.failed_op) + ": " + im.failure);
    throw;
  }
}

void Pipeline::update_op_config(std::uint32_t op_id,
                                std::optional<std::uint32_t> num_workers,
                                std::optional<std::uint32_t> queue_capacity) {
  auto& im = *impl_;
  std::lock_guard config_lock(im.config_mu);
  Impl::Node* target = nullptr;
  for (auto& n : im.nodes)
    if (n->cfg.id == op_id) target = n.get();
  if (!target) fail(Errc::kUnknownOp, "op " + std::to_string(op_id));
  if (num_workers &&
      (*num_workers < 1 || *num_workers > im.opts.max_workers))
    fail(Errc::kOutOfBounds, "num_workers outside [1, max_workers]");
  if (queue_capacity && *queue_capacity < 1)
    fail(Errc::kOutOfBounds, "queue capacity must be >= 1");
  if (target->cfg.kind != OpNode::Kind::kMap)
    fail(Errc::kOutOfBounds, "only map operators are reconfigurable");
  if (!num_workers && !queue_capacity) return;
  const auto sync_graph = [&] {
    for (auto& n : im.graph.nodes) {
      if (n.id != op_id) continue;
      if (num_workers) n.num_workers = *num_workers;
      if (queue_capacity) n.out_queue_capacity = *queue_capacity;
    }
  };
  if (target->finished.load()) {
    // stream already drained; record for completeness
    if (num_workers) target->cfg.num_workers = *num_workers;
    if (queue_capacity) target->cfg.out_queue_capacity = *queue_capacity;
    sync_graph();
    return;
  }
  auto cfg = std::make_unique<PendingConfig>();
  cfg->num_workers = num_workers;
  cfg->queue_capacity = queue_capacity;
  auto fut = cfg->done.get_future();
  {
    std::lock_guard lock(target->pending_mu);
    target->pending = std::move(cfg);
  }
  fut.get();
  sync_graph();
}

MetricsSnapshot Pipeline::metrics() const {
  auto& im = *impl_;
  MetricsSnapshot m;
  m.uptime_seconds =
      std::chrono::duration<double>(Clock::now() - im.start_time).count();
  for (const auto& n : im.nodes) {
    OpMetrics om;
    om.op_id = n->cfg.id;
    om.kind = op_kind_name(n->cfg.kind);
    om.num_workers = n->cfg.num_workers;
    om.items = n->items.load();
    om.busy_seconds = n->busy_ns.load() * 1e-9;
    if (n->out) {
      om.out_queue_size = n->out->total_queued();
      om.out_queue_capacity =
          n->out->capacity() *
          (n->out->producer_size() + n->out->consumer_size());
    } else if (im.sink) {
      om.out_queue_size = im.sink->size();
      om.out_queue_capacity = im.sink->capacity();
    }
    m.ops.push_back(std::move(om));
  }
  if (im.sink) {
    m.sink_polls = im.sink->polls();
    m.sink_empty_polls = im.sink->empty_polls();
    m.sink_size = im.sink->size();
    m.sink_capacity = im.sink->capacity();
  }
  m.batches_emitted = im.batches.load();
  m.items_emitted = im.items_out.load();
  return m;
}

std::vector<double> Pipeline::batch_throughput() const {
  std::lock_guard lock(impl_->stats_mu);
  return impl_->throughput;
}

std::size_t Pipeline::total_queued() const {
  std::size_t n = 0;
  for (const auto& c : impl_->connectors) n += c->total_queued();
  if (impl_->sink) n += impl_->sink->size();
  return n;
}

bool Pipeline::running() const {
  return impl_->started.load() && !impl_->stopping.load();
}

void Pipeline::stop() {
  auto& im = *impl_;
  if (!im.started.load()) return;
  im.stopping = true;
  im.abort_all();
  for (auto& n : im.nodes) {
    for (auto& t : n->workers)
      if (t.joinable()) t.join();
    if (n->scheduler.joinable()) n->scheduler.join();
    // release any caller blocked in update_op_config
    std::lock_guard lock(n->pending_mu);
    if (n->pending) {
      try {
        fail(Errc::kShutdown, "pipeline stopped");
      } catch (...) {
        n->pending->done.set_exception(std::current_exception());
      }
      n->pending.reset();
    }
  }
}

const PipelineGraph& Pipeline::graph() const { return impl_->graph; }

std::pair<std::vector<Batch>, RunStats> run_pipeline(
    const PipelineGraph& graph, SourceFn source, std::uint64_t samples_per_epoch,
    std::optional<std::size_t> sink_capacity) {
  PipelineOptions opts;
  opts.sink_capacity = sink_capacity;
  Pipeline p(graph, std::move(source), samples_per_epoch, opts);
  const auto t0 = Clock::now();
  p.start();
  std::vector<Batch> batches;
  while (auto b = p.next_batch()) batches.push_back(std::move(*b));
  RunStats stats;
  stats.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  stats.items_per_sec = p.batch_throughput();
  stats.ops = p.metrics().ops;
  p.stop();
  return {std::move(batches), std::move(stats)};
}

}  // namespace pcpipe
