#include "pcpipe/autotune.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "pcpipe/proc_stats.hpp"

namespace pcpipe {

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Monitoring

std::vector<MetricsSample> collect_metrics(Pipeline& pipeline,
                                           std::uint32_t interval_ms,
                                           std::size_t count) {
  if (!pipeline.running())
    fail(Errc::kPipelineStopped, "pipeline is not running");
  std::vector<MetricsSample> out;
  out.reserve(count);
  const auto t0 = Clock::now();
  auto prev_usage = read_proc_usage();
  auto prev_t = t0;
  std::uint64_t prev_polls = 0, prev_empty = 0;
  {
    const auto m0 = pipeline.metrics();
    prev_polls = m0.sink_polls;
    prev_empty = m0.sink_empty_polls;
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms));
    if (!pipeline.running())
      fail(Errc::kPipelineStopped, "pipeline stopped during collection");
    const auto snap = pipeline.metrics();
    const auto usage = read_proc_usage();
    const auto now = Clock::now();

    MetricsSample s;
    s.timestamp_s = std::chrono::duration<double>(now - t0).count();
    for (const auto& op : snap.ops) {
      MetricsSample::OpStat st;
      st.op_id = op.op_id;
      st.delay_ms = op.items > 0
                        ? 1e3 * op.busy_seconds / static_cast<double>(op.items)
                        : 0.0;
      st.queue_utilization =
          op.out_queue_capacity > 0
              ? std::min(1.0, static_cast<double>(op.out_queue_size) /
                                  static_cast<double>(op.out_queue_capacity))
              : 0.0;
      s.ops.push_back(st);
    }
    const double dt = std::chrono::duration<double>(now - prev_t).count();
    s.cpu_percent =
        dt > 0 ? 100.0 * (usage.cpu_seconds - prev_usage.cpu_seconds) / dt : 0;
    s.rss_bytes = usage.rss_bytes;
    s.sink_polls = snap.sink_polls;
    s.sink_empty_polls = snap.sink_empty_polls;
    const std::uint64_t dp = snap.sink_polls - prev_polls;
    const std::uint64_t de = snap.sink_empty_polls - prev_empty;
    s.sink_empty_ratio =
        dp > 0 ? static_cast<double>(de) / static_cast<double>(dp) : 0.0;
    prev_polls = snap.sink_polls;
    prev_empty = snap.sink_empty_polls;
    prev_usage = usage;
    prev_t = now;
    out.push_back(std::move(s));
  }
  return out;
}

Bottleneck detect_bottleneck(const std::vector<MetricsSample>& window,
                             double threshold) {
  if (window.size() < 30)
    fail(Errc::kInsufficientSamples,
         "need >= 30 samples, got " + std::to_string(window.size()));
  const auto& first = window.front();
  const auto& last = window.back();
  const std::uint64_t polls = last.sink_polls - first.sink_polls;
  const std::uint64_t empty = last.sink_empty_polls - first.sink_empty_polls;
  const double ratio =
      polls > 0 ? static_cast<double>(empty) / static_cast<double>(polls) : 0.0;
  return ratio > threshold ? Bottleneck::kDataSide : Bottleneck::kNetworkSide;
}

// ---------------------------------------------------------------------------
// Search space

void SearchSpace::validate() const {
  if (op_ids.empty()) fail(Errc::kOutOfBounds, "no tunable operators");
  if (max_workers < 1) fail(Errc::kOutOfBounds, "max_workers must be >= 1");
  if (queue_capacities.empty())
    fail(Errc::kOutOfBounds, "no queue capacities to search");
}

std::size_t SearchSpace::dimensions() const {
  return 2 * op_ids.size() + fusable_pairs.size();
}

std::uint64_t SearchSpace::cardinality() const {
  std::uint64_t n = 1;
  const auto mul = [&n](std::uint64_t f) {
    if (n > UINT64_MAX / f) {
      n = UINT64_MAX;
    } else {
      n *= f;
    }
  };
  for (std::size_t i = 0; i < op_ids.size(); ++i) {
    mul(max_workers);
    mul(queue_capacities.size());
  }
  for (std::size_t i = 0; i < fusable_pairs.size(); ++i) mul(2);
  return n;
}

namespace {

TuneConfig random_config(const SearchSpace& space, std::mt19937_64& rng) {
  TuneConfig c;
  std::uniform_int_distribution<std::uint32_t> dw(1, space.max_workers);
  std::uniform_int_distribution<std::size_t> dq(0,
                                                space.queue_capacities.size() - 1);
  std::uniform_int_distribution<int> db(0, 1);
  for (auto id : space.op_ids)
    c.ops[id] = {dw(rng), space.queue_capacities[dq(rng)]};
  for (std::size_t i = 0; i < space.fusable_pairs.size(); ++i)
    c.fuse.push_back(db(rng) == 1);
  return c;
}

bool within_memory_cap(const TuneConfig& c, const SearchSpace& space) {
  std::uint64_t total = 0;
  for (const auto& [id, wc] : c.ops)
    total += static_cast<std::uint64_t>(wc.first) * wc.second;
  return total <= space.max_total_queue_items;
}

bool observed_before(const TuneConfig& c, const SurrogateState& state) {
  for (const auto& o : state.observed)
    if (o.same_assignment(c)) return true;
  return false;
}

// min-max-normalized feature vector
Eigen::VectorXd to_features(const TuneConfig& c, const SearchSpace& space) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(space.dimensions()));
  Eigen::Index k = 0;
  for (auto id : space.op_ids) {
    const auto& [w, cap] = c.ops.at(id);
    x[k++] = space.max_workers > 1
                 ? static_cast<double>(w - 1) / (space.max_workers - 1)
                 : 0.0;
    std::size_t qi = 0;
    for (std::size_t i = 0; i < space.queue_capacities.size(); ++i)
      if (space.queue_capacities[i] == cap) qi = i;
    x[k++] = space.queue_capacities.size() > 1
                 ? static_cast<double>(qi) /
                       static_cast<double>(space.queue_capacities.size() - 1)
                 : 0.0;
  }
  for (std::size_t i = 0; i < space.fusable_pairs.size(); ++i)
    x[k++] = (i < c.fuse.size() && c.fuse[i]) ? 1.0 : 0.0;
  return x;
}

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 double length_scale, double signal_variance) {
  const double d2 = (a - b).squaredNorm();
  return signal_variance * std::exp(-d2 / (2.0 * length_scale * length_scale));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

}  // namespace

double SurrogateState::best_objective() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& o : observed) best = std::max(best, o.objective);
  return best;
}

TuneConfig propose_config(const SurrogateState& state, const SearchSpace& space,
                          TunePhase phase, std::mt19937_64& rng) {
  space.validate();
  if (state.observed.size() >= space.cardinality())
    fail(Errc::kSpaceExhausted, "every assignment has been observed");

  if (phase == TunePhase::kSeed) {
    for (int tries = 0; tries < 4096; ++tries) {
      TuneConfig c = random_config(space, rng);
      if (!within_memory_cap(c, space)) continue;
      if (!observed_before(c, state)) return c;
    }
    fail(Errc::kSpaceExhausted, "no unobserved assignment found");
  }

  // Gaussian-process posterior over the observations
  const auto n = static_cast<Eigen::Index>(state.observed.size());
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(state.observed.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xs.push_back(to_features(state.observed[i], space));
    y[i] = state.observed[i].objective;
  }
  // normalize objectives for a stable prior mean of 0
  const double mean = y.mean();
  double scale = std::sqrt((y.array() - mean).square().sum() /
                           std::max<double>(1, n - 1));
  if (scale <= 0 || !std::isfinite(scale)) scale = 1.0;
  Eigen::VectorXd yn = (y.array() - mean) / scale;

  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      K(i, j) = se_kernel(xs[i], xs[j], state.length_scale,
                          state.signal_variance);
  K.diagonal().array() += state.noise;
  Eigen::LDLT<Eigen::MatrixXd> chol(K);
  const Eigen::VectorXd alpha = chol.solve(yn);
  const double fbest = (state.best_objective() - mean) / scale;

  TuneConfig best_cand;
  double best_ei = -1;
  bool found = false;
  for (int cand = 0; cand < 512; ++cand) {
    TuneConfig c = random_config(space, rng);
    if (!within_memory_cap(c, space)) continue;
    if (observed_before(c, state)) continue;
    const Eigen::VectorXd x = to_features(c, space);
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i)
      k[i] = se_kernel(x, xs[i], state.length_scale, state.signal_variance);
    const double mu = k.dot(alpha);
    const double var =
        std::max(1e-12, state.signal_variance - k.dot(chol.solve(k)));
    const double sigma = std::sqrt(var);
    const double z = (mu - fbest) / sigma;
    const double ei = (mu - fbest) * normal_cdf(z) + sigma * normal_pdf(z);
    if (!found || ei > best_ei) {
      best_ei = ei;
      best_cand = std::move(c);
      found = true;
    }
  }
  if (!found) fail(Errc::kSpaceExhausted, "no unobserved candidate found");
  return best_cand;
}

// ---------------------------------------------------------------------------
// Live application

namespace {

// Consumes batches for the duration of a measurement so the sink never backs
// up and stalls the pipeline while the tuner owns it.
class SinkDrainer {
 public:
  explicit SinkDrainer(Pipeline& pipeline)
      : thread_([this, &pipeline] {
          while (!stop_.load(std::memory_order_relaxed))
            if (!pipeline.next_batch()) break;
        }) {}
  ~SinkDrainer() {
    stop_.store(true, std::memory_order_relaxed);
    thread_.join();
  }

 private:
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace

double measure_throughput(Pipeline& pipeline, std::chrono::milliseconds window) {
  if (!pipeline.running())
    fail(Errc::kPipelineStopped, "pipeline is not running");
  SinkDrainer drainer(pipeline);
  // one-window warm-up so queue refill transients do not skew the estimate
  std::this_thread::sleep_for(window);
  const auto start_items = pipeline.metrics().items_emitted;
  const auto t0 = Clock::now();
  std::this_thread::sleep_for(window);
  const auto end_items = pipeline.metrics().items_emitted;
  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  return dt > 0 ? static_cast<double>(end_items - start_items) / dt : 0.0;
}

double apply_and_measure(Pipeline& pipeline, const TuneConfig& config,
                         std::chrono::milliseconds eval_window) {
  {
    // keep batches flowing so full queues cannot block the reconfiguration
    SinkDrainer drainer(pipeline);
    for (const auto& [op_id, wc] : config.ops)
      pipeline.update_op_config(op_id, wc.first, wc.second);
  }
  return measure_throughput(pipeline, eval_window);
}

// ---------------------------------------------------------------------------
// Persistence

void persist_best(const TuneConfig& config, const std::filesystem::path& path) {
  json ops = json::object();
  for (const auto& [id, wc] : config.ops)
    ops[std::to_string(id)] =
        json{{"workers", wc.first}, {"queue_capacity", wc.second}};
  json fused = json::array();
  for (bool f : config.fuse) fused.push_back(f);
  const json doc{{"version", 1},
                 {"ops", ops},
                 {"fused_pairs", fused},
                 {"objective", config.objective},
                 {"timestamp", static_cast<std::uint64_t>(std::time(nullptr))}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::kIoFailure, "cannot write " + path.string());
  out << doc.dump(2);
  if (!out) fail(Errc::kIoFailure, "cannot write " + path.string());
}

TuneConfig load_best(const std::filesystem::path& path,
                     const std::vector<std::uint32_t>& expected_ops) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIoFailure, "cannot read " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(Errc::kSchemaMismatch, std::string("config file: ") + e.what());
  }
  if (!doc.contains("version") || doc["version"].get<int>() != 1)
    fail(Errc::kSchemaMismatch, "unsupported config version");
  TuneConfig c;
  for (const auto& [key, val] : doc.at("ops").items())
    c.ops[static_cast<std::uint32_t>(std::stoul(key))] = {
        val.at("workers").get<std::uint32_t>(),
        val.at("queue_capacity").get<std::uint32_t>()};
  for (const auto& f : doc.value("fused_pairs", json::array()))
    c.fuse.push_back(f.get<bool>());
  c.objective = doc.value("objective", 0.0);

  std::vector<std::uint32_t> have;
  for (const auto& [id, wc] : c.ops) have.push_back(id);
  std::vector<std::uint32_t> want = expected_ops;
  std::sort(want.begin(), want.end());
  if (have != want)
    fail(Errc::kSchemaMismatch, "config was tuned for a different op set");
  return c;
}

// ---------------------------------------------------------------------------
// Search loop

TuneResult autotune(Pipeline& pipeline, const SearchSpace& space,
                    const TuneOptions& opts) {
  space.validate();
  std::mt19937_64 rng(opts.seed);
  SurrogateState state;

  // baseline: the pipeline's current configuration
  TuneConfig current;
  for (auto id : space.op_ids) {
    const OpNode* n = pipeline.graph().find(id);
    if (!n) fail(Errc::kUnknownOp, "op " + std::to_string(id));
    current.ops[id] = {n->num_workers, n->out_queue_capacity};
  }
  current.fuse.assign(space.fusable_pairs.size(), false);
  current.objective = measure_throughput(pipeline, opts.eval_window);
  state.observed.push_back(current);

  TuneResult result;
  result.best = current;
  result.history.push_back(current);

  for (std::uint32_t it = 0; it < opts.iterations; ++it) {
    const TunePhase phase = state.observed.size() < opts.seed_phase
                                ? TunePhase::kSeed
                                : TunePhase::kRefine;
    TuneConfig cand;
    try {
      cand = propose_config(state, space, phase, rng);
    } catch (const PcError& e) {
      if (e.code() == Errc::kSpaceExhausted) break;
      throw;
    }
    cand.objective = apply_and_measure(pipeline, cand, opts.eval_window);
    state.observed.push_back(cand);
    result.history.push_back(cand);
    if (cand.objective > result.best.objective) result.best = cand;
  }

  // leave the winner applied; keep draining so full queues cannot block it
  {
    SinkDrainer drainer(pipeline);
    for (const auto& [op_id, wc] : result.best.ops)
      pipeline.update_op_config(op_id, wc.first, wc.second);
  }
  return result;
}

}  // namespace pcpipe
