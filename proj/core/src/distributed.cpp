#include "pcpipe/distributed.hpp"

#include <barrier>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

namespace pcpipe {

using Clock = std::chrono::steady_clock;

IndexTable shard_index(const IndexTable& index, const ShardSpec& spec) {
  if (spec.num_shards == 0 || spec.shard_id >= spec.num_shards)
    fail(Errc::kOutOfBounds, "shard_id must lie in [0, num_shards)");
  if (index.size() % spec.num_shards != 0)
    fail(Errc::kNotPadded,
         std::to_string(index.size()) + " entries do not divide into " +
             std::to_string(spec.num_shards) + " shards; pad the index first");
  IndexTable out;
  out.total_real_samples = index.total_real_samples;
  for (std::size_t i = spec.shard_id; i < index.size(); i += spec.num_shards) {
    out.task_list.push_back(index.task_list[i]);
    out.sample_meta_list.push_back(index.sample_meta_list[i]);
  }
  return out;
}

std::vector<double> allreduce_mean(
    const std::vector<std::vector<double>>& grads) {
  if (grads.empty()) fail(Errc::kShapeMismatch, "no gradients to reduce");
  const std::size_t dim = grads.front().size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& g : grads) {
    if (g.size() != dim)
      fail(Errc::kShapeMismatch, "gradient length mismatch");
    for (std::size_t j = 0; j < dim; ++j) sum[j] += g[j];
  }
  const double inv = 1.0 / static_cast<double>(grads.size());
  for (auto& v : sum) v *= inv;
  return sum;
}

namespace {

std::array<double, 3> axis_means(const Sample& s) {
  auto it = s.values.find("data");
  if (it == s.values.end() || !std::holds_alternative<Blob>(it->second))
    fail(Errc::kMissingField, "sample has no 'data' coordinates");
  const Blob& b = std::get<Blob>(it->second);
  if (b.size() % 12 != 0 || b.empty())
    fail(Errc::kMissingField, "'data' is not a non-empty Nx3 float32 blob");
  const std::size_t n = b.size() / 12;
  std::array<double, 3> m = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    float xyz[3];
    std::memcpy(xyz, b.data() + i * 12, 12);
    for (int a = 0; a < 3; ++a) m[a] += xyz[a];
  }
  for (auto& v : m) v /= static_cast<double>(n);
  return m;
}

void burn_cpu(std::uint32_t micros) {
  if (micros == 0) return;
  const auto until = Clock::now() + std::chrono::microseconds(micros);
  volatile double acc = 1.0;
  while (Clock::now() < until) acc = acc * 1.0000001 + 1e-9;
}

}  // namespace

std::vector<double> toy_gradient(const Sample& sample,
                                 const std::vector<double>& params) {
  const auto m = axis_means(sample);
  std::vector<double> x(params.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = m[j % 3];
  double y = 0;
  for (double v : x) y += v;
  double pred = 0;
  for (std::size_t j = 0; j < x.size(); ++j) pred += x[j] * params[j];
  const double err = pred - y;
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = err * x[j];
  return g;
}

SimReport simulate_data_parallel(const std::vector<Sample>& dataset,
                                 const ToyModel& model0,
                                 const SimOptions& opts) {
  if (opts.num_devices == 0 || opts.per_device_batch == 0)
    fail(Errc::kOutOfBounds, "devices and batch must be positive");
  if (model0.params.empty())
    fail(Errc::kShapeMismatch, "model has no parameters");
  for (double p : model0.params)
    if (!std::isfinite(p)) fail(Errc::kShapeMismatch, "non-finite parameter");
  const std::uint64_t global_batch =
      static_cast<std::uint64_t>(opts.num_devices) * opts.per_device_batch;
  if (dataset.empty() || dataset.size() % global_batch != 0)
    fail(Errc::kNotPadded, "dataset size must be a multiple of the global batch");

  const std::uint64_t steps_per_epoch = dataset.size() / global_batch;
  const std::uint64_t total_steps = steps_per_epoch * opts.num_epochs;
  const std::size_t dim = model0.params.size();

  SimReport report;
  report.steps = total_steps;
  report.step_seconds.reserve(total_steps);
  report.device_params.assign(opts.num_devices, model0.params);

  // per-sample gradients for the current step, indexed by position within the
  // global batch so device 0 can reduce in ascending global order
  std::vector<std::vector<double>> step_grads(global_batch);
  std::vector<double> mean_grad(dim);
  std::barrier sync(static_cast<std::ptrdiff_t>(opts.num_devices));
  const auto t0 = Clock::now();
  auto step_start = t0;

  auto device_fn = [&](std::uint32_t d) {
    auto& params = report.device_params[d];
    for (std::uint64_t step = 0; step < total_steps; ++step) {
      const std::uint64_t base = (step % steps_per_epoch) * global_batch;
      // strided share of the global batch, matching shard_index
      for (std::uint32_t k = 0; k < opts.per_device_batch; ++k) {
        const std::uint64_t offset =
            d + static_cast<std::uint64_t>(k) * opts.num_devices;
        burn_cpu(opts.work_us);
        step_grads[offset] = toy_gradient(dataset[base + offset], params);
      }
      sync.arrive_and_wait();
      if (d == 0) {
        mean_grad.assign(dim, 0.0);
        for (const auto& g : step_grads)
          for (std::size_t j = 0; j < dim; ++j) mean_grad[j] += g[j];
        const double inv = 1.0 / static_cast<double>(global_batch);
        for (auto& v : mean_grad) v *= inv;
      }
      sync.arrive_and_wait();
      for (std::size_t j = 0; j < dim; ++j)
        params[j] -= model0.learning_rate * mean_grad[j];
      sync.arrive_and_wait();
      if (d == 0) {
        double div = 0;
        for (std::uint32_t o = 1; o < opts.num_devices; ++o)
          for (std::size_t j = 0; j < dim; ++j)
            div = std::max(div, std::abs(report.device_params[o][j] - params[j]));
        report.max_param_divergence =
            std::max(report.max_param_divergence, div);
        const auto now = Clock::now();
        report.step_seconds.push_back(
            std::chrono::duration<double>(now - step_start).count());
        step_start = now;
      }
      sync.arrive_and_wait();
    }
  };

  std::vector<std::thread> devices;
  for (std::uint32_t d = 0; d < opts.num_devices; ++d)
    devices.emplace_back(device_fn, d);
  for (auto& t : devices) t.join();
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return report;
}

}  // namespace pcpipe
