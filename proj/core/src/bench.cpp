#include "pcpipe/bench.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pcpipe/proc_stats.hpp"

namespace pcpipe {

using Clock = std::chrono::steady_clock;

json BenchReport::to_json() const {
  json j{{"version", 1},
         {"cost_time_s", cost_time_s},
         {"avg_cpu_percent", avg_cpu_percent},
         {"avg_mem_percent", avg_mem_percent},
         {"peak_rss_bytes", peak_rss_bytes},
         {"batches", batches},
         {"items", items},
         {"batch_items_per_sec", batch_items_per_sec},
         {"run_times_s", run_times_s}};
  if (deviation) {
    j["deviation"] = *deviation;
  } else {
    j["deviation"] = nullptr;
  }
  return j;
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "run,cost_time_s,avg_cpu_percent,avg_mem_percent,peak_rss_bytes,"
         "batches,items\n";
  for (std::size_t i = 0; i < run_times_s.size(); ++i)
    out << i << ',' << run_times_s[i] << ',' << avg_cpu_percent << ','
        << avg_mem_percent << ',' << peak_rss_bytes << ',' << batches << ','
        << items << '\n';
  return out.str();
}

BenchReport run_benchmark(const PipelineGraph& graph, const SourceFn& source,
                          std::uint64_t samples_per_epoch, std::uint32_t repeats,
                          std::uint32_t sample_interval_ms) {
  if (repeats == 0) fail(Errc::kOutOfBounds, "repeats must be >= 1");
  BenchReport report;
  UsageSampler sampler(sample_interval_ms);
  sampler.start();

  for (std::uint32_t run = 0; run < repeats; ++run) {
    Pipeline pipe(graph, source, samples_per_epoch);
    pipe.start();
    std::uint64_t batches = 0, items = 0;
    // warm-up batch, excluded from timing
    auto first = pipe.next_batch();
    const auto t0 = Clock::now();
    if (first) {
      ++batches;
      items += first->samples.size();
      while (auto b = pipe.next_batch()) {
        ++batches;
        items += b->samples.size();
      }
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    report.run_times_s.push_back(dt);
    if (run + 1 == repeats) {
      report.batch_items_per_sec = pipe.batch_throughput();
      report.batches = batches;
      report.items = items;
    }
    pipe.stop();
  }

  const auto usage = sampler.stop();
  report.avg_cpu_percent = usage.avg_cpu_percent;
  report.avg_mem_percent = usage.avg_mem_percent;
  report.peak_rss_bytes = usage.peak_rss_bytes;
  report.cost_time_s =
      std::accumulate(report.run_times_s.begin(), report.run_times_s.end(),
                      0.0) /
      static_cast<double>(report.run_times_s.size());
  if (repeats > 1) {
    double var = 0;
    for (double t : report.run_times_s) {
      const double d = t - report.cost_time_s;
      var += d * d;
    }
    var /= static_cast<double>(repeats - 1);
    report.deviation = report.cost_time_s > 0
                           ? std::sqrt(var) / report.cost_time_s
                           : 0.0;
  }
  return report;
}

}  // namespace pcpipe
