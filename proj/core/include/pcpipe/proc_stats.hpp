#pragma once

#include <cstdint>
#include <memory>
#include <thread>

#include "pcpipe/errors.hpp"

namespace pcpipe {

struct ProcUsage {
  double cpu_seconds = 0;  // utime + stime of this process
  std::uint64_t rss_bytes = 0;
};

ProcUsage read_proc_usage();
std::uint64_t total_system_memory_bytes();

// Background sampler for CPU% (cpu-time delta / wall delta, can exceed 100)
// and memory% of total system memory.
class UsageSampler {
 public:
  explicit UsageSampler(std::uint32_t interval_ms = 10);
  ~UsageSampler();

  void start();

  struct Result {
    double avg_cpu_percent = 0;
    double avg_mem_percent = 0;
    std::uint64_t peak_rss_bytes = 0;
    std::size_t samples = 0;
  };
  Result stop();

 private:
  struct State;
  std::unique_ptr<State> state_;
  std::thread thread_;
  std::uint32_t interval_ms_;
};

}  // namespace pcpipe
