#include "pcpipe/proc_stats.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <string>

namespace pcpipe {

using Clock = std::chrono::steady_clock;

ProcUsage read_proc_usage() {
  ProcUsage u;
  const double tick = static_cast<double>(sysconf(_SC_CLK_TCK));
  const std::uint64_t page = static_cast<std::uint64_t>(sysconf(_SC_PAGESIZE));
  {
    std::ifstream in("/proc/self/stat");
    std::string line;
    std::getline(in, line);
    // field 2 (comm) may contain spaces; skip past the closing paren
    const auto paren = line.rfind(')');
    if (paren == std::string::npos)
      fail(Errc::kIoFailure, "unparseable /proc/self/stat");
    std::istringstream rest(line.substr(paren + 2));
    std::string tok;
    // fields 3..13 then utime (14) and stime (15)
    std::uint64_t utime = 0, stime = 0;
    for (int i = 3; i <= 15 && rest >> tok; ++i) {
      if (i == 14) utime = std::stoull(tok);
      if (i == 15) stime = std::stoull(tok);
    }
    u.cpu_seconds = static_cast<double>(utime + stime) / tick;
  }
  {
    std::ifstream in("/proc/self/statm");
    std::uint64_t size = 0, resident = 0;
    in >> size >> resident;
    u.rss_bytes = resident * page;
  }
  return u;
}

std::uint64_t total_system_memory_bytes() {
  std::ifstream in("/proc/meminfo");
  std::string key;
  std::uint64_t kb = 0;
  while (in >> key >> kb) {
    if (key == "MemTotal:") return kb * 1024;
    in.ignore(256, '\n');
  }
  fail(Errc::kIoFailure, "MemTotal not found in /proc/meminfo");
}

struct UsageSampler::State {
  std::atomic<bool> stop{false};
  double cpu_percent_sum = 0;
  double mem_percent_sum = 0;
  std::uint64_t peak_rss = 0;
  std::size_t samples = 0;
};

UsageSampler::UsageSampler(std::uint32_t interval_ms)
    : state_(std::make_unique<State>()), interval_ms_(interval_ms) {}

UsageSampler::~UsageSampler() {
  if (thread_.joinable()) {
    state_->stop = true;
    thread_.join();
  }
}

void UsageSampler::start() {
  const double total_mem = static_cast<double>(total_system_memory_bytes());
  thread_ = std::thread([this, total_mem] {
    auto prev = read_proc_usage();
    auto prev_t = Clock::now();
    while (!state_->stop.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(interval_ms_));
      const auto cur = read_proc_usage();
      const auto now = Clock::now();
      const double dt = std::chrono::duration<double>(now - prev_t).count();
      if (dt > 0) {
        state_->cpu_percent_sum +=
            100.0 * (cur.cpu_seconds - prev.cpu_seconds) / dt;
        state_->mem_percent_sum +=
            100.0 * static_cast<double>(cur.rss_bytes) / total_mem;
        state_->peak_rss = std::max(state_->peak_rss, cur.rss_bytes);
        ++state_->samples;
      }
      prev = cur;
      prev_t = now;
    }
  });
}

UsageSampler::Result UsageSampler::stop() {
  state_->stop = true;
  if (thread_.joinable()) thread_.join();
  Result r;
  r.samples = state_->samples;
  r.peak_rss_bytes = state_->peak_rss;
  if (state_->samples > 0) {
    r.avg_cpu_percent =
        state_->cpu_percent_sum / static_cast<double>(state_->samples);
    r.avg_mem_percent =
        state_->mem_percent_sum / static_cast<double>(state_->samples);
  }
  return r;
}

}  // namespace pcpipe
