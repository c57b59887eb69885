#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

#include "pcpipe/errors.hpp"

namespace pcpipe {

// Blocking MPMC queue with a hard capacity. close() lets pending pops drain
// the remaining items and then return nullopt; shutdown() aborts everything.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    cv_space_.wait(lock, [&] { return q_.size() < capacity_ || stop_; });
    if (stop_) fail(Errc::kShutdown, "queue shut down");
    if (closed_) fail(Errc::kShutdown, "queue closed");
    q_.push_back(std::move(item));
    cv_data_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    ++polls_;
    if (q_.empty()) ++empty_polls_;
    cv_data_.wait(lock, [&] { return !q_.empty() || closed_ || stop_; });
    if (stop_) fail(Errc::kShutdown, "queue shut down");
    if (q_.empty()) return std::nullopt;  // closed and drained
    T item = std::move(q_.front());
    q_.pop_front();
    cv_space_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_data_.notify_all();
    cv_space_.notify_all();
  }

  void shutdown() {
    std::lock_guard lock(mu_);
    stop_ = true;
    cv_data_.notify_all();
    cv_space_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return q_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t polls() const {
    std::lock_guard lock(mu_);
    return polls_;
  }
  std::uint64_t empty_polls() const {
    std::lock_guard lock(mu_);
    return empty_polls_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_data_, cv_space_;
  std::deque<T> q_;
  std::size_t capacity_;
  bool closed_ = false;
  bool stop_ = false;
  std::uint64_t polls_ = 0;
  std::uint64_t empty_polls_ = 0;
};

}  // namespace pcpipe
