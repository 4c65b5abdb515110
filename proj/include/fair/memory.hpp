#pragma once

#include <cstddef>
#include <memory>
#include <vector>

namespace fair {

/// Counts live parameter values (not bytes) allocated through a
/// CountingAllocator that points at it.
class MemoryMeter {
 public:
  void on_allocate(std::size_t count) {
    current_ += count;
    if (current_ > peak_) peak_ = current_;
  }
  void on_deallocate(std::size_t count) { current_ -= count; }

  std::size_t current() const { return current_; }
  std::size_t peak() const { return peak_; }
  void reset_peak() { peak_ = current_; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

template <typename T>
class CountingAllocator {
 public:
  using value_type = T;

  CountingAllocator() noexcept = default;
  explicit CountingAllocator(MemoryMeter* meter) noexcept : meter_(meter) {}
  template <typename U>
  CountingAllocator(const CountingAllocator<U>& other) noexcept : meter_(other.meter()) {}

  T* allocate(std::size_t count) {
    T* p = std::allocator<T>{}.allocate(count);
    if (meter_ != nullptr) meter_->on_allocate(count);
    return p;
  }
  void deallocate(T* p, std::size_t count) noexcept {
    if (meter_ != nullptr) meter_->on_deallocate(count);
    std::allocator<T>{}.deallocate(p, count);
  }

  MemoryMeter* meter() const noexcept { return meter_; }

  template <typename U>
  friend bool operator==(const CountingAllocator& a, const CountingAllocator<U>& b) noexcept {
    return a.meter() == b.meter();
  }

 private:
  MemoryMeter* meter_ = nullptr;
};

/// Parameter storage on a device. Every such buffer is metered.
using ParamVector = std::vector<double, CountingAllocator<double>>;

}  // namespace fair
