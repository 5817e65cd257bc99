#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <vector>

namespace bsattn {

// Byte accounting for auxiliary allocations. A test (or the CLI) installs a
// tracker around a pipeline call to observe how much working memory the call
// grows by; with no tracker installed the hooks are no-ops.
class MemTracker {
public:
  void on_alloc(std::size_t bytes) noexcept {
    current_ += bytes;
    peak_ = std::max(peak_, current_);
  }
  void on_free(std::size_t bytes) noexcept { current_ -= std::min(bytes, current_); }

  std::size_t current_bytes() const noexcept { return current_; }
  std::size_t peak_bytes() const noexcept { return peak_; }

private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

namespace detail {
inline thread_local MemTracker* g_mem_tracker = nullptr;
}

inline MemTracker* active_mem_tracker() noexcept { return detail::g_mem_tracker; }

// RAII installer; nested scopes restore the outer tracker on exit.
class MemScope {
public:
  explicit MemScope(MemTracker& tracker) noexcept : prev_(detail::g_mem_tracker) {
    detail::g_mem_tracker = &tracker;
  }
  ~MemScope() { detail::g_mem_tracker = prev_; }
  MemScope(const MemScope&) = delete;
  MemScope& operator=(const MemScope&) = delete;

private:
  MemTracker* prev_;
};

// Allocator that reports to the active tracker. Stateless, so all instances
// compare equal and vectors stay swappable/movable.
template <typename T>
struct TrackingAlloc {
  using value_type = T;

  TrackingAlloc() = default;
  template <typename U>
  TrackingAlloc(const TrackingAlloc<U>&) noexcept {}

  T* allocate(std::size_t n) {
    if (auto* t = active_mem_tracker()) t->on_alloc(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    if (auto* t = active_mem_tracker()) t->on_free(n * sizeof(T));
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackingAlloc<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using TrackedVec = std::vector<T, TrackingAlloc<T>>;

}  // namespace bsattn
