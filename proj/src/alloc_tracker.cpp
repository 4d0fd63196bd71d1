#include "protolayer/alloc_tracker.hpp"

#include <atomic>

namespace protolayer::alloc_tracker {

namespace {
std::atomic<bool> g_active{false};
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

void on_allocate(std::size_t bytes) noexcept {
  g_active.store(true, std::memory_order_relaxed);
  const auto now = g_live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  auto peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void on_release(std::size_t bytes) noexcept { g_live.fetch_sub(bytes, std::memory_order_relaxed); }

bool active() noexcept { return g_active.load(std::memory_order_relaxed); }
std::size_t live_bytes() noexcept { return g_live.load(std::memory_order_relaxed); }
std::size_t peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }
void reset_peak() noexcept { g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed); }

}  // namespace protolayer::alloc_tracker
