#pragma once

#include <cstddef>

// Heap accounting used by the benchmark. The counters live in the core
// library; they only move when the replacement operator new/delete from the
// protolayer_alloc object library is linked into the executable.
namespace protolayer::alloc_tracker {

void on_allocate(std::size_t bytes) noexcept;
void on_release(std::size_t bytes) noexcept;

/// True once a replacement allocator has reported anything.
bool active() noexcept;
std::size_t live_bytes() noexcept;
std::size_t peak_bytes() noexcept;
/// Restarts peak tracking from the current live size.
void reset_peak() noexcept;

}  // namespace protolayer::alloc_tracker
