// Replacement global allocator that reports every heap block to
// alloc_tracker. Link this object into an executable to enable the
// benchmark's memory columns; nothing else depends on it.

#include <cstddef>
#include <cstdlib>
#include <new>

#include "protolayer/alloc_tracker.hpp"

namespace {

// The block size is stashed in a header in front of the user pointer.
constexpr std::size_t kHeader = alignof(std::max_align_t);

void* tracked_alloc(std::size_t n) {
  auto* raw = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (!raw) return nullptr;
  *reinterpret_cast<std::size_t*>(raw) = n;
  protolayer::alloc_tracker::on_allocate(n);
  return raw + kHeader;
}

void tracked_free(void* p) noexcept {
  if (!p) return;
  auto* raw = static_cast<unsigned char*>(p) - kHeader;
  protolayer::alloc_tracker::on_release(*reinterpret_cast<std::size_t*>(raw));
  std::free(raw);
}

void* alloc_or_throw(std::size_t n) {
  for (;;) {
    if (void* p = tracked_alloc(n == 0 ? 1 : n)) return p;
    auto handler = std::get_new_handler();
    if (!handler) throw std::bad_alloc();
    handler();
  }
}

}  // namespace

void* operator new(std::size_t n) { return alloc_or_throw(n); }
void* operator new[](std::size_t n) { return alloc_or_throw(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return tracked_alloc(n == 0 ? 1 : n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return tracked_alloc(n == 0 ? 1 : n); }
void operator delete(void* p) noexcept { tracked_free(p); }
void operator delete[](void* p) noexcept { tracked_free(p); }
void operator delete(void* p, std::size_t) noexcept { tracked_free(p); }
void operator delete[](void* p, std::size_t) noexcept { tracked_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { tracked_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { tracked_free(p); }
