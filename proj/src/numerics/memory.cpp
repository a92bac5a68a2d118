#include "lstmkd/numerics/memory.hpp"

namespace lstmkd {

namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
std::atomic<bool> g_enabled{true};

} // namespace

void MemoryTracker::on_allocate(std::size_t bytes) noexcept {
    if (!g_enabled.load(std::memory_order_relaxed)) {
        return;
    }
    const std::size_t now = g_live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = g_peak.load(std::memory_order_relaxed);
    while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
}

void MemoryTracker::on_deallocate(std::size_t bytes) noexcept {
    if (!g_enabled.load(std::memory_order_relaxed)) {
        return;
    }
    // Buffers allocated while tracking was off may be released while it is on.
    std::size_t live = g_live.load(std::memory_order_relaxed);
    while (!g_live.compare_exchange_weak(live, live >= bytes ? live - bytes : 0,
                                         std::memory_order_relaxed)) {
    }
}

std::size_t MemoryTracker::live_bytes() noexcept { return g_live.load(std::memory_order_relaxed); }

std::size_t MemoryTracker::peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }

void MemoryTracker::reset_peak() noexcept {
    g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

bool MemoryTracker::enabled() noexcept { return g_enabled.load(std::memory_order_relaxed); }

void MemoryTracker::set_enabled(bool on) noexcept { g_enabled.store(on, std::memory_order_relaxed); }

} // namespace lstmkd
