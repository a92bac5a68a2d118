#pragma once

#include <atomic>
#include <cstddef>
#include <new>

namespace lstmkd {

// Byte accounting for tensor payloads. Every Tensor buffer is allocated through
// TrackingAllocator, which reports the exact payload size (no per-allocation
// header is added, so the documented overhead is 0 bytes).
class MemoryTracker {
public:
    static void on_allocate(std::size_t bytes) noexcept;
    static void on_deallocate(std::size_t bytes) noexcept;

    static std::size_t live_bytes() noexcept;
    static std::size_t peak_bytes() noexcept;
    /// Sets the high-water mark to the current live byte count.
    static void reset_peak() noexcept;

    static bool enabled() noexcept;
    static void set_enabled(bool on) noexcept;

    static constexpr std::size_t kAllocationOverhead = 0;
};

template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() noexcept = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U> &) noexcept {}

    T *allocate(std::size_t n) {
        T *p = static_cast<T *>(::operator new(n * sizeof(T), std::align_val_t{64}));
        MemoryTracker::on_allocate(n * sizeof(T));
        return p;
    }

    void deallocate(T *p, std::size_t n) noexcept {
        MemoryTracker::on_deallocate(n * sizeof(T));
        ::operator delete(p, std::align_val_t{64});
    }

    template <typename U>
    bool operator==(const TrackingAllocator<U> &) const noexcept { return true; }
};

} // namespace lstmkd
