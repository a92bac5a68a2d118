#pragma once

#include <cstdint>

namespace lstmkd {

// Per-thread multiply-accumulate tally. Kernels that perform multiply-accumulate
// work (affine maps, convolutions, recurrences, attention products) add their
// count here while a MacTallyScope is active; the profiler compares this
// brute-force tally against the analytic count.
class MacTally {
public:
    static void add(std::uint64_t macs) noexcept;
    static bool active() noexcept;

    friend class MacTallyScope;
};

class MacTallyScope {
public:
    MacTallyScope() noexcept;
    ~MacTallyScope();
    MacTallyScope(const MacTallyScope &) = delete;
    MacTallyScope &operator=(const MacTallyScope &) = delete;

    std::uint64_t total() const noexcept;

private:
    std::uint64_t saved_total_;
    bool saved_active_;
};

} // namespace lstmkd
