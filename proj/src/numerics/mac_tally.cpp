#include "lstmkd/numerics/mac_tally.hpp"

namespace lstmkd {

namespace {

thread_local std::uint64_t t_total = 0;
thread_local bool t_active = false;

} // namespace

void MacTally::add(std::uint64_t macs) noexcept {
    if (t_active) {
        t_total += macs;
    }
}

bool MacTally::active() noexcept { return t_active; }

MacTallyScope::MacTallyScope() noexcept : saved_total_(t_total), saved_active_(t_active) {
    t_total = 0;
    t_active = true;
}

MacTallyScope::~MacTallyScope() {
    t_total = saved_total_;
    t_active = saved_active_;
}

std::uint64_t MacTallyScope::total() const noexcept { return t_total; }

} // namespace lstmkd
