#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "blink/page_format.hpp"

namespace blink {

// Five per-node latch kinds in three independent sets. Latches from
// different sets never conflict; a holder may carry one latch from each
// set on the same page at once.
enum class LatchKind : uint8_t {
    AccessIntent = 0,        // set 1, sharable
    NodeDelete = 1,          // set 1, exclusive
    ReadLock = 2,            // set 2, sharable
    WriteLock = 3,           // set 2, exclusive
    ParentModification = 4,  // set 3, exclusive
};

inline constexpr size_t kLatchKinds = 5;

constexpr int latch_set(LatchKind k) {
    switch (k) {
        case LatchKind::AccessIntent:
        case LatchKind::NodeDelete:
            return 0;
        case LatchKind::ReadLock:
        case LatchKind::WriteLock:
            return 1;
        case LatchKind::ParentModification:
            return 2;
    }
    return 2;
}

constexpr bool latch_is_shared(LatchKind k) {
    return k == LatchKind::AccessIntent || k == LatchKind::ReadLock;
}

const char* latch_kind_name(LatchKind k);

// The compatibility matrix. Cross-set pairs are always compatible; within
// a set only shared/shared pairs are. The two cells the protocol can never
// reach (NodeDelete held, set-1 request) are incompatible here as well.
bool is_compatible(LatchKind held, LatchKind requested);

// True for the two N/A cells: once NodeDelete is held every tree reference
// to the page is gone, so no set-1 request can arrive.
bool is_protocol_unreachable(LatchKind held, LatchKind requested);

struct LatchCounters {
    std::array<uint64_t, kLatchKinds> acquisitions{};
    std::array<uint64_t, kLatchKinds> waits{};  // acquisitions that blocked at least once
    std::array<uint64_t, kLatchKinds> releases{};
};

struct LatchEvent {
    enum class What : uint8_t { acquired, blocked, released };
    uint64_t seq;
    PageNum page;
    LatchKind kind;
    What what;
    std::thread::id tid;
};

// Blocking per-page latch state for all three sets. Exclusive requests take
// precedence: once one is queued, later shared requests wait behind it, so
// the NodeDelete / WriteLock drain steps always terminate.
class LatchTable {
public:
    explicit LatchTable(size_t capacity = 65536);

    // Blocks until grantable. Throws ProtocolViolation if the calling thread
    // already holds a latch from the same set on this page (no upgrades).
    void acquire(PageNum page, LatchKind kind);

    // Throws ProtocolViolation if the calling thread does not hold it.
    void release(PageNum page, LatchKind kind);

    bool holds(PageNum page, LatchKind kind) const;  // calling thread
    bool page_idle(PageNum page) const;              // all three sets idle
    size_t live_pages() const;

    LatchCounters counters() const;

    // Exclusive grants observed while another exclusive grant was live in the
    // same set; zero by construction, counted as a self-check.
    uint64_t exclusive_overlap_anomalies() const;

    void enable_event_log(bool on);
    std::vector<LatchEvent> drain_events();

private:
    struct SetState {
        std::vector<std::thread::id> shared;
        bool excl_held = false;
        std::thread::id excl_owner;
        uint32_t excl_waiting = 0;

        bool idle() const { return shared.empty() && !excl_held && excl_waiting == 0; }
        bool held_by(std::thread::id tid) const;
    };
    struct PageLatches {
        std::array<SetState, 3> sets;
        std::condition_variable cv;
        uint32_t waiters = 0;

        bool idle() const;
    };

    PageLatches& state_locked(PageNum page);
    void maybe_reclaim_locked(PageNum page);
    void log_locked(PageNum page, LatchKind kind, LatchEvent::What what);

    mutable std::mutex mu_;
    std::unordered_map<PageNum, std::unique_ptr<PageLatches>> pages_;
    size_t capacity_;
    LatchCounters counters_{};
    uint64_t overlap_anomalies_ = 0;
    bool log_events_ = false;
    uint64_t next_seq_ = 0;
    std::vector<LatchEvent> events_;
};

}  // namespace blink
