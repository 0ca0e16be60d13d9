#include "blink/latch_manager.hpp"

#include <algorithm>

#include "blink/errors.hpp"

namespace blink {

const char* latch_kind_name(LatchKind k) {
    switch (k) {
        case LatchKind::AccessIntent: return "AccessIntent";
        case LatchKind::NodeDelete: return "NodeDelete";
        case LatchKind::ReadLock: return "ReadLock";
        case LatchKind::WriteLock: return "WriteLock";
        case LatchKind::ParentModification: return "ParentModification";
    }
    return "?";
}

bool is_compatible(LatchKind held, LatchKind requested) {
    if (latch_set(held) != latch_set(requested)) return true;
    return latch_is_shared(held) && latch_is_shared(requested);
}

bool is_protocol_unreachable(LatchKind held, LatchKind requested) {
    return held == LatchKind::NodeDelete && latch_set(requested) == 0;
}

bool LatchTable::SetState::held_by(std::thread::id tid) const {
    if (excl_held && excl_owner == tid) return true;
    return std::find(shared.begin(), shared.end(), tid) != shared.end();
}

bool LatchTable::PageLatches::idle() const {
    return sets[0].idle() && sets[1].idle() && sets[2].idle();
}

LatchTable::LatchTable(size_t capacity) : capacity_(capacity) {}

LatchTable::PageLatches& LatchTable::state_locked(PageNum page) {
    auto it = pages_.find(page);
    if (it != pages_.end()) return *it->second;
    if (pages_.size() >= capacity_) {
        // Entries are reclaimed eagerly on release, so a full table means
        // this many pages really have live latch state.
        for (auto ev = pages_.begin(); ev != pages_.end(); ++ev) {
            if (ev->second->idle() && ev->second->waiters == 0) {
                pages_.erase(ev);
                break;
            }
        }
        if (pages_.size() >= capacity_)
            throw StorageExhaustedError("latch table capacity exceeded");
    }
    return *pages_.emplace(page, std::make_unique<PageLatches>()).first->second;
}

void LatchTable::maybe_reclaim_locked(PageNum page) {
    auto it = pages_.find(page);
    if (it != pages_.end() && it->second->idle() && it->second->waiters == 0) pages_.erase(it);
}

void LatchTable::log_locked(PageNum page, LatchKind kind, LatchEvent::What what) {
    if (!log_events_) return;
    events_.push_back(LatchEvent{next_seq_++, page, kind, what, std::this_thread::get_id()});
}

void LatchTable::acquire(PageNum page, LatchKind kind) {
    std::unique_lock lk(mu_);
    PageLatches& st = state_locked(page);
    SetState& set = st.sets[latch_set(kind)];
    auto tid = std::this_thread::get_id();

    if (set.held_by(tid))
        throw ProtocolViolation(std::string("latch upgrade attempted: ") + latch_kind_name(kind));

    counters_.acquisitions[size_t(kind)]++;
    bool waited = false;
    st.waiters++;
    if (latch_is_shared(kind)) {
        while (set.excl_held || set.excl_waiting > 0) {
            if (!waited) log_locked(page, kind, LatchEvent::What::blocked);
            waited = true;
            st.cv.wait(lk);
        }
        set.shared.push_back(tid);
    } else {
        set.excl_waiting++;
        while (set.excl_held || !set.shared.empty()) {
            if (!waited) log_locked(page, kind, LatchEvent::What::blocked);
            waited = true;
            st.cv.wait(lk);
        }
        set.excl_waiting--;
        if (set.excl_held) overlap_anomalies_++;
        set.excl_held = true;
        set.excl_owner = tid;
    }
    st.waiters--;
    if (waited) counters_.waits[size_t(kind)]++;
    log_locked(page, kind, LatchEvent::What::acquired);
}

void LatchTable::release(PageNum page, LatchKind kind) {
    std::unique_lock lk(mu_);
    auto it = pages_.find(page);
    if (it == pages_.end())
        throw ProtocolViolation(std::string("release of unheld latch: ") + latch_kind_name(kind));
    PageLatches& st = *it->second;
    SetState& set = st.sets[latch_set(kind)];
    auto tid = std::this_thread::get_id();

    if (latch_is_shared(kind)) {
        auto pos = std::find(set.shared.begin(), set.shared.end(), tid);
        if (pos == set.shared.end())
            throw ProtocolViolation(std::string("release of unheld latch: ") +
                                    latch_kind_name(kind));
        set.shared.erase(pos);
    } else {
        if (!set.excl_held || set.excl_owner != tid)
            throw ProtocolViolation(std::string("release of unheld latch: ") +
                                    latch_kind_name(kind));
        set.excl_held = false;
    }
    counters_.releases[size_t(kind)]++;
    log_locked(page, kind, LatchEvent::What::released);
    st.cv.notify_all();
    maybe_reclaim_locked(page);
}

bool LatchTable::holds(PageNum page, LatchKind kind) const {
    std::unique_lock lk(mu_);
    auto it = pages_.find(page);
    if (it == pages_.end()) return false;
    const SetState& set = it->second->sets[latch_set(kind)];
    auto tid = std::this_thread::get_id();
    if (latch_is_shared(kind))
        return std::find(set.shared.begin(), set.shared.end(), tid) != set.shared.end();
    return set.excl_held && set.excl_owner == tid;
}

bool LatchTable::page_idle(PageNum page) const {
    std::unique_lock lk(mu_);
    auto it = pages_.find(page);
    return it == pages_.end() || it->second->idle();
}

size_t LatchTable::live_pages() const {
    std::unique_lock lk(mu_);
    return pages_.size();
}

LatchCounters LatchTable::counters() const {
    std::unique_lock lk(mu_);
    return counters_;
}

uint64_t LatchTable::exclusive_overlap_anomalies() const {
    std::unique_lock lk(mu_);
    return overlap_anomalies_;
}

void LatchTable::enable_event_log(bool on) {
    std::unique_lock lk(mu_);
    log_events_ = on;
}

std::vector<LatchEvent> LatchTable::drain_events() {
    std::unique_lock lk(mu_);
    std::vector<LatchEvent> out;
    out.swap(events_);
    return out;
}

}  // namespace blink
