#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "blink/blink_tree.hpp"

namespace blink {

// ---------------------------------------------------------------------------
// Structural audit

struct AuditReport {
    std::vector<std::pair<uint16_t, size_t>> nodes_per_level;  // root level first
    size_t live_pages = 0;
    size_t free_pages = 0;
    size_t leaked_pages = 0;  // allocated, unreachable, not on the free list
    size_t total_pages = 0;   // header included
    std::vector<std::string> violations;
    uint64_t access_intent_waits = 0;
    uint64_t exclusive_overlap_anomalies = 0;

    bool passed() const { return violations.empty(); }
    std::string to_text() const;
    std::string to_kv() const;  // machine-readable key=value lines
};

// Walks every level left to right plus the free list and reports every
// structural invariant violation. Quiesced mode (no concurrent mutators)
// adds parent/child containment and page-conservation checks; otherwise
// the walk latch-couples with ReadLock and stays read-only.
AuditReport audit(BlinkTree& tree, bool quiesced);

// ---------------------------------------------------------------------------
// Reference oracle

struct OracleRecord {
    uint32_t worker = 0;
    char op = 'p';  // 'p' put, 'r' remove, 'g' get
    std::string key;
    Value value = 0;        // put: stored value; get: observed value
    std::string result;     // "ok", "deleted", "not_found", "absent", "found"
};

class OracleLog {
public:
    void append(OracleRecord rec);
    const std::vector<OracleRecord>& records() const { return records_; }
    std::string serialize() const;  // line-delimited, key in hex
    static OracleLog parse(const std::string& text);

private:
    std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
    std::vector<OracleRecord> records_;
};

// Replays puts and removes into a reference sorted map.
std::map<std::string, Value> oracle_replay(const OracleLog& log);

// Per-key single-writer consistency: a get by the key's writer must observe
// the writer's current value; a get by anyone else must observe a value the
// writer stored at some point, or absence.
std::vector<std::string> check_log_consistency(const OracleLog& log);

// ---------------------------------------------------------------------------
// Stress driver

struct StressMix {
    int put_pct = 40;
    int remove_pct = 20;
    int get_pct = 35;
    int scan_pct = 5;
};

struct StressOptions {
    uint32_t workers = 1;
    uint32_t ops_per_worker = 10000;
    StressMix mix;
    uint64_t seed = 1;
    uint32_t keys_per_worker = 4096;
};

struct StressResult {
    OracleLog log;
    AuditReport report;
    std::vector<std::string> mismatches;  // oracle/scan disagreements
    uint64_t access_intent_waits = 0;
    double ops_per_second = 0.0;

    bool passed() const { return report.passed() && mismatches.empty(); }
};

// Deterministic per-worker op streams; each worker mutates a disjoint key
// partition while gets and scans roam the whole space. Runs a quiesced
// audit and the oracle comparison on completion.
StressResult stress(BlinkTree& tree, const StressOptions& opts);

// Key for worker `w`, index `i`, as used by the stress partitioning.
std::string stress_key(uint32_t worker, uint32_t index);

// ---------------------------------------------------------------------------
// Scripted interleavings

// Drives named actors (one thread each) through latch and tree steps so a
// test can assert exactly which acquisitions are granted or blocked.
class InterleavingHarness {
public:
    class Step {
    public:
        bool done() const { return done_.load(std::memory_order_acquire); }
        // Waits up to `timeout` for completion; rethrows the step's exception.
        bool wait(std::chrono::milliseconds timeout);

    private:
        friend class InterleavingHarness;
        std::atomic<bool> done_{false};
        std::exception_ptr error_;
        std::mutex mu_;
        std::condition_variable cv_;
    };

    InterleavingHarness();
    ~InterleavingHarness();

    // Queues `fn` on the named actor's thread; steps on one actor run in
    // submission order.
    std::shared_ptr<Step> run(const std::string& actor, std::function<void()> fn);

    // Convenience: run and require completion within the grace period.
    void run_sync(const std::string& actor, std::function<void()> fn,
                  std::chrono::milliseconds grace = std::chrono::milliseconds(2000));

    // True when the step is still pending after the grace period (the actor
    // is blocked inside it).
    static bool still_blocked(const std::shared_ptr<Step>& step,
                              std::chrono::milliseconds grace = std::chrono::milliseconds(50));

private:
    struct Actor {
        std::thread thread;
        std::deque<std::pair<std::shared_ptr<Step>, std::function<void()>>> queue;
        std::mutex mu;
        std::condition_variable cv;
        bool stop = false;
    };
    Actor& actor(const std::string& name);

    std::mutex mu_;
    std::map<std::string, std::unique_ptr<Actor>> actors_;
};

}  // namespace blink
