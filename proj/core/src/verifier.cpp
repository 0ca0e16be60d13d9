#include "blink/verifier.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "blink/errors.hpp"

namespace blink {

// ---------------------------------------------------------------------------
// Audit

namespace {

struct FenceImage {
    std::string bytes;
    bool infinite = false;
};

FenceImage fence_of(const Node& n) {
    KeyRef k = n.key(uint16_t(n.count() - 1));
    return FenceImage{std::string(k.bytes), k.infinite};
}

bool fence_less(const FenceImage& a, const FenceImage& b) {
    if (a.infinite) return false;
    if (b.infinite) return true;
    return compare_keys(a.bytes, b.bytes) < 0;
}

// Reads one node, optionally under a coupled ReadLock handed over from the
// previous node of the walk.
class Walker {
public:
    Walker(BlinkTree& tree, bool latched) : tree_(tree), latched_(latched) {}
    ~Walker() { drop(); }

    Node moveto(PageNum page) {
        if (latched_) {
            if (tree_.options().access_intent_enabled)
                tree_.latches().acquire(page, LatchKind::AccessIntent);
            drop();
            tree_.latches().acquire(page, LatchKind::ReadLock);
            if (tree_.options().access_intent_enabled)
                tree_.latches().release(page, LatchKind::AccessIntent);
            held_ = page;
            has_latch_ = true;
        }
        return tree_.read_node(page);
    }

    void drop() {
        if (has_latch_) {
            tree_.latches().release(held_, LatchKind::ReadLock);
            has_latch_ = false;
        }
    }

private:
    BlinkTree& tree_;
    bool latched_;
    bool has_latch_ = false;
    PageNum held_ = 0;
};

}  // namespace

AuditReport audit(BlinkTree& tree, bool quiesced) {
    AuditReport rep;
    PageStore& store = tree.store();
    PageNum top = store.top_page();
    rep.total_pages = size_t(top) + 1;
    std::set<PageNum> live;
    bool corruption = false;
    size_t step_limit = 4 * (size_t(top) + 2);

    uint16_t root_level = 0;
    try {
        root_level = tree.read_node(tree.root()).level();
    } catch (const CorruptionError& e) {
        rep.violations.push_back(std::string("root: ") + e.what());
        corruption = true;
    } catch (const OutOfRangeError& e) {
        rep.violations.push_back(std::string("root: ") + e.what());
        corruption = true;
    }

    for (int lvl = root_level; lvl >= 0 && !corruption; --lvl) {
        size_t nodes = 0;
        try {
            Walker walker(tree, !quiesced);
            // leftmost node of this level: follow first live slots downward
            PageNum page = tree.root();
            Node n = walker.moveto(page);
            while (n.level() > lvl) {
                uint16_t s = 0;
                while (s < n.count() && n.key_deleted(s)) ++s;
                if (s == n.count())
                    throw CorruptionError("no live slot while descending to level " +
                                          std::to_string(lvl));
                page = n.value(s);
                n = walker.moveto(page);
            }

            FenceImage prev;
            bool have_prev = false;
            bool redirected = false;
            size_t steps = 0;
            for (;;) {
                if (++steps > step_limit)
                    throw CorruptionError("link walk does not terminate (cycle?)");
                if (n.deleted()) {
                    if (quiesced)
                        throw CorruptionError("deleted node " + std::to_string(page) +
                                              " reachable on level " + std::to_string(lvl));
                    // transient: follow the left redirect and resume
                    page = n.link();
                    n = walker.moveto(page);
                    redirected = true;
                    continue;
                }
                if (n.level() != lvl)
                    throw CorruptionError("page " + std::to_string(page) + " has level " +
                                          std::to_string(n.level()) + ", expected " +
                                          std::to_string(lvl));
                FenceImage fence = fence_of(n);
                if (have_prev && !fence_less(prev, fence)) {
                    if (quiesced || !redirected)
                        throw CorruptionError("fence keys not strictly increasing at page " +
                                              std::to_string(page));
                    // after a redirect we may legitimately revisit ground
                } else {
                    if (have_prev) {
                        KeyRef first = n.key(0);
                        if (!first.infinite && compare_keys(first.bytes, prev.bytes) <= 0 &&
                            quiesced)
                            throw CorruptionError("key below the previous fence at page " +
                                                  std::to_string(page));
                    }
                    prev = fence;
                    have_prev = true;
                    ++nodes;
                    live.insert(page);

                    if (quiesced && lvl > 0) {
                        for (uint16_t s = 0; s < n.count(); ++s) {
                            if (n.key_deleted(s)) continue;
                            PageNum child = n.value(s);
                            try {
                                Node c = tree.read_node(child);
                                if (c.level() != lvl - 1)
                                    rep.violations.push_back(
                                        "child " + std::to_string(child) + " of page " +
                                        std::to_string(page) + " has wrong level");
                                else if (c.deleted())
                                    rep.violations.push_back("live slot references deleted child " +
                                                             std::to_string(child));
                                else {
                                    FenceImage cf = fence_of(c);
                                    KeyRef sk = n.key(s);
                                    bool same = sk.infinite ? cf.infinite
                                                            : (!cf.infinite &&
                                                               compare_keys(cf.bytes, sk.bytes) ==
                                                                   0);
                                    if (!same)
                                        rep.violations.push_back(
                                            "child " + std::to_string(child) +
                                            " fence does not match parent slot in page " +
                                            std::to_string(page));
                                }
                            } catch (const CorruptionError&) {
                                // the child's own level walk reports it
                            } catch (const OutOfRangeError&) {
                                rep.violations.push_back("slot in page " + std::to_string(page) +
                                                         " references an unallocated page");
                            }
                        }
                    }
                }
                redirected = false;
                if (n.count() > 0 && n.is_sentinel(uint16_t(n.count() - 1))) {
                    if (n.link() != 0)
                        throw CorruptionError("rightmost node " + std::to_string(page) +
                                              " has a right link");
                    break;
                }
                if (n.link() == 0)
                    throw CorruptionError("node " + std::to_string(page) +
                                          " lacks both sentinel fence and right link");
                page = n.link();
                n = walker.moveto(page);
            }
        } catch (const CorruptionError& e) {
            rep.violations.push_back("level " + std::to_string(lvl) + ": " + e.what());
            corruption = true;
        } catch (const OutOfRangeError& e) {
            // a corrupt slot can point anywhere, including off the file
            rep.violations.push_back("level " + std::to_string(lvl) + ": " + e.what());
            corruption = true;
        }
        rep.nodes_per_level.emplace_back(uint16_t(lvl), nodes);
    }
    rep.live_pages = live.size();

    std::vector<PageNum> free = store.free_list();
    rep.free_pages = free.size();
    for (PageNum p : free)
        if (live.count(p))
            rep.violations.push_back("page " + std::to_string(p) +
                                     " is both reachable and on the free list");

    if (quiesced && !corruption) {
        size_t accounted = 1 + rep.live_pages + rep.free_pages;  // header included
        rep.leaked_pages = rep.total_pages > accounted ? rep.total_pages - accounted : 0;
        if (rep.total_pages < accounted)
            rep.violations.push_back("page accounting exceeds the allocated range");
        if (tree.options().access_intent_enabled && rep.leaked_pages > 0)
            rep.violations.push_back(std::to_string(rep.leaked_pages) +
                                     " page(s) leaked (unreachable, not on the free list)");
    }

    LatchCounters lc = tree.latches().counters();
    rep.access_intent_waits = lc.waits[size_t(LatchKind::AccessIntent)];
    rep.exclusive_overlap_anomalies = tree.latches().exclusive_overlap_anomalies();
    return rep;
}

std::string AuditReport::to_text() const {
    std::ostringstream os;
    os << "audit report\n";
    for (auto& [lvl, n] : nodes_per_level)
        os << "  level " << lvl << ": " << n << " node(s)\n";
    os << "  pages: total=" << total_pages << " live=" << live_pages << " free=" << free_pages
       << " leaked=" << leaked_pages << "\n";
    os << "  access-intent waits: " << access_intent_waits << "\n";
    os << "  exclusive overlap anomalies: " << exclusive_overlap_anomalies << "\n";
    os << "violations: " << violations.size() << "\n";
    for (auto& v : violations) os << "  ! " << v << "\n";
    return os.str();
}

std::string AuditReport::to_kv() const {
    std::ostringstream os;
    for (auto& [lvl, n] : nodes_per_level) os << "nodes_level_" << lvl << "=" << n << "\n";
    os << "pages_total=" << total_pages << "\npages_live=" << live_pages
       << "\npages_free=" << free_pages << "\npages_leaked=" << leaked_pages << "\n";
    os << "violations=" << violations.size() << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Oracle log

namespace {

std::string to_hex(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

std::string from_hex(const std::string& s) {
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw CorruptionError("bad hex digit in oracle log");
    };
    if (s.size() % 2) throw CorruptionError("odd hex length in oracle log");
    std::string out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) out.push_back(char(nib(s[i]) << 4 | nib(s[i + 1])));
    return out;
}

}  // namespace

void OracleLog::append(OracleRecord rec) {
    std::lock_guard lk(*mu_);
    records_.push_back(std::move(rec));
}

std::string OracleLog::serialize() const {
    std::ostringstream os;
    for (const auto& r : records_)
        os << r.worker << ' ' << r.op << ' ' << to_hex(r.key) << ' ' << r.value << ' ' << r.result
           << '\n';
    return os.str();
}

OracleLog OracleLog::parse(const std::string& text) {
    OracleLog log;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        OracleRecord r;
        std::string keyhex;
        if (!(ls >> r.worker >> r.op >> keyhex >> r.value >> r.result))
            throw CorruptionError("malformed oracle log line: " + line);
        r.key = from_hex(keyhex);
        log.records_.push_back(std::move(r));
    }
    return log;
}

std::map<std::string, Value> oracle_replay(const OracleLog& log) {
    std::map<std::string, Value> m;
    for (const auto& r : log.records()) {
        if (r.op == 'p')
            m[r.key] = r.value;
        else if (r.op == 'r')
            m.erase(r.key);
    }
    return m;
}

std::vector<std::string> check_log_consistency(const OracleLog& log) {
    std::vector<std::string> errors;
    std::unordered_map<std::string, uint32_t> writer;
    std::unordered_map<std::string, std::unordered_set<Value>> ever;
    for (const auto& r : log.records()) {
        if (r.op == 'p' || r.op == 'r') {
            auto [it, inserted] = writer.emplace(r.key, r.worker);
            if (!inserted && it->second != r.worker) {
                errors.push_back("key " + to_hex(r.key) + " mutated by two workers");
                return errors;
            }
            if (r.op == 'p') ever[r.key].insert(r.value);
        }
    }

    std::unordered_map<std::string, Value> current;
    std::unordered_set<std::string> present;
    size_t line = 0;
    for (const auto& r : log.records()) {
        ++line;
        if (r.op == 'p') {
            current[r.key] = r.value;
            present.insert(r.key);
        } else if (r.op == 'r') {
            present.erase(r.key);
        } else if (r.op == 'g') {
            bool absent = r.result == "absent";
            auto w = writer.find(r.key);
            if (w == writer.end()) {
                if (!absent)
                    errors.push_back("record " + std::to_string(line) +
                                     ": get observed a value for a never-written key");
            } else if (w->second == r.worker) {
                bool have = present.count(r.key) != 0;
                if (absent != !have || (!absent && current[r.key] != r.value))
                    errors.push_back("record " + std::to_string(line) +
                                     ": owner get inconsistent with its own history");
            } else if (!absent && !ever[r.key].count(r.value)) {
                errors.push_back("record " + std::to_string(line) +
                                 ": get observed a value never stored for the key");
            }
        }
    }
    return errors;
}

// ---------------------------------------------------------------------------
// Stress driver

std::string stress_key(uint32_t worker, uint32_t index) {
    char buf[32];
    int n = std::snprintf(buf, sizeof buf, "w%03u-k%06u", worker, index);
    std::string key(buf, size_t(n));
    key.append(index % 4, 'x');  // exercise variable key lengths
    return key;
}

StressResult stress(BlinkTree& tree, const StressOptions& opts) {
    StressResult result;
    auto start = std::chrono::steady_clock::now();

    std::vector<std::thread> workers;
    std::vector<std::string> worker_errors(opts.workers);
    for (uint32_t w = 0; w < opts.workers; ++w) {
        workers.emplace_back([&, w] {
            try {
                std::mt19937_64 rng(opts.seed * 0x9E3779B97F4A7C15ull + w + 1);
                for (uint32_t i = 0; i < opts.ops_per_worker; ++i) {
                    int roll = int(rng() % 100);
                    uint32_t idx = uint32_t(rng() % opts.keys_per_worker);
                    if (roll < opts.mix.put_pct) {
                        std::string key = stress_key(w, idx);
                        Value v = rng();
                        tree.put(key, v);
                        result.log.append({w, 'p', key, v, "ok"});
                    } else if (roll < opts.mix.put_pct + opts.mix.remove_pct) {
                        std::string key = stress_key(w, idx);
                        bool removed = tree.remove(key);
                        result.log.append({w, 'r', key, 0, removed ? "deleted" : "not_found"});
                    } else if (roll < opts.mix.put_pct + opts.mix.remove_pct + opts.mix.get_pct) {
                        uint32_t owner = uint32_t(rng() % opts.workers);
                        std::string key = stress_key(owner, idx);
                        auto v = tree.get(key);
                        result.log.append(
                            {w, 'g', key, v ? *v : 0, v ? "found" : "absent"});
                    } else {
                        uint32_t owner = uint32_t(rng() % opts.workers);
                        uint32_t lo = idx;
                        uint32_t hi = std::min(lo + 32, opts.keys_per_worker);
                        std::string low = stress_key(owner, lo);
                        std::string high = stress_key(owner, hi);
                        std::string prev;
                        tree.scan(low, high, false, [&](std::string_view k, Value) {
                            if (!prev.empty() && compare_keys(prev, k) >= 0)
                                throw CorruptionError("scan emitted keys out of order");
                            prev.assign(k);
                            return true;
                        });
                    }
                }
            } catch (const std::exception& e) {
                worker_errors[w] = e.what();
            }
        });
    }
    for (auto& t : workers) t.join();
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.ops_per_second =
        elapsed > 0 ? double(opts.workers) * opts.ops_per_worker / elapsed : 0.0;

    for (uint32_t w = 0; w < opts.workers; ++w)
        if (!worker_errors[w].empty())
            result.mismatches.push_back("worker " + std::to_string(w) + ": " + worker_errors[w]);

    result.report = audit(tree, /*quiesced=*/true);
    result.access_intent_waits = result.report.access_intent_waits;

    // final-state oracle: replayed log vs a full tree scan
    auto expected = oracle_replay(result.log);
    auto actual = tree.scan_collect();
    if (actual.size() != expected.size())
        result.mismatches.push_back("scan returned " + std::to_string(actual.size()) +
                                    " keys, oracle has " + std::to_string(expected.size()));
    size_t i = 0;
    for (const auto& [k, v] : expected) {
        if (i >= actual.size()) break;
        if (actual[i].first != k || actual[i].second != v) {
            result.mismatches.push_back("mismatch at key " + to_hex(k));
            break;
        }
        ++i;
    }
    for (auto& e : check_log_consistency(result.log)) result.mismatches.push_back(e);
    return result;
}

// ---------------------------------------------------------------------------
// Interleaving harness

InterleavingHarness::InterleavingHarness() = default;

InterleavingHarness::~InterleavingHarness() {
    std::vector<Actor*> all;
    {
        std::lock_guard lk(mu_);
        for (auto& [_, a] : actors_) all.push_back(a.get());
    }
    for (Actor* a : all) {
        {
            std::lock_guard lk(a->mu);
            a->stop = true;
        }
        a->cv.notify_all();
    }
    for (Actor* a : all)
        if (a->thread.joinable()) a->thread.join();
}

InterleavingHarness::Actor& InterleavingHarness::actor(const std::string& name) {
    std::lock_guard lk(mu_);
    auto it = actors_.find(name);
    if (it != actors_.end()) return *it->second;
    auto a = std::make_unique<Actor>();
    Actor* raw = a.get();
    raw->thread = std::thread([raw] {
        for (;;) {
            std::pair<std::shared_ptr<Step>, std::function<void()>> job;
            {
                std::unique_lock lk(raw->mu);
                raw->cv.wait(lk, [raw] { return raw->stop || !raw->queue.empty(); });
                if (raw->queue.empty()) return;
                job = std::move(raw->queue.front());
                raw->queue.pop_front();
            }
            try {
                job.second();
            } catch (...) {
                job.first->error_ = std::current_exception();
            }
            {
                std::lock_guard lk(job.first->mu_);
                job.first->done_.store(true, std::memory_order_release);
            }
            job.first->cv_.notify_all();
        }
    });
    return *actors_.emplace(name, std::move(a)).first->second;
}

std::shared_ptr<InterleavingHarness::Step> InterleavingHarness::run(const std::string& name,
                                                                    std::function<void()> fn) {
    Actor& a = actor(name);
    auto step = std::make_shared<Step>();
    {
        std::lock_guard lk(a.mu);
        a.queue.emplace_back(step, std::move(fn));
    }
    a.cv.notify_all();
    return step;
}

void InterleavingHarness::run_sync(const std::string& name, std::function<void()> fn,
                                   std::chrono::milliseconds grace) {
    auto step = run(name, std::move(fn));
    if (!step->wait(grace)) throw std::runtime_error("actor step did not complete in time");
}

bool InterleavingHarness::Step::wait(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    if (!cv_.wait_for(lk, timeout, [this] { return done_.load(); })) return false;
    if (error_) std::rethrow_exception(error_);
    return true;
}

bool InterleavingHarness::still_blocked(const std::shared_ptr<Step>& step,
                                        std::chrono::milliseconds grace) {
    std::this_thread::sleep_for(grace);
    return !step->done();
}

}  // namespace blink
