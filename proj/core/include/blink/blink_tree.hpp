#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blink/latch_manager.hpp"
#include "blink/page_format.hpp"
#include "blink/page_store.hpp"

namespace blink {

enum class AccessMode { read, write };

// Per-call traversal statistics, mainly for the verification harness.
struct SearchStats {
    static constexpr size_t kMaxLevels = 32;

    uint32_t restarts = 0;
    uint32_t left_redirects = 0;
    std::array<uint32_t, kMaxLevels> right_hops{};  // indexed by tree level

    uint32_t total_right_hops() const {
        uint32_t t = 0;
        for (auto h : right_hops) t += h;
        return t;
    }
};

// A node image together with the set-2 latch protecting it. The image was
// read after the latch grant.
struct LatchedNode {
    PageNum page;
    LatchKind held;  // ReadLock or WriteLock
    Node node;
};

struct TreeOptions {
    // When false, searches use direct set-2 acquisition without the
    // AccessIntent coupling latch and consolidated pages are never
    // reclaimed (deferred-reclamation mode).
    bool access_intent_enabled = true;
    size_t cache_pages = kDefaultCachePages;
    size_t latch_capacity = 65536;
};

// Persistent concurrent B-link tree. All public operations are safe from
// any number of threads on one shared instance, and every call returns
// with all of its latches released.
class BlinkTree {
public:
    using Options = TreeOptions;

    struct Counters {
        uint64_t splits = 0;
        uint64_t root_splits = 0;
        uint64_t consolidations = 0;
    };

    static std::unique_ptr<BlinkTree> create(const std::string& path, PageConfig cfg,
                                             TreeOptions opts = {});
    static std::unique_ptr<BlinkTree> create_in_memory(PageConfig cfg, TreeOptions opts = {});
    static std::unique_ptr<BlinkTree> open(const std::string& path, TreeOptions opts = {});

    std::optional<Value> get(std::string_view key, SearchStats* stats = nullptr);
    void put(std::string_view key, Value value);
    bool remove(std::string_view key);

    // Ordered visit of active keys in [low, high] (or [low, high) when
    // high_inclusive is false). Unset bounds are open. Latch-couples
    // rightward along the leaf chain; the callback may return false to stop.
    void scan(const std::optional<std::string>& low, const std::optional<std::string>& high,
              bool high_inclusive, const std::function<bool(std::string_view, Value)>& emit);
    std::vector<std::pair<std::string, Value>> scan_collect(
        const std::optional<std::string>& low = std::nullopt,
        const std::optional<std::string>& high = std::nullopt, bool high_inclusive = true);

    // Descends to the node at target_level whose key range covers `key`,
    // following right-sibling links and deleted-node left redirects, and
    // returns it holding ReadLock (or WriteLock at the target for write
    // mode). The caller releases via release().
    LatchedNode search_to_level(const KeyRef& key, uint16_t target_level, AccessMode mode,
                                SearchStats* stats = nullptr);
    void release(LatchedNode& ln);

    // Insert or update at an arbitrary tree level; level 0 is put().
    void insert(const KeyRef& key, Value value, uint16_t level);
    enum class DeleteResult { deleted, not_found };
    DeleteResult erase(const KeyRef& key, uint16_t level, bool must_exist = false);

    PageStore& store() { return *store_; }
    LatchTable& latches() { return latches_; }
    const Options& options() const { return opts_; }
    PageNum root() const { return kRootPage; }
    uint16_t height() const { return cached_height_.load(std::memory_order_relaxed); }
    Counters counters() const;

    // Unlatched snapshot; for quiesced inspection and tooling only.
    Node read_node(PageNum page);

private:
    BlinkTree(std::unique_ptr<PageStore> store, Options opts);
    void init_root();

    Node fetch(PageNum page);
    void store_node(PageNum page, const Node& n);
    void couple(LatchedNode& cur, PageNum next, LatchKind kind);
    void split(LatchedNode& ln);
    void split_root(LatchedNode& ln);
    void consolidate(LatchedNode& ln);
    void reclaim(PageNum page);

    std::unique_ptr<PageStore> store_;
    LatchTable latches_;
    Options opts_;
    std::atomic<uint16_t> cached_height_{1};
    std::atomic<uint64_t> splits_{0};
    std::atomic<uint64_t> root_splits_{0};
    std::atomic<uint64_t> consolidations_{0};
};

}  // namespace blink
