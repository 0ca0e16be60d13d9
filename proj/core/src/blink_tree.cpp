#include "blink/blink_tree.hpp"

#include <cassert>

#include "blink/errors.hpp"

namespace blink {

BlinkTree::BlinkTree(std::unique_ptr<PageStore> store, Options opts)
    : store_(std::move(store)), latches_(opts.latch_capacity), opts_(opts) {
    store_->set_idle_check([this](PageNum p) { return latches_.page_idle(p); });
}

std::unique_ptr<BlinkTree> BlinkTree::create(const std::string& path, PageConfig cfg,
                                             Options opts) {
    auto tree = std::unique_ptr<BlinkTree>(
        new BlinkTree(PageStore::create(path, cfg, opts.cache_pages), opts));
    tree->init_root();
    return tree;
}

std::unique_ptr<BlinkTree> BlinkTree::create_in_memory(PageConfig cfg, Options opts) {
    auto tree = std::unique_ptr<BlinkTree>(
        new BlinkTree(PageStore::create_in_memory(cfg, opts.cache_pages), opts));
    tree->init_root();
    return tree;
}

std::unique_ptr<BlinkTree> BlinkTree::open(const std::string& path, Options opts) {
    auto tree =
        std::unique_ptr<BlinkTree>(new BlinkTree(PageStore::open(path, opts.cache_pages), opts));
    if (tree->store_->root_page() != kRootPage)
        throw CorruptionError("unexpected root page number in header");
    Node root = tree->fetch(kRootPage);
    tree->cached_height_.store(uint16_t(root.level() + 1), std::memory_order_relaxed);
    return tree;
}

void BlinkTree::init_root() {
    PageNum p = store_->alloc_page();
    if (p != kRootPage) throw CorruptionError("root allocation did not yield page 1");
    store_node(kRootPage, Node::make_with_sentinel(store_->config(), 0));
    store_->set_root_page(kRootPage);
    cached_height_.store(1, std::memory_order_relaxed);
}

Node BlinkTree::fetch(PageNum page) {
    return Node::deserialize(store_->read_page(page), store_->config());
}

Node BlinkTree::read_node(PageNum page) { return fetch(page); }

void BlinkTree::store_node(PageNum page, const Node& n) { store_->write_page(page, n.bytes()); }

BlinkTree::Counters BlinkTree::counters() const {
    return Counters{splits_.load(), root_splits_.load(), consolidations_.load()};
}

// Latch-coupled move to `next`: the AccessIntent pin keeps the target
// reclaimable only after we are done with it, while the previous node's
// latch is already released. Mitigation mode drops the pin and the overlap.
void BlinkTree::couple(LatchedNode& cur, PageNum next, LatchKind kind) {
    if (opts_.access_intent_enabled) {
        latches_.acquire(next, LatchKind::AccessIntent);
        latches_.release(cur.page, cur.held);
        latches_.acquire(next, kind);
        latches_.release(next, LatchKind::AccessIntent);
    } else {
        latches_.release(cur.page, cur.held);
        latches_.acquire(next, kind);
    }
    cur.page = next;
    cur.held = kind;
    cur.node = fetch(next);
}

void BlinkTree::release(LatchedNode& ln) { latches_.release(ln.page, ln.held); }

LatchedNode BlinkTree::search_to_level(const KeyRef& key, uint16_t target, AccessMode mode,
                                       SearchStats* stats) {
    for (;;) {
        uint16_t h = cached_height_.load(std::memory_order_relaxed);
        LatchKind root_kind = (mode == AccessMode::write && target + 1 >= h)
                                  ? LatchKind::WriteLock
                                  : LatchKind::ReadLock;
        latches_.acquire(kRootPage, root_kind);
        Node root = fetch(kRootPage);
        uint16_t actual_h = uint16_t(root.level() + 1);
        if (actual_h != h) cached_height_.store(actual_h, std::memory_order_relaxed);
        if (target >= actual_h) {
            latches_.release(kRootPage, root_kind);
            throw OutOfRangeError("search_to_level: level " + std::to_string(target) +
                                  " beyond tree height " + std::to_string(actual_h));
        }
        LatchKind want = (mode == AccessMode::write && target == root.level())
                             ? LatchKind::WriteLock
                             : LatchKind::ReadLock;
        if (want != root_kind) {
            // stale height; retry with the right root latch kind
            latches_.release(kRootPage, root_kind);
            if (stats) stats->restarts++;
            continue;
        }
        LatchedNode cur{kRootPage, root_kind, std::move(root)};
        for (;;) {
            if (cur.node.deleted()) {
                // consolidated away; the link now points to the left node
                if (stats) stats->left_redirects++;
                couple(cur, cur.node.link(), cur.held);
                continue;
            }
            uint16_t cnt = cur.node.count();
            uint16_t s = cur.node.find_slot(key);
            if (s == cnt) {
                // beyond the fence: a concurrent split moved the range right
                PageNum sib = cur.node.link();
                if (sib == 0) {
                    latches_.release(cur.page, cur.held);
                    throw CorruptionError("key beyond the infinite fence");
                }
                if (stats && cur.node.level() < SearchStats::kMaxLevels)
                    stats->right_hops[cur.node.level()]++;
                couple(cur, sib, cur.held);
                continue;
            }
            if (cur.node.level() == target) return cur;

            // Descending: deleted slots partition the key space but their
            // child references are stale, so the next live slot (or the
            // right sibling, for a deleted fence range) covers the key.
            while (s < cnt && cur.node.key_deleted(s)) ++s;
            if (s == cnt) {
                PageNum sib = cur.node.link();
                if (sib == 0) {
                    latches_.release(cur.page, cur.held);
                    throw CorruptionError("deleted fence on a rightmost node");
                }
                if (stats && cur.node.level() < SearchStats::kMaxLevels)
                    stats->right_hops[cur.node.level()]++;
                couple(cur, sib, cur.held);
                continue;
            }
            PageNum child = cur.node.value(s);
            LatchKind kind = (mode == AccessMode::write && cur.node.level() == target + 1)
                                 ? LatchKind::WriteLock
                                 : LatchKind::ReadLock;
            couple(cur, child, kind);
        }
    }
}

std::optional<Value> BlinkTree::get(std::string_view key, SearchStats* stats) {
    check_user_key(key);
    LatchedNode ln = search_to_level(KeyRef{key}, 0, AccessMode::read, stats);
    uint16_t s = ln.node.find_slot(KeyRef{key});
    std::optional<Value> result;
    if (s < ln.node.count() && ln.node.slot_matches(s, KeyRef{key}) && !ln.node.key_deleted(s))
        result = ln.node.value(s);
    release(ln);
    return result;
}

void BlinkTree::put(std::string_view key, Value value) {
    check_user_key(key);
    if (key.size() > max_user_key_len(store_->config()))
        throw InvalidKeyError("key longer than this page size supports");
    insert(KeyRef{key}, value, 0);
}

bool BlinkTree::remove(std::string_view key) {
    check_user_key(key);
    return erase(KeyRef{key}, 0) == DeleteResult::deleted;
}

void BlinkTree::insert(const KeyRef& key, Value value, uint16_t level) {
    for (;;) {
        LatchedNode ln = search_to_level(key, level, AccessMode::write);
        auto r = ln.node.insert_slot(key, value);
        if (r == Node::InsertResult::no_room) {
            // reclaim deleted-slot space before deciding to split
            ln.node.cleanup();
            r = ln.node.insert_slot(key, value);
        }
        if (r != Node::InsertResult::no_room) {
            store_node(ln.page, ln.node);
            release(ln);
            return;
        }
        split(ln);  // releases the node; restart from the root
    }
}

void BlinkTree::split(LatchedNode& ln) {
    // Serializes with any prior split/consolidation still posting fences.
    latches_.acquire(ln.page, LatchKind::ParentModification);
    if (ln.page == kRootPage) {
        split_root(ln);
        latches_.release(kRootPage, LatchKind::ParentModification);
        return;
    }
    PageConfig cfg = store_->config();
    Node& n = ln.node;
    uint16_t cnt = n.count();
    uint16_t lvl = n.level();
    assert(cnt >= 2);
    uint16_t mid = uint16_t(cnt / 2);

    PageNum right_page = store_->alloc_page();
    Node right = Node::make(cfg, lvl, n.link());
    for (uint16_t i = mid; i < cnt; ++i) right.append_slot(n.key(i), n.value(i), n.key_deleted(i));
    Node left = Node::make(cfg, lvl, right_page);
    for (uint16_t i = 0; i < mid; ++i) left.append_slot(n.key(i), n.value(i), n.key_deleted(i));

    std::string median{n.key(uint16_t(mid - 1)).bytes};
    KeyRef old_fence = n.key(uint16_t(cnt - 1));
    bool fence_inf = old_fence.infinite;
    std::string fence_bytes{old_fence.bytes};

    store_node(right_page, right);  // not yet reachable
    store_node(ln.page, left);
    splits_.fetch_add(1);
    latches_.release(ln.page, LatchKind::WriteLock);

    // Post the new median for the left node, then switch the old fence
    // entry to the new right node; the two may live in different parents.
    insert(KeyRef{median}, ln.page, uint16_t(lvl + 1));
    insert(fence_inf ? KeyRef::inf() : KeyRef{fence_bytes}, right_page, uint16_t(lvl + 1));

    latches_.release(ln.page, LatchKind::ParentModification);
}

// The root page number is fixed, so a root split allocates both children
// and rewrites the root in place as a two-entry branch one level up.
void BlinkTree::split_root(LatchedNode& ln) {
    PageConfig cfg = store_->config();
    Node& n = ln.node;
    uint16_t cnt = n.count();
    uint16_t lvl = n.level();
    assert(cnt >= 2);
    uint16_t mid = uint16_t(cnt / 2);

    PageNum right_page = store_->alloc_page();
    PageNum left_page = store_->alloc_page();
    Node right = Node::make(cfg, lvl, n.link());
    for (uint16_t i = mid; i < cnt; ++i) right.append_slot(n.key(i), n.value(i), n.key_deleted(i));
    Node left = Node::make(cfg, lvl, right_page);
    for (uint16_t i = 0; i < mid; ++i) left.append_slot(n.key(i), n.value(i), n.key_deleted(i));

    Node new_root = Node::make(cfg, uint16_t(lvl + 1));
    new_root.append_slot(n.key(uint16_t(mid - 1)), left_page);
    new_root.append_slot(KeyRef::inf(), right_page);

    store_node(right_page, right);
    store_node(left_page, left);
    store_node(kRootPage, new_root);
    splits_.fetch_add(1);
    root_splits_.fetch_add(1);
    cached_height_.store(uint16_t(lvl + 2), std::memory_order_relaxed);
    latches_.release(kRootPage, LatchKind::WriteLock);
}

BlinkTree::DeleteResult BlinkTree::erase(const KeyRef& key, uint16_t level, bool must_exist) {
    LatchedNode ln = search_to_level(key, level, AccessMode::write);
    uint16_t s = ln.node.find_slot(key);
    bool match = s < ln.node.count() && ln.node.slot_matches(s, key);
    if (!match || ln.node.key_deleted(s)) {
        release(ln);
        if (must_exist)
            throw CorruptionError("parent is missing the child's fence entry");
        return DeleteResult::not_found;
    }
    ln.node.mark_key_deleted(s);
    store_node(ln.page, ln.node);
    if (ln.node.active() == 0 && ln.node.link() != 0)
        consolidate(ln);
    else
        release(ln);
    return DeleteResult::deleted;
}

void BlinkTree::consolidate(LatchedNode& ln) {
    PageConfig cfg = store_->config();
    PageNum left_page = ln.page;
    PageNum right_page = ln.node.link();
    uint16_t lvl = ln.node.level();

    latches_.acquire(right_page, LatchKind::WriteLock);
    Node right = fetch(right_page);
    if (right.deleted()) {
        // the right sibling can only be marked deleted under our WriteLock
        latches_.release(right_page, LatchKind::WriteLock);
        release(ln);
        throw CorruptionError("right sibling already deleted during consolidation");
    }

    std::string old_left_fence{ln.node.key(uint16_t(ln.node.count() - 1)).bytes};
    KeyRef rf = right.key(uint16_t(right.count() - 1));
    bool right_fence_inf = rf.infinite;
    std::string old_right_fence{rf.bytes};

    // The right node's contents, link included, replace the empty left node.
    Node merged = Node::make(cfg, lvl, right.link());
    for (uint16_t i = 0; i < right.count(); ++i)
        merged.append_slot(right.key(i), right.value(i), right.key_deleted(i));
    store_node(left_page, merged);

    right.set_deleted(true);
    right.set_link(left_page);  // redirects latecomers to the consolidated node
    store_node(right_page, right);

    latches_.acquire(left_page, LatchKind::ParentModification);
    latches_.release(left_page, LatchKind::WriteLock);
    latches_.release(right_page, LatchKind::WriteLock);
    consolidations_.fetch_add(1);

    // Fence maintenance at the parent level; the two entries may live in
    // different parent nodes. A fence that is also its parent's upper fence
    // keeps its key bytes forever (the slot delete bit redirects searches).
    erase(KeyRef{old_left_fence}, uint16_t(lvl + 1), /*must_exist=*/true);
    insert(right_fence_inf ? KeyRef::inf() : KeyRef{old_right_fence}, left_page,
           uint16_t(lvl + 1));

    latches_.release(left_page, LatchKind::ParentModification);
    reclaim(right_page);
}

void BlinkTree::reclaim(PageNum page) {
    if (!opts_.access_intent_enabled) return;  // deferred reclamation: never freed
    latches_.acquire(page, LatchKind::NodeDelete);  // drains AccessIntent pins
    latches_.acquire(page, LatchKind::WriteLock);   // drains set-2 holders
    latches_.release(page, LatchKind::WriteLock);
    latches_.release(page, LatchKind::NodeDelete);
    store_->free_page(page);
}

void BlinkTree::scan(const std::optional<std::string>& low, const std::optional<std::string>& high,
                     bool high_inclusive,
                     const std::function<bool(std::string_view, Value)>& emit) {
    KeyRef start = low ? KeyRef{*low} : KeyRef{std::string_view{}};
    LatchedNode ln = search_to_level(start, 0, AccessMode::read);
    std::string last;
    bool have_last = false;
    for (;;) {
        if (ln.node.deleted()) {
            couple(ln, ln.node.link(), LatchKind::ReadLock);
            continue;
        }
        uint16_t cnt = ln.node.count();
        for (uint16_t i = 0; i < cnt; ++i) {
            if (ln.node.is_sentinel(i) || ln.node.key_deleted(i)) continue;
            std::string_view k = ln.node.key(i).bytes;
            if (low && compare_keys(k, *low) < 0) continue;
            if (have_last && compare_keys(k, last) <= 0) continue;  // revisit after redirect
            if (high) {
                auto c = compare_keys(k, *high);
                if (c > 0 || (c == 0 && !high_inclusive)) {
                    release(ln);
                    return;
                }
            }
            if (!emit(k, ln.node.value(i))) {
                release(ln);
                return;
            }
            last.assign(k);
            have_last = true;
        }
        if (cnt > 0 && ln.node.is_sentinel(uint16_t(cnt - 1))) {
            release(ln);
            return;
        }
        PageNum next = ln.node.link();
        if (next == 0) {
            release(ln);
            return;
        }
        couple(ln, next, LatchKind::ReadLock);
    }
}

std::vector<std::pair<std::string, Value>> BlinkTree::scan_collect(
    const std::optional<std::string>& low, const std::optional<std::string>& high,
    bool high_inclusive) {
    std::vector<std::pair<std::string, Value>> out;
    scan(low, high, high_inclusive, [&](std::string_view k, Value v) {
        out.emplace_back(std::string(k), v);
        return true;
    });
    return out;
}

}  // namespace blink
