#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <unistd.h>

#include "blink/blink_tree.hpp"
#include "blink/errors.hpp"
#include "blink/verifier.hpp"

using namespace blink;
namespace fs = std::filesystem;

namespace {

struct TempFile {
    std::string path;
    TempFile() {
        path = (fs::temp_directory_path() /
                ("blink-tree-" + std::to_string(::getpid()) + "-" + std::to_string(counter++)))
                   .string();
    }
    ~TempFile() { std::remove(path.c_str()); }
    static inline int counter = 0;
};

std::string seq_key(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "k%08d", i);
    return buf;
}

void require_clean_audit(BlinkTree& t) {
    auto rep = audit(t, /*quiesced=*/true);
    CAPTURE(rep.to_text());
    REQUIRE(rep.passed());
}

}  // namespace

TEST_CASE("put, get, overwrite, remove") {
    auto t = BlinkTree::create_in_memory(PageConfig{12});
    CHECK_FALSE(t->get("missing").has_value());
    t->put("alpha", 1);
    t->put("beta", 2);
    CHECK(t->get("alpha") == 1);
    CHECK(t->get("beta") == 2);
    t->put("alpha", 10);
    CHECK(t->get("alpha") == 10);
    CHECK(t->remove("alpha"));
    CHECK_FALSE(t->remove("alpha"));
    CHECK_FALSE(t->get("alpha").has_value());
    CHECK(t->get("beta") == 2);
    require_clean_audit(*t);
}

TEST_CASE("key validation") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    CHECK_THROWS_AS(t->put("", 1), InvalidKeyError);
    CHECK_THROWS_AS(t->put(std::string(221, 'a'), 1), InvalidKeyError);  // 220 max at 512B pages
    CHECK_NOTHROW(t->put(std::string(220, 'a'), 1));
    CHECK_THROWS_AS(t->get(""), InvalidKeyError);
}

TEST_CASE("search_to_level rejects out-of-range levels") {
    auto t = BlinkTree::create_in_memory(PageConfig{12});
    t->put("a", 1);
    CHECK(t->height() == 1);
    CHECK_THROWS_AS(t->search_to_level(KeyRef{"a"}, 1, AccessMode::read), OutOfRangeError);
    auto ln = t->search_to_level(KeyRef{"a"}, 0, AccessMode::read);
    CHECK(ln.node.level() == 0);
    t->release(ln);
}

TEST_CASE("first root split") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    int i = 0;
    while (t->counters().root_splits == 0) {
        t->put(seq_key(i), Value(i + 1));
        ++i;
    }
    CHECK(t->height() == 2);

    // derived expectation: the root is a 2-entry branch over two leaves that
    // partition the keys at the pre-split median, chained left -> right
    Node root = t->read_node(t->root());
    REQUIRE(root.count() == 2);
    CHECK(root.level() == 1);
    CHECK(root.link() == 0);
    CHECK(root.is_sentinel(1));
    PageNum lp = root.value(0), rp = root.value(1);
    Node left = t->read_node(lp), right = t->read_node(rp);
    CHECK(left.level() == 0);
    CHECK(right.level() == 0);
    CHECK(left.link() == rp);
    CHECK(right.link() == 0);
    // left's fence slot carries the same key as the root separator
    CHECK(left.key(uint16_t(left.count() - 1)).bytes == root.key(0).bytes);
    CHECK(right.is_sentinel(uint16_t(right.count() - 1)));
    // no key lost, none duplicated
    for (int j = 0; j < i; ++j) CHECK(t->get(seq_key(j)) == Value(j + 1));
    CHECK(t->scan_collect().size() == size_t(i));
    require_clean_audit(*t);
}

TEST_CASE("10k sequential inserts match a sorted-map oracle") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    std::map<std::string, Value> oracle;
    for (int i = 0; i < 10000; ++i) {
        t->put(seq_key(i), Value(i));
        oracle[seq_key(i)] = Value(i);
    }
    CHECK(t->height() >= 3);
    auto got = t->scan_collect();
    REQUIRE(got.size() == oracle.size());
    auto it = oracle.begin();
    for (auto& [k, v] : got) {
        CHECK(k == it->first);
        CHECK(v == it->second);
        ++it;
    }
    require_clean_audit(*t);
}

TEST_CASE("random op fuzz against std::map") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    std::map<std::string, Value> oracle;
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 30000; ++i) {
        std::string k = "key-" + std::to_string(rng() % 2000);
        int roll = int(rng() % 100);
        if (roll < 50) {
            Value v = rng();
            t->put(k, v);
            oracle[k] = v;
        } else if (roll < 75) {
            bool removed = t->remove(k);
            CHECK(removed == (oracle.erase(k) > 0));
        } else {
            auto got = t->get(k);
            auto it = oracle.find(k);
            if (it == oracle.end())
                CHECK_FALSE(got.has_value());
            else
                CHECK(got == it->second);
        }
        if (i % 5000 == 4999) require_clean_audit(*t);
    }
    auto got = t->scan_collect();
    REQUIRE(got.size() == oracle.size());
    auto it = oracle.begin();
    for (auto& [k, v] : got) {
        CHECK(k == it->first);
        CHECK(v == it->second);
        ++it;
    }
}

TEST_CASE("delete-all consolidates and recycles pages") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    const int n = 3000;
    for (int i = 0; i < n; ++i) t->put(seq_key(i), Value(i));
    CHECK(t->height() >= 2);
    PageNum grown_top = t->store().top_page();

    for (int i = 0; i < n; ++i) REQUIRE(t->remove(seq_key(i)));
    CHECK(t->counters().consolidations > 0);
    CHECK(t->store().stats().frees > 0);
    for (int i = 0; i < n; ++i) CHECK_FALSE(t->get(seq_key(i)).has_value());
    CHECK(t->scan_collect().empty());
    require_clean_audit(*t);

    // page conservation: live + free covers everything ever allocated
    auto rep = audit(*t, true);
    CHECK(rep.leaked_pages == 0);
    CHECK(rep.live_pages + rep.free_pages + 1 == rep.total_pages);  // + header page

    // refill reuses freed pages instead of growing the file
    size_t before = t->store().stats().allocs_from_free_list;
    for (int i = 0; i < n; ++i) t->put(seq_key(i), Value(i + 7));
    CHECK(t->store().stats().allocs_from_free_list > before);
    CHECK(t->store().top_page() >= grown_top);
    for (int i = 0; i < n; ++i) CHECK(t->get(seq_key(i)) == Value(i + 7));
    require_clean_audit(*t);
}

TEST_CASE("scan ranges") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    for (int i = 0; i < 100; ++i) t->put(seq_key(i), Value(i));
    auto all = t->scan_collect();
    CHECK(all.size() == 100);

    auto mid = t->scan_collect(seq_key(10), seq_key(19));
    REQUIRE(mid.size() == 10);
    CHECK(mid.front().first == seq_key(10));
    CHECK(mid.back().first == seq_key(19));

    auto half_open = t->scan_collect(seq_key(10), seq_key(19), /*high_inclusive=*/false);
    CHECK(half_open.size() == 9);

    auto none = t->scan_collect(std::string("zzz"), std::nullopt);
    CHECK(none.empty());

    // early stop from the callback
    int seen = 0;
    t->scan(std::nullopt, std::nullopt, true, [&](std::string_view, Value) {
        return ++seen < 5;
    });
    CHECK(seen == 5);

    // deleted keys never appear
    t->remove(seq_key(11));
    CHECK(t->scan_collect(seq_key(10), seq_key(19)).size() == 9);
}

TEST_CASE("persistence round trip") {
    TempFile f;
    {
        auto t = BlinkTree::create(f.path, PageConfig{10});
        for (int i = 0; i < 2000; ++i) t->put(seq_key(i), Value(i * 3));
        for (int i = 0; i < 500; ++i) t->remove(seq_key(i * 4));
    }
    auto t = BlinkTree::open(f.path);
    CHECK(t->height() >= 2);
    for (int i = 0; i < 2000; ++i) {
        if (i % 4 == 0 && i / 4 < 500)
            CHECK_FALSE(t->get(seq_key(i)).has_value());
        else
            CHECK(t->get(seq_key(i)) == Value(i * 3));
    }
    require_clean_audit(*t);
    t->put("after-reopen", 42);
    CHECK(t->get("after-reopen") == 42);
}

TEST_CASE("open rejects a missing file") {
    CHECK_THROWS_AS(BlinkTree::open("/nonexistent/nope"), IncompatibleFileError);
}

TEST_CASE("mitigation mode leaks consolidated pages instead of freeing") {
    TreeOptions opts;
    opts.access_intent_enabled = false;
    auto t = BlinkTree::create_in_memory(PageConfig{9}, opts);
    const int n = 2000;
    for (int i = 0; i < n; ++i) t->put(seq_key(i), Value(i));
    for (int i = 0; i < n; ++i) REQUIRE(t->remove(seq_key(i)));
    CHECK(t->counters().consolidations > 0);
    CHECK(t->store().stats().frees == 0);
    auto rep = audit(*t, true);
    CHECK(rep.leaked_pages == t->counters().consolidations);
    // a leak is only a violation when reclamation is enabled
    CAPTURE(rep.to_text());
    CHECK(rep.passed());
}

TEST_CASE("every latch is released on every path") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    for (int i = 0; i < 500; ++i) t->put(seq_key(i), Value(i));
    for (int i = 0; i < 250; ++i) t->remove(seq_key(i * 2));
    t->scan_collect();
    CHECK_THROWS_AS(t->put("", 0), InvalidKeyError);
    CHECK(t->latches().live_pages() == 0);
    auto c = t->latches().counters();
    for (size_t k = 0; k < kLatchKinds; ++k) CHECK(c.acquisitions[k] == c.releases[k]);
}

TEST_CASE("4-thread smoke with disjoint key ranges") {
    auto t = BlinkTree::create_in_memory(PageConfig{9});
    constexpr int kThreads = 4, kPer = 3000;
    std::vector<std::thread> ths;
    for (int w = 0; w < kThreads; ++w) {
        ths.emplace_back([&, w] {
            for (int i = 0; i < kPer; ++i) {
                std::string k = "w" + std::to_string(w) + "-" + seq_key(i);
                t->put(k, Value(w * 1000000 + i));
                if (i % 3 == 0) t->remove(k);
            }
        });
    }
    for (auto& th : ths) th.join();
    require_clean_audit(*t);
    for (int w = 0; w < kThreads; ++w) {
        for (int i = 0; i < kPer; ++i) {
            std::string k = "w" + std::to_string(w) + "-" + seq_key(i);
            auto got = t->get(k);
            if (i % 3 == 0)
                CHECK_FALSE(got.has_value());
            else
                CHECK(got == Value(w * 1000000 + i));
        }
    }
    CHECK(t->latches().exclusive_overlap_anomalies() == 0);
}
