#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "blink/page_format.hpp"

namespace blink {

inline constexpr PageNum kHeaderPage = 0;
inline constexpr PageNum kRootPage = 1;
inline constexpr size_t kDefaultCachePages = 65536;

// File header, stored in page 0:
//   0  "BLNK"        magic
//   4  u8            format version (1)
//   5  u8[3]         reserved
//   8  u32           page_bits
//   16 u64           root_page
//   24 u64           top_page   (highest allocated page number)
//   32 u64           free_head  (first free-list entry, 0 = empty)
// A free page carries the next free page number in its first 8 bytes.
struct FileHeader {
    uint32_t page_bits = 0;
    PageNum root_page = 0;
    PageNum top_page = 0;
    PageNum free_head = 0;
};

// Owns the backing file (or an in-memory image), the bounded page cache,
// and the free list. Write-through: write_page is durable before it returns.
// Node-level exclusion is the caller's business; the store only serializes
// its own metadata.
class PageStore {
public:
    struct Stats {
        uint64_t allocs = 0;
        uint64_t allocs_from_free_list = 0;
        uint64_t frees = 0;
        uint64_t reads = 0;
        uint64_t writes = 0;
        uint64_t cache_hits = 0;
    };

    static std::unique_ptr<PageStore> create(const std::string& path, PageConfig cfg,
                                             size_t cache_pages = kDefaultCachePages);
    static std::unique_ptr<PageStore> create_in_memory(PageConfig cfg,
                                                       size_t cache_pages = kDefaultCachePages);
    static std::unique_ptr<PageStore> open(const std::string& path,
                                           size_t cache_pages = kDefaultCachePages);

    ~PageStore();
    PageStore(const PageStore&) = delete;
    PageStore& operator=(const PageStore&) = delete;

    PageConfig config() const { return cfg_; }
    size_t page_size() const { return cfg_.page_size(); }
    FileHeader header() const;
    PageNum root_page() const;
    void set_root_page(PageNum page);
    PageNum top_page() const;

    // Pops the free list head, else extends the file. The returned page
    // image is zeroed.
    PageNum alloc_page();

    // Links the page into the free list. The caller must have finished the
    // NodeDelete + WriteLock drain; with an idle check installed this is
    // verified. Double frees raise CorruptionError.
    void free_page(PageNum page);

    std::vector<uint8_t> read_page(PageNum page);
    void write_page(PageNum page, std::span<const uint8_t> bytes);

    bool is_free(PageNum page) const;
    std::vector<PageNum> free_list() const;  // chain order
    Stats stats() const;

    // Called with the page number before it is linked into the free list;
    // must return true when all latch state for the page is idle.
    void set_idle_check(std::function<bool(PageNum)> check);

private:
    struct Backing;
    PageStore(PageConfig cfg, size_t cache_pages, std::unique_ptr<Backing> backing);

    void write_header_locked();
    void load_free_list_locked();
    void backing_write_locked(PageNum page, const uint8_t* data);
    void backing_read_locked(PageNum page, uint8_t* data);
    void cache_put_locked(PageNum page, std::vector<uint8_t> bytes);
    void check_live_locked(PageNum page, const char* what) const;

    PageConfig cfg_;
    size_t cache_capacity_;
    std::unique_ptr<Backing> backing_;
    FileHeader hdr_;
    std::unordered_set<PageNum> free_set_;
    std::vector<PageNum> free_chain_;  // mirrors the on-disk chain, head first

    // LRU cache: most recent at the front.
    std::list<std::pair<PageNum, std::vector<uint8_t>>> lru_;
    std::unordered_map<PageNum, decltype(lru_)::iterator> cache_;

    std::function<bool(PageNum)> idle_check_;
    Stats stats_{};
    mutable std::mutex mu_;
};

}  // namespace blink
