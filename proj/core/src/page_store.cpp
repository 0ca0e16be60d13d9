#include "blink/page_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "blink/errors.hpp"

namespace blink {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'N', 'K'};
constexpr uint8_t kFormatVersion = 1;

uint32_t get32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint64_t get64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
    return v;
}
void put32(uint8_t* p, uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = uint8_t(v >> (8 * i));
}
void put64(uint8_t* p, uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = uint8_t(v >> (8 * i));
}

}  // namespace

struct PageStore::Backing {
    int fd = -1;
    std::vector<uint8_t> mem;  // used when fd < 0

    ~Backing() {
        if (fd >= 0) ::close(fd);
    }
};

PageStore::PageStore(PageConfig cfg, size_t cache_pages, std::unique_ptr<Backing> backing)
    : cfg_(cfg), cache_capacity_(cache_pages), backing_(std::move(backing)) {}

PageStore::~PageStore() = default;

std::unique_ptr<PageStore> PageStore::create(const std::string& path, PageConfig cfg,
                                             size_t cache_pages) {
    if (!cfg.valid()) throw IncompatibleFileError("page_bits outside [9, 20]");
    int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd < 0) throw StorageExhaustedError("cannot create " + path + ": " + std::strerror(errno));
    struct stat st{};
    if (::fstat(fd, &st) == 0 && st.st_size > 0) {
        ::close(fd);
        throw IncompatibleFileError("refusing to create over non-empty file " + path);
    }
    auto backing = std::make_unique<Backing>();
    backing->fd = fd;
    auto store = std::unique_ptr<PageStore>(new PageStore(cfg, cache_pages, std::move(backing)));
    std::unique_lock lk(store->mu_);
    store->hdr_.page_bits = cfg.page_bits;
    store->write_header_locked();
    return store;
}

std::unique_ptr<PageStore> PageStore::create_in_memory(PageConfig cfg, size_t cache_pages) {
    if (!cfg.valid()) throw IncompatibleFileError("page_bits outside [9, 20]");
    auto backing = std::make_unique<Backing>();
    backing->mem.resize(cfg.page_size(), 0);
    auto store = std::unique_ptr<PageStore>(new PageStore(cfg, cache_pages, std::move(backing)));
    std::unique_lock lk(store->mu_);
    store->hdr_.page_bits = cfg.page_bits;
    store->write_header_locked();
    return store;
}

std::unique_ptr<PageStore> PageStore::open(const std::string& path, size_t cache_pages) {
    int fd = ::open(path.c_str(), O_RDWR);
    if (fd < 0) throw IncompatibleFileError("cannot open " + path + ": " + std::strerror(errno));
    auto backing = std::make_unique<Backing>();
    backing->fd = fd;

    uint8_t raw[40] = {};
    if (::pread(fd, raw, sizeof raw, 0) != ssize_t(sizeof raw))
        throw IncompatibleFileError("short read on file header");
    if (std::memcmp(raw, kMagic, 4) != 0) throw IncompatibleFileError("bad magic");
    if (raw[4] != kFormatVersion) throw IncompatibleFileError("unsupported format version");

    PageConfig cfg{get32(raw + 8)};
    if (!cfg.valid()) throw IncompatibleFileError("page_bits outside [9, 20]");

    auto store = std::unique_ptr<PageStore>(new PageStore(cfg, cache_pages, std::move(backing)));
    std::unique_lock lk(store->mu_);
    store->hdr_.page_bits = cfg.page_bits;
    store->hdr_.root_page = get64(raw + 16);
    store->hdr_.top_page = get64(raw + 24);
    store->hdr_.free_head = get64(raw + 32);
    store->load_free_list_locked();
    return store;
}

void PageStore::write_header_locked() {
    std::vector<uint8_t> page(cfg_.page_size(), 0);
    std::memcpy(page.data(), kMagic, 4);
    page[4] = kFormatVersion;
    put32(page.data() + 8, hdr_.page_bits);
    put64(page.data() + 16, hdr_.root_page);
    put64(page.data() + 24, hdr_.top_page);
    put64(page.data() + 32, hdr_.free_head);
    backing_write_locked(kHeaderPage, page.data());
}

void PageStore::load_free_list_locked() {
    free_set_.clear();
    free_chain_.clear();
    std::vector<uint8_t> page(cfg_.page_size());
    PageNum p = hdr_.free_head;
    while (p != 0) {
        if (p > hdr_.top_page) throw CorruptionError("free list references unallocated page");
        if (!free_set_.insert(p).second) throw CorruptionError("free list contains a cycle");
        free_chain_.push_back(p);
        backing_read_locked(p, page.data());
        p = get64(page.data());
    }
}

void PageStore::backing_write_locked(PageNum page, const uint8_t* data) {
    size_t psize = cfg_.page_size();
    off_t off = off_t(page) * off_t(psize);
    if (backing_->fd >= 0) {
        if (::pwrite(backing_->fd, data, psize, off) != ssize_t(psize))
            throw StorageExhaustedError("pwrite failed: " + std::string(std::strerror(errno)));
    } else {
        if (backing_->mem.size() < size_t(off) + psize) backing_->mem.resize(size_t(off) + psize, 0);
        std::memcpy(backing_->mem.data() + off, data, psize);
    }
}

void PageStore::backing_read_locked(PageNum page, uint8_t* data) {
    size_t psize = cfg_.page_size();
    off_t off = off_t(page) * off_t(psize);
    if (backing_->fd >= 0) {
        ssize_t n = ::pread(backing_->fd, data, psize, off);
        if (n < 0) throw CorruptionError("pread failed: " + std::string(std::strerror(errno)));
        if (size_t(n) < psize) std::memset(data + n, 0, psize - size_t(n));
    } else {
        if (backing_->mem.size() < size_t(off) + psize)
            throw OutOfRangeError("page beyond in-memory image");
        std::memcpy(data, backing_->mem.data() + off, psize);
    }
}

void PageStore::cache_put_locked(PageNum page, std::vector<uint8_t> bytes) {
    if (cache_capacity_ == 0) return;
    auto it = cache_.find(page);
    if (it != cache_.end()) {
        it->second->second = std::move(bytes);
        lru_.splice(lru_.begin(), lru_, it->second);
        return;
    }
    lru_.emplace_front(page, std::move(bytes));
    cache_[page] = lru_.begin();
    if (cache_.size() > cache_capacity_) {
        cache_.erase(lru_.back().first);
        lru_.pop_back();
    }
}

void PageStore::check_live_locked(PageNum page, const char* what) const {
    if (page == kHeaderPage || page > hdr_.top_page)
        throw OutOfRangeError(std::string(what) + ": page " + std::to_string(page) +
                              " not allocated");
    if (free_set_.count(page))
        throw CorruptionError(std::string(what) + ": page " + std::to_string(page) +
                              " is on the free list");
}

FileHeader PageStore::header() const {
    std::unique_lock lk(mu_);
    return hdr_;
}

PageNum PageStore::root_page() const {
    std::unique_lock lk(mu_);
    return hdr_.root_page;
}

void PageStore::set_root_page(PageNum page) {
    std::unique_lock lk(mu_);
    hdr_.root_page = page;
    write_header_locked();
}

PageNum PageStore::top_page() const {
    std::unique_lock lk(mu_);
    return hdr_.top_page;
}

PageNum PageStore::alloc_page() {
    std::unique_lock lk(mu_);
    PageNum page;
    std::vector<uint8_t> zero(cfg_.page_size(), 0);
    stats_.allocs++;
    if (hdr_.free_head != 0) {
        page = hdr_.free_head;
        std::vector<uint8_t> img(cfg_.page_size());
        backing_read_locked(page, img.data());
        hdr_.free_head = get64(img.data());
        free_set_.erase(page);
        free_chain_.erase(free_chain_.begin());
        stats_.allocs_from_free_list++;
    } else {
        page = ++hdr_.top_page;
    }
    backing_write_locked(page, zero.data());
    cache_put_locked(page, std::move(zero));
    write_header_locked();
    return page;
}

void PageStore::free_page(PageNum page) {
    std::unique_lock lk(mu_);
    if (page == kHeaderPage || page > hdr_.top_page)
        throw OutOfRangeError("free_page: page not allocated");
    if (free_set_.count(page)) throw CorruptionError("free_page: double free");
    if (idle_check_ && !idle_check_(page))
        throw ProtocolViolation("free_page: latch state not idle");
    std::vector<uint8_t> img(cfg_.page_size(), 0);
    put64(img.data(), hdr_.free_head);
    backing_write_locked(page, img.data());
    cache_put_locked(page, std::move(img));
    hdr_.free_head = page;
    free_set_.insert(page);
    free_chain_.insert(free_chain_.begin(), page);
    stats_.frees++;
    write_header_locked();
}

std::vector<uint8_t> PageStore::read_page(PageNum page) {
    std::unique_lock lk(mu_);
    check_live_locked(page, "read_page");
    stats_.reads++;
    auto it = cache_.find(page);
    if (it != cache_.end()) {
        stats_.cache_hits++;
        lru_.splice(lru_.begin(), lru_, it->second);
        return it->second->second;
    }
    std::vector<uint8_t> img(cfg_.page_size());
    backing_read_locked(page, img.data());
    cache_put_locked(page, img);
    return img;
}

void PageStore::write_page(PageNum page, std::span<const uint8_t> bytes) {
    if (bytes.size() != cfg_.page_size())
        throw CorruptionError("write_page: image size does not match page_bits");
    std::unique_lock lk(mu_);
    check_live_locked(page, "write_page");
    stats_.writes++;
    backing_write_locked(page, bytes.data());
    cache_put_locked(page, std::vector<uint8_t>(bytes.begin(), bytes.end()));
}

bool PageStore::is_free(PageNum page) const {
    std::unique_lock lk(mu_);
    return free_set_.count(page) != 0;
}

std::vector<PageNum> PageStore::free_list() const {
    std::unique_lock lk(mu_);
    return free_chain_;
}

PageStore::Stats PageStore::stats() const {
    std::unique_lock lk(mu_);
    return stats_;
}

void PageStore::set_idle_check(std::function<bool(PageNum)> check) {
    std::unique_lock lk(mu_);
    idle_check_ = std::move(check);
}

}  // namespace blink
