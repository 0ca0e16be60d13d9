#include "blink/page_format.hpp"

#include <cstring>

#include "blink/errors.hpp"

namespace blink {

namespace {

constexpr size_t kOffLevel = 0;
constexpr size_t kOffFlags = 2;
constexpr size_t kOffCount = 4;
constexpr size_t kOffActive = 6;
constexpr size_t kOffFreeOffset = 8;
constexpr size_t kOffLink = 16;

constexpr uint8_t kNodeDeleted = 0x01;
constexpr uint8_t kSlotDeleted = 0x01;
constexpr uint8_t kSlotSentinel = 0x02;

uint16_t get16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }
uint32_t get32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint64_t get64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = v << 8 | p[i];
    return v;
}
void put16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
}
void put32(uint8_t* p, uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = uint8_t(v >> (8 * i));
}
void put64(uint8_t* p, uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = uint8_t(v >> (8 * i));
}

}  // namespace

void check_user_key(std::string_view key) {
    if (key.size() < kMinKeyLen || key.size() > kMaxKeyLen)
        throw InvalidKeyError("key length " + std::to_string(key.size()) +
                              " outside [1, 255]");
}

std::strong_ordering compare_keys(std::string_view a, std::string_view b) {
    size_t n = a.size() < b.size() ? a.size() : b.size();
    int c = n ? std::memcmp(a.data(), b.data(), n) : 0;
    if (c < 0) return std::strong_ordering::less;
    if (c > 0) return std::strong_ordering::greater;
    return a.size() <=> b.size();
}

std::strong_ordering compare_refs(const KeyRef& a, const KeyRef& b) {
    if (a.infinite && b.infinite) return std::strong_ordering::equal;
    if (a.infinite) return std::strong_ordering::greater;
    if (b.infinite) return std::strong_ordering::less;
    return compare_keys(a.bytes, b.bytes);
}

Node Node::make(PageConfig cfg, uint16_t level, PageNum link) {
    if (!cfg.valid()) throw IncompatibleFileError("page_bits outside [9, 20]");
    Node n(cfg, std::vector<uint8_t>(cfg.page_size(), 0));
    n.set_level(level);
    n.set_free_offset(uint32_t(cfg.page_size()));
    n.set_link(link);
    return n;
}

Node Node::make_with_sentinel(PageConfig cfg, uint16_t level, Value sentinel_value) {
    Node n = make(cfg, level);
    n.append_slot(KeyRef::inf(), sentinel_value);
    return n;
}

uint16_t Node::level() const { return get16(page_.data() + kOffLevel); }
void Node::set_level(uint16_t level) { put16(page_.data() + kOffLevel, level); }

bool Node::deleted() const { return page_[kOffFlags] & kNodeDeleted; }
void Node::set_deleted(bool deleted) {
    if (deleted)
        page_[kOffFlags] |= kNodeDeleted;
    else
        page_[kOffFlags] &= uint8_t(~kNodeDeleted);
}

uint16_t Node::count() const { return get16(page_.data() + kOffCount); }
void Node::set_count(uint16_t count) { put16(page_.data() + kOffCount, count); }
uint16_t Node::active() const { return get16(page_.data() + kOffActive); }
void Node::set_active(uint16_t active) { put16(page_.data() + kOffActive, active); }
uint32_t Node::free_offset() const { return get32(page_.data() + kOffFreeOffset); }
void Node::set_free_offset(uint32_t off) { put32(page_.data() + kOffFreeOffset, off); }
PageNum Node::link() const { return get64(page_.data() + kOffLink); }
void Node::set_link(PageNum link) { put64(page_.data() + kOffLink, link); }

KeyRef Node::key(uint16_t slot) const {
    const uint8_t* s = page_.data() + slot_base(slot);
    if (s[5] & kSlotSentinel) return KeyRef::inf();
    uint32_t off = get32(s);
    uint8_t len = s[4];
    return KeyRef{std::string_view(reinterpret_cast<const char*>(page_.data() + off), len)};
}

Value Node::value(uint16_t slot) const { return get64(page_.data() + slot_base(slot) + 8); }
void Node::set_value(uint16_t slot, Value value) { put64(page_.data() + slot_base(slot) + 8, value); }
bool Node::key_deleted(uint16_t slot) const { return page_[slot_base(slot) + 5] & kSlotDeleted; }
bool Node::is_sentinel(uint16_t slot) const { return page_[slot_base(slot) + 5] & kSlotSentinel; }

bool Node::slot_key_less(uint16_t slot, const KeyRef& key) const {
    if (is_sentinel(slot)) return false;  // the infinite fence is never below anything
    if (key.infinite) return true;
    return compare_keys(this->key(slot).bytes, key.bytes) < 0;
}

uint16_t Node::find_slot(const KeyRef& key) const {
    uint16_t lo = 0, hi = count();
    while (lo < hi) {
        uint16_t mid = uint16_t((lo + hi) / 2);
        if (slot_key_less(mid, key))
            lo = uint16_t(mid + 1);
        else
            hi = mid;
    }
    return lo;
}

bool Node::slot_matches(uint16_t slot, const KeyRef& key) const {
    if (is_sentinel(slot)) return key.infinite;
    if (key.infinite) return false;
    return compare_keys(this->key(slot).bytes, key.bytes) == 0;
}

Node::InsertResult Node::insert_slot(const KeyRef& key, Value value) {
    if (!key.infinite && (key.bytes.size() < kMinKeyLen || key.bytes.size() > kMaxKeyLen))
        throw InvalidKeyError("key length outside [1, 255]");

    uint16_t s = find_slot(key);
    if (s < count() && slot_matches(s, key)) {
        set_value(s, value);
        if (key_deleted(s)) {
            page_[slot_base(s) + 5] &= uint8_t(~kSlotDeleted);
            set_active(uint16_t(active() + 1));
        }
        return InsertResult::updated;
    }
    if (key.infinite)
        throw ProtocolViolation("inserting an infinite fence into a node without one");

    size_t len = key.bytes.size();
    size_t new_table_end = kHeaderSize + (size_t{count()} + 1) * kSlotSize;
    if (free_offset() < len || free_offset() - len < new_table_end)
        return InsertResult::no_room;

    uint32_t key_off = uint32_t(free_offset() - len);
    std::memcpy(page_.data() + key_off, key.bytes.data(), len);

    uint8_t* table = page_.data() + kHeaderSize;
    std::memmove(table + (size_t{s} + 1) * kSlotSize, table + size_t{s} * kSlotSize,
                 (size_t{count()} - s) * kSlotSize);
    uint8_t* slot = table + size_t{s} * kSlotSize;
    put32(slot, key_off);
    slot[4] = uint8_t(len);
    slot[5] = 0;
    put16(slot + 6, 0);
    put64(slot + 8, value);

    set_free_offset(key_off);
    set_count(uint16_t(count() + 1));
    set_active(uint16_t(active() + 1));
    return InsertResult::inserted;
}

void Node::mark_key_deleted(uint16_t slot) {
    if (slot >= count()) throw ProtocolViolation("mark_key_deleted: slot out of range");
    if (is_sentinel(slot)) throw ProtocolViolation("mark_key_deleted: infinite fence");
    if (key_deleted(slot)) throw ProtocolViolation("mark_key_deleted: slot already deleted");
    page_[slot_base(slot) + 5] |= kSlotDeleted;
    set_active(uint16_t(active() - 1));
}

size_t Node::cleanup() {
    size_t before = slot_table_end() + (cfg_.page_size() - free_offset());
    Node fresh = make(cfg_, level(), link());
    fresh.set_deleted(deleted());
    uint16_t n = count();
    for (uint16_t i = 0; i < n; ++i) {
        bool fence = i == n - 1;
        if (key_deleted(i) && !fence) continue;
        fresh.append_slot(key(i), value(i), key_deleted(i));
    }
    size_t after = fresh.slot_table_end() + (cfg_.page_size() - fresh.free_offset());
    page_ = std::move(fresh.page_);
    return before - after;
}

size_t Node::free_space() const { return free_offset() - slot_table_end(); }

void Node::append_slot(const KeyRef& key, Value value, bool key_deleted) {
    size_t len = key.infinite ? 0 : key.bytes.size();
    if (!key.infinite && (len < kMinKeyLen || len > kMaxKeyLen))
        throw InvalidKeyError("key length outside [1, 255]");
    if (count() > 0 && compare_refs(this->key(uint16_t(count() - 1)), key) >= 0)
        throw ProtocolViolation("append_slot: keys must be strictly increasing");

    size_t new_table_end = kHeaderSize + (size_t{count()} + 1) * kSlotSize;
    if (free_offset() < len || free_offset() - len < new_table_end)
        throw StorageExhaustedError("append_slot: node full");

    uint32_t key_off = uint32_t(free_offset() - len);
    if (len) std::memcpy(page_.data() + key_off, key.bytes.data(), len);

    uint8_t* slot = page_.data() + slot_base(count());
    put32(slot, key_off);
    slot[4] = uint8_t(len);
    slot[5] = uint8_t((key.infinite ? kSlotSentinel : 0) | (key_deleted ? kSlotDeleted : 0));
    put16(slot + 6, 0);
    put64(slot + 8, value);

    set_free_offset(key_off);
    set_count(uint16_t(count() + 1));
    if (!key_deleted) set_active(uint16_t(active() + 1));
}

Node Node::deserialize(std::span<const uint8_t> bytes, PageConfig cfg) {
    if (!cfg.valid()) throw IncompatibleFileError("page_bits outside [9, 20]");
    if (bytes.size() != cfg.page_size())
        throw CorruptionError("page image size does not match page_bits");
    Node n(cfg, std::vector<uint8_t>(bytes.begin(), bytes.end()));
    n.validate();
    return n;
}

void Node::validate() const {
    size_t psize = cfg_.page_size();
    uint16_t cnt = count();
    if (cnt < 1) throw CorruptionError("node has no fence slot");
    size_t table_end = kHeaderSize + size_t{cnt} * kSlotSize;
    uint32_t heap = free_offset();
    if (heap > psize || heap < table_end)
        throw CorruptionError("slot table overlaps key heap");

    uint16_t live = 0;
    for (uint16_t i = 0; i < cnt; ++i) {
        const uint8_t* s = page_.data() + slot_base(i);
        uint32_t off = get32(s);
        uint8_t len = s[4];
        uint8_t flags = s[5];
        if (flags & kSlotSentinel) {
            if (i != cnt - 1) throw CorruptionError("infinite fence below the top slot");
            if (len != 0) throw CorruptionError("infinite fence with key bytes");
            if (flags & kSlotDeleted) throw CorruptionError("deleted infinite fence");
        } else {
            if (len < kMinKeyLen) throw CorruptionError("zero-length key");
            if (off < heap || size_t{off} + len > psize)
                throw CorruptionError("key bytes outside the key heap");
        }
        if (!(flags & kSlotDeleted)) ++live;
        if (i > 0 && compare_refs(key(uint16_t(i - 1)), key(i)) >= 0)
            throw CorruptionError("slot keys out of order");
    }
    if (live != active()) throw CorruptionError("active count does not match slots");
}

bool Node::operator==(const Node& other) const {
    if (level() != other.level() || deleted() != other.deleted() || count() != other.count() ||
        active() != other.active() || link() != other.link())
        return false;
    for (uint16_t i = 0; i < count(); ++i) {
        if (is_sentinel(i) != other.is_sentinel(i)) return false;
        if (!is_sentinel(i) && key(i).bytes != other.key(i).bytes) return false;
        if (key_deleted(i) != other.key_deleted(i)) return false;
        if (value(i) != other.value(i)) return false;
    }
    return true;
}

}  // namespace blink
