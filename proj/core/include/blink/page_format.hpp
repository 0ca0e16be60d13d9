#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blink {

using PageNum = uint64_t;
using Value = uint64_t;

inline constexpr size_t kMinKeyLen = 1;
inline constexpr size_t kMaxKeyLen = 255;
inline constexpr uint32_t kMinPageBits = 9;   // 512 bytes
inline constexpr uint32_t kMaxPageBits = 20;  // 1 MB

struct PageConfig {
    uint32_t page_bits = 12;

    size_t page_size() const { return size_t{1} << page_bits; }
    bool valid() const { return page_bits >= kMinPageBits && page_bits <= kMaxPageBits; }
};

// A key as seen by node operations. `infinite` marks the synthetic upper
// fence carried by the rightmost node of each level; it compares greater
// than every user key and cannot be expressed as user key bytes.
struct KeyRef {
    std::string_view bytes{};
    bool infinite = false;

    static KeyRef inf() { return KeyRef{{}, true}; }
};

// Unsigned lexicographic byte order; a proper prefix sorts first.
std::strong_ordering compare_keys(std::string_view a, std::string_view b);
std::strong_ordering compare_refs(const KeyRef& a, const KeyRef& b);

// One fixed-size tree node backed by its page image.
//
// Layout (all integers little-endian):
//   header, 24 bytes:
//     0  u16 level            (0 = leaf)
//     2  u8  flags            (bit 0: node delete bit)
//     3  u8  reserved
//     4  u16 count            (occupied slots, fence included)
//     6  u16 active           (slots whose key delete bit is clear)
//     8  u32 free_offset      (start of the key heap)
//     12 u32 reserved
//     16 u64 link             (right sibling; left node once deleted)
//   slot table, 16 bytes per slot, growing up from the header:
//     0  u32 key_offset
//     4  u8  key_len          (0 only for the infinite-fence slot)
//     5  u8  flags            (bit 0: key delete bit, bit 1: infinite fence)
//     6  u16 reserved
//     8  u64 value
//   key heap growing down from the page end; free_offset separates the two.
//
// The highest slot (count-1) is always the node's upper fence entry.
class Node {
public:
    enum class InsertResult { inserted, updated, no_room };

    static constexpr size_t kHeaderSize = 24;
    static constexpr size_t kSlotSize = 16;

    // Header-only node with no slots; callers append slots in key order.
    static Node make(PageConfig cfg, uint16_t level, PageNum link = 0);

    // Fresh node holding nothing but the infinite fence (rightmost at its level).
    static Node make_with_sentinel(PageConfig cfg, uint16_t level, Value sentinel_value = 0);

    // Validates the image and throws CorruptionError on any header or slot
    // inconsistency, including out-of-order keys.
    static Node deserialize(std::span<const uint8_t> bytes, PageConfig cfg);

    const std::vector<uint8_t>& serialize() const { return page_; }
    std::span<const uint8_t> bytes() const { return page_; }

    PageConfig config() const { return cfg_; }

    uint16_t level() const;
    void set_level(uint16_t level);
    bool deleted() const;
    void set_deleted(bool deleted);
    uint16_t count() const;
    uint16_t active() const;
    uint32_t free_offset() const;
    PageNum link() const;
    void set_link(PageNum link);

    KeyRef key(uint16_t slot) const;
    Value value(uint16_t slot) const;
    void set_value(uint16_t slot, Value value);
    bool key_deleted(uint16_t slot) const;
    bool is_sentinel(uint16_t slot) const;

    // Smallest slot s with search_key <= key(s); count() when the key lies
    // beyond the fence (right-sibling traversal). Deleted slots participate.
    uint16_t find_slot(const KeyRef& key) const;

    // True when slot s holds exactly this key.
    bool slot_matches(uint16_t slot, const KeyRef& key) const;

    // Add or update. Updating clears the slot's delete bit. Returns no_room
    // without modifying the node when slot table and key heap would collide.
    InsertResult insert_slot(const KeyRef& key, Value value);

    // Sets the key delete bit; the key bytes stay resident. Throws
    // ProtocolViolation on an already-deleted slot or the infinite fence.
    void mark_key_deleted(uint16_t slot);

    // Drops every deleted slot except the fence and compacts the key heap.
    // Returns bytes reclaimed (slot entries plus key bytes).
    size_t cleanup();

    // Free gap between the slot table and the key heap.
    size_t free_space() const;

    // Build path for split/consolidate/cleanup: append one slot at the end.
    // Keys must arrive in strictly increasing order.
    void append_slot(const KeyRef& key, Value value, bool key_deleted = false);

    // Structural equality: header fields plus per-slot key bytes, flags, value.
    // Physical key offsets may differ.
    bool operator==(const Node& other) const;

private:
    Node(PageConfig cfg, std::vector<uint8_t> page) : cfg_(cfg), page_(std::move(page)) {}

    size_t slot_base(uint16_t slot) const { return kHeaderSize + size_t{slot} * kSlotSize; }
    size_t slot_table_end() const { return kHeaderSize + size_t{count()} * kSlotSize; }
    void set_count(uint16_t count);
    void set_active(uint16_t active);
    void set_free_offset(uint32_t off);
    bool slot_key_less(uint16_t slot, const KeyRef& key) const;
    void validate() const;

    PageConfig cfg_;
    std::vector<uint8_t> page_;
};

void check_user_key(std::string_view key);  // throws InvalidKeyError

// Longest user key a given page size can carry while still letting every
// node hold two keys plus the reserved fence slot (so splits always make
// progress). 255 from page_bits 10 up, 220 at page_bits 9.
inline size_t max_user_key_len(PageConfig cfg) {
    size_t cap = (cfg.page_size() - Node::kHeaderSize - 3 * Node::kSlotSize) / 2;
    return cap < kMaxKeyLen ? cap : kMaxKeyLen;
}

}  // namespace blink
