#pragma once

#include <stdexcept>
#include <string>

namespace blink {

// Page image fails structural validation, or the file free list is damaged.
struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Key length outside [1, 255].
struct InvalidKeyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Latch discipline broken by the caller: same-set reacquisition,
// release of a latch not held, freeing a latched page.
struct ProtocolViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Bad magic, unsupported version, or page_bits mismatch on open.
struct IncompatibleFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Page number beyond the allocated range, or tree level out of range.
struct OutOfRangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StorageExhaustedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace blink
