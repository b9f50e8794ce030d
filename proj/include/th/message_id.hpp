#pragma once

#include <compare>
#include <cstdint>

#include "th/bits.hpp"
#include "th/errors.hpp"

namespace th {

/// How much of the 32-bit message head participates in message identity.
/// Kernel services only look at the low 16 bits; the rest is payload.
enum class HeaderPolicy : std::uint8_t { Bits16 = 16, Bits32 = 32 };

/// Packed identity of a message type:
///
///   bits 52..63  pid_to    destination process index
///   bits 40..51  chid      destination channel
///   bits 32..39  nid       node
///   bits  0..31  msg_head  first word of the message
class MessageId {
 public:
  static constexpr unsigned kPidShift = 52;
  static constexpr unsigned kChidShift = 40;
  static constexpr unsigned kNidShift = 32;
  static constexpr unsigned kPidWidth = 12;
  static constexpr unsigned kChidWidth = 12;
  static constexpr unsigned kNidWidth = 8;
  static constexpr unsigned kHeadWidth = 32;

  /// Process index of the process manager; every kernel-service message goes there.
  static constexpr std::uint32_t kProcessManager = 1;
  /// Reserved destination index used to tag trap syscalls in the symbol key space.
  static constexpr std::uint32_t kTrapTag = 0xFFF;

  constexpr MessageId() = default;
  constexpr explicit MessageId(std::uint64_t raw) noexcept : raw_(raw) {}

  static MessageId encode(std::uint32_t pid_to, std::uint32_t chid, std::uint32_t nid,
                          std::uint64_t msg_head, HeaderPolicy policy = HeaderPolicy::Bits32) {
    check("pid_to", pid_to, kPidWidth);
    check("chid", chid, kChidWidth);
    check("nid", nid, kNidWidth);
    check("msg_head", msg_head, kHeadWidth);
    return MessageId{(std::uint64_t{pid_to} << kPidShift) | (std::uint64_t{chid} << kChidShift) |
                     (std::uint64_t{nid} << kNidShift) | mask_head(msg_head, policy)};
  }

  constexpr std::uint64_t raw() const noexcept { return raw_; }
  constexpr std::uint32_t pid_to() const noexcept {
    return static_cast<std::uint32_t>((raw_ >> kPidShift) & bits::mask(kPidWidth));
  }
  constexpr std::uint32_t chid() const noexcept {
    return static_cast<std::uint32_t>((raw_ >> kChidShift) & bits::mask(kChidWidth));
  }
  constexpr std::uint32_t nid() const noexcept {
    return static_cast<std::uint32_t>((raw_ >> kNidShift) & bits::mask(kNidWidth));
  }
  constexpr std::uint32_t msg_head() const noexcept { return static_cast<std::uint32_t>(raw_); }

  /// Same identity with the head reduced according to `policy`.
  constexpr MessageId with_policy(HeaderPolicy policy) const noexcept {
    return MessageId{(raw_ & ~bits::mask(kHeadWidth)) | mask_head(msg_head(), policy)};
  }

  friend constexpr auto operator<=>(MessageId, MessageId) = default;

 private:
  static constexpr std::uint64_t mask_head(std::uint64_t head, HeaderPolicy policy) noexcept {
    return policy == HeaderPolicy::Bits16 ? (head & 0xFFFFu) : (head & 0xFFFFFFFFu);
  }

  static void check(const char* field, std::uint64_t value, unsigned width) {
    if (value > bits::mask(width)) throw EncodingError(field, value, width);
  }

  std::uint64_t raw_ = 0;
};

/// Symbol key for a trap-based system call. Lives under the reserved
/// destination index so it can never equal the key of a real message.
constexpr std::uint64_t trap_key(std::uint32_t syscall_number) noexcept {
  return (std::uint64_t{MessageId::kTrapTag} << MessageId::kPidShift) | syscall_number;
}

constexpr bool is_trap_key(std::uint64_t key) noexcept {
  return (key >> MessageId::kPidShift) == MessageId::kTrapTag;
}

}  // namespace th
