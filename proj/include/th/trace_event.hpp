#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "th/bits.hpp"
#include "th/errors.hpp"
#include "th/message_id.hpp"

namespace th {

/// Event classes carried in the low byte of the record header.
enum class EventClass : std::uint8_t {
  KernelCallExit = 0x01,
  KernelCallEnter = 0x02,
};

/// Kernel call numbers used by the simulator and recognised by the tools.
namespace kcall {
inline constexpr std::uint16_t kTrap = 0;  // generic trap syscall; number is in the payload
inline constexpr std::uint16_t kMsgSendv = 11;
inline constexpr std::uint16_t kMsgReceivev = 14;
inline constexpr std::uint16_t kMsgReplyv = 15;
}  // namespace kcall

namespace event_flags {
inline constexpr std::uint8_t kSimple = 0x01;
inline constexpr std::uint8_t kMsgSend = 0x02;
}  // namespace event_flags

inline constexpr std::size_t kRecordSize = 16;
using RecordBytes = std::array<std::byte, kRecordSize>;

/// One fixed-size kernel-call record.
///
/// Wire layout, all words little-endian:
///
///   bytes  0..3   header   event_class (bits 0..7) | flags (bits 8..15) | kcall_num (bits 16..31)
///   bytes  4..7   source   process (bits 20..31) | thread (bits 8..19) | node (bits 0..7)
///   bytes  8..15  payload  MessageId for message events, else syscall number in the low word
struct TraceEvent {
  std::uint8_t event_class = static_cast<std::uint8_t>(EventClass::KernelCallExit);
  std::uint8_t flags = event_flags::kSimple;
  std::uint16_t kcall_num = 0;
  std::uint16_t src_process = 0;  // 12 bits
  std::uint16_t src_thread = 0;   // 12 bits
  std::uint8_t src_node = 0;
  std::uint64_t payload = 0;

  bool is_msg_send() const noexcept { return (flags & event_flags::kMsgSend) != 0; }
  bool is_simple() const noexcept { return (flags & event_flags::kSimple) != 0; }
  MessageId message_id() const noexcept { return MessageId{payload}; }
  std::uint32_t syscall_number() const noexcept { return static_cast<std::uint32_t>(payload); }

  /// Key under which this event is interned as a model symbol.
  std::uint64_t symbol_key(HeaderPolicy policy) const noexcept {
    return is_msg_send() ? message_id().with_policy(policy).raw() : trap_key(syscall_number());
  }

  static TraceEvent message(EventClass cls, std::uint16_t kcall_num, std::uint16_t process,
                            std::uint16_t thread, std::uint8_t node, MessageId id) {
    return TraceEvent{static_cast<std::uint8_t>(cls),
                      static_cast<std::uint8_t>(event_flags::kSimple | event_flags::kMsgSend),
                      kcall_num, process, thread, node, id.raw()};
  }

  static TraceEvent trap(EventClass cls, std::uint16_t kcall_num, std::uint16_t process,
                         std::uint16_t thread, std::uint8_t node, std::uint32_t syscall) {
    return TraceEvent{static_cast<std::uint8_t>(cls), event_flags::kSimple, kcall_num,
                      process, thread, node, syscall};
  }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

inline RecordBytes encode_trace_event(const TraceEvent& e) {
  if (e.src_process > bits::mask(12)) throw EncodingError("src_process", e.src_process, 12);
  if (e.src_thread > bits::mask(12)) throw EncodingError("src_thread", e.src_thread, 12);
  if (!e.is_msg_send() && (e.payload >> 32) != 0)
    throw EncodingError("payload", e.payload, 32);

  const std::uint32_t header = std::uint32_t{e.event_class} | (std::uint32_t{e.flags} << 8) |
                               (std::uint32_t{e.kcall_num} << 16);
  const std::uint32_t source = (std::uint32_t{e.src_process} << 20) |
                               (std::uint32_t{e.src_thread} << 8) | std::uint32_t{e.src_node};
  RecordBytes out{};
  std::span<std::byte, kRecordSize> s{out};
  bits::store_le32(s.subspan<0, 4>(), header);
  bits::store_le32(s.subspan<4, 4>(), source);
  bits::store_le64(s.subspan<8, 8>(), e.payload);
  return out;
}

/// Decodes one record. `offset` is only used for diagnostics.
///
/// Throws FramingError for a short record, a non-simple (combine) record or a
/// trap record with a non-zero payload high word; SkipRecordError for an
/// event class this library does not know.
inline TraceEvent decode_trace_event(std::span<const std::byte> bytes, std::uint64_t offset = 0) {
  if (bytes.size() != kRecordSize)
    throw FramingError("truncated record of " + std::to_string(bytes.size()) + " bytes", offset);
  const auto header = bits::load_le32(bytes.subspan<0, 4>());
  const auto source = bits::load_le32(bytes.subspan<4, 4>());
  TraceEvent e;
  e.event_class = static_cast<std::uint8_t>(header & 0xFF);
  e.flags = static_cast<std::uint8_t>((header >> 8) & 0xFF);
  e.kcall_num = static_cast<std::uint16_t>(header >> 16);
  e.src_process = static_cast<std::uint16_t>(source >> 20);
  e.src_thread = static_cast<std::uint16_t>((source >> 8) & 0xFFF);
  e.src_node = static_cast<std::uint8_t>(source & 0xFF);
  e.payload = bits::load_le64(bytes.subspan<8, 8>());

  if (e.event_class != static_cast<std::uint8_t>(EventClass::KernelCallExit) &&
      e.event_class != static_cast<std::uint8_t>(EventClass::KernelCallEnter))
    throw SkipRecordError(e.event_class);
  if (!e.is_simple()) throw FramingError("combine event records are not supported", offset);
  if (!e.is_msg_send() && (e.payload >> 32) != 0)
    throw FramingError("trap record with non-zero payload high word", offset);
  return e;
}

}  // namespace th
