#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spindaq/codec.hpp"

namespace spindaq::proto {

inline constexpr std::uint8_t kMagic0 = 0xDA;
inline constexpr std::uint8_t kMagic1 = 0x51;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderBytes = 8;
inline constexpr std::size_t kCrcBytes = 2;
/// Largest unfragmented UDP payload on a 1500-byte MTU.
inline constexpr std::size_t kMaxDatagram = 1472;
inline constexpr std::size_t kMaxPayload = kMaxDatagram - kHeaderBytes - kCrcBytes;
/// Data batch payload: marker, reserved byte, u32 store offset, packets.
inline constexpr std::size_t kBatchHeaderBytes = 6;
inline constexpr std::uint8_t kBatchMarker = 0x80;
inline constexpr std::size_t kMaxBatchPackets = (kMaxPayload - kBatchHeaderBytes) / kPacketBytes;
static_assert(kMaxBatchPackets == 91);
/// READ offset meaning "drain the continuous ring".
inline constexpr std::uint32_t kRingOffset = 0xFFFFFFFFu;
inline constexpr std::uint16_t kDefaultPort = 5025;
inline constexpr std::string_view kIdentity = "SPINDAQ-EMU/1";

enum class Opcode : std::uint8_t {
  hello = 0x01,
  set_sap = 0x02,
  set_dds = 0x03,
  set_pwm = 0x04,
  set_bias = 0x05,
  set_env = 0x06,
  arm = 0x07,
  soft_trigger = 0x08,
  stop = 0x09,
  status = 0x0A,
  read = 0x0B,
  ack = 0x0C,  // client -> server, batch acknowledgement
  bye = 0x0D,  // client -> server, releases the session
};

enum class Status : std::uint8_t {
  ok = 0,
  err_magic = 1,
  err_version = 2,
  err_crc = 3,
  err_length = 4,
  err_opcode = 5,
  err_state = 6,
  err_param = 7,
  err_range = 8,
};

std::string_view to_string(Status s) noexcept;
bool is_known_opcode(std::uint8_t op) noexcept;

/// Capability bits advertised in the HELLO reply.
enum Capability : std::uint32_t {
  cap_sequence = 1u << 0,
  cap_continuous = 1u << 1,
  cap_dds = 1u << 2,
  cap_pwm = 1u << 3,
  cap_bias = 1u << 4,
  cap_emulated_physics = 1u << 5,
};
inline constexpr std::uint32_t kCapabilities =
    cap_sequence | cap_continuous | cap_dds | cap_pwm | cap_bias | cap_emulated_physics;

/// CRC-16/CCITT: poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes) noexcept;

struct Frame {
  std::uint8_t opcode = 0;
  std::uint16_t seq = 0;
  std::vector<std::uint8_t> payload;
  friend bool operator==(const Frame&, const Frame&) = default;
};

/// magic | version | opcode | seq BE | payload_len BE | payload | crc BE.
std::vector<std::uint8_t> encode_frame(std::uint8_t opcode, std::uint16_t seq, std::span<const std::uint8_t> payload);
inline std::vector<std::uint8_t> encode_frame(Opcode op, std::uint16_t seq, std::span<const std::uint8_t> payload = {}) {
  return encode_frame(static_cast<std::uint8_t>(op), seq, payload);
}

struct Decoded {
  Status status = Status::ok;
  Frame frame;
  explicit operator bool() const noexcept { return status == Status::ok; }
};

/// Checks length, magic, version and CRC, in that order.
Decoded decode_frame(std::span<const std::uint8_t> bytes);

// Big-endian field helpers.
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at);
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at);

/// Response payload: status byte then an opcode-specific body.
std::vector<std::uint8_t> encode_response(std::uint8_t opcode, std::uint16_t seq, Status status,
                                          std::span<const std::uint8_t> body = {});
inline std::vector<std::uint8_t> encode_response(std::uint8_t opcode, std::uint16_t seq, Status status,
                                                 std::string_view body) {
  return encode_response(opcode, seq, status,
                         std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
}

struct HelloInfo {
  std::string identity;
  std::uint32_t capabilities = 0;
};
std::vector<std::uint8_t> encode_hello_body(const HelloInfo& info);
HelloInfo decode_hello_body(std::span<const std::uint8_t> body);

struct ReadRequest {
  std::uint32_t offset = 0;
  std::uint16_t count = 0;
};
std::vector<std::uint8_t> encode_read_request(const ReadRequest& r);
ReadRequest decode_read_request(std::span<const std::uint8_t> payload);

/// Body of a successful READ reply: where the data sits and how much follows.
struct ReadGrant {
  std::uint32_t offset = 0;
  std::uint32_t count = 0;
};
std::vector<std::uint8_t> encode_read_grant(const ReadGrant& g);
ReadGrant decode_read_grant(std::span<const std::uint8_t> body);

bool is_data_batch(const Frame& f) noexcept;
std::vector<std::uint8_t> encode_batch(std::uint16_t seq, std::uint32_t offset, std::span<const AcqPacket> packets);

struct Batch {
  std::uint32_t offset = 0;
  std::vector<AcqPacket> packets;
};
Batch decode_batch(const Frame& f);

constexpr std::size_t batch_count(std::size_t packets) noexcept {
  return (packets + kMaxBatchPackets - 1) / kMaxBatchPackets;
}

std::vector<std::uint8_t> encode_ack(std::uint16_t seq, std::uint32_t offset);

}  // namespace spindaq::proto
