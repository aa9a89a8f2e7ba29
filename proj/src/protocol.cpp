#include "spindaq/protocol.hpp"

#include <array>
#include <stdexcept>

namespace spindaq::proto {

std::string_view to_string(Status s) noexcept {
  switch (s) {
    case Status::ok: return "OK";
    case Status::err_magic: return "ERR_MAGIC";
    case Status::err_version: return "ERR_VERSION";
    case Status::err_crc: return "ERR_CRC";
    case Status::err_length: return "ERR_LENGTH";
    case Status::err_opcode: return "ERR_OPCODE";
    case Status::err_state: return "ERR_STATE";
    case Status::err_param: return "ERR_PARAM";
    case Status::err_range: return "ERR_RANGE";
  }
  return "ERR_UNKNOWN";
}

bool is_known_opcode(std::uint8_t op) noexcept { return op >= 0x01 && op <= 0x0D; }

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table() {
  std::array<std::uint16_t, 256> t{};
  for (unsigned i = 0; i < 256; ++i) {
    std::uint16_t c = static_cast<std::uint16_t>(i << 8);
    for (int b = 0; b < 8; ++b) c = static_cast<std::uint16_t>((c & 0x8000) ? (c << 1) ^ 0x1021 : c << 1);
    t[i] = c;
  }
  return t;
}

constexpr auto kCrcTable = make_crc_table();

}  // namespace

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes) noexcept {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) crc = static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ b) & 0xFF]);
  return crc;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, static_cast<std::uint16_t>(v >> 16));
  put_u16(out, static_cast<std::uint16_t>(v));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
  put_u32(out, static_cast<std::uint32_t>(v));
}

std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
  if (at + 2 > in.size()) throw std::out_of_range("truncated u16 field");
  return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint32_t{get_u16(in, at)} << 16) | get_u16(in, at + 2);
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  return (std::uint64_t{get_u32(in, at)} << 32) | get_u32(in, at + 4);
}

std::vector<std::uint8_t> encode_frame(std::uint8_t opcode, std::uint16_t seq, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw std::length_error("frame payload exceeds one datagram");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + payload.size() + kCrcBytes);
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(opcode);
  put_u16(out, seq);
  put_u16(out, static_cast<std::uint16_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  put_u16(out, crc16_ccitt(out));
  return out;
}

Decoded decode_frame(std::span<const std::uint8_t> bytes) {
  Decoded d;
  if (bytes.size() < kHeaderBytes + kCrcBytes || bytes.size() > kMaxDatagram) {
    d.status = Status::err_length;
    return d;
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) {
    d.status = Status::err_magic;
    return d;
  }
  if (bytes[2] != kVersion) {
    d.status = Status::err_version;
    return d;
  }
  const std::size_t len = get_u16(bytes, 6);
  if (kHeaderBytes + len + kCrcBytes != bytes.size()) {
    d.status = Status::err_length;
    return d;
  }
  const std::uint16_t crc = get_u16(bytes, kHeaderBytes + len);
  if (crc16_ccitt(bytes.first(kHeaderBytes + len)) != crc) {
    d.status = Status::err_crc;
    return d;
  }
  d.frame.opcode = bytes[3];
  d.frame.seq = get_u16(bytes, 4);
  d.frame.payload.assign(bytes.begin() + kHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + len));
  return d;
}

std::vector<std::uint8_t> encode_response(std::uint8_t opcode, std::uint16_t seq, Status status,
                                          std::span<const std::uint8_t> body) {
  std::vector<std::uint8_t> payload;
  payload.reserve(1 + body.size());
  payload.push_back(static_cast<std::uint8_t>(status));
  payload.insert(payload.end(), body.begin(), body.end());
  return encode_frame(opcode, seq, payload);
}

std::vector<std::uint8_t> encode_hello_body(const HelloInfo& info) {
  std::vector<std::uint8_t> out(info.identity.begin(), info.identity.end());
  out.push_back(0);
  put_u32(out, info.capabilities);
  return out;
}

HelloInfo decode_hello_body(std::span<const std::uint8_t> body) {
  HelloInfo info;
  std::size_t i = 0;
  while (i < body.size() && body[i] != 0) ++i;
  if (i + 5 != body.size()) throw std::invalid_argument("malformed HELLO reply");
  info.identity.assign(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(i));
  info.capabilities = get_u32(body, i + 1);
  return info;
}

std::vector<std::uint8_t> encode_read_request(const ReadRequest& r) {
  std::vector<std::uint8_t> out;
  put_u32(out, r.offset);
  put_u16(out, r.count);
  return out;
}

ReadRequest decode_read_request(std::span<const std::uint8_t> payload) {
  if (payload.size() != 6) throw std::invalid_argument("READ payload must be 6 bytes");
  return {get_u32(payload, 0), get_u16(payload, 4)};
}

std::vector<std::uint8_t> encode_read_grant(const ReadGrant& g) {
  std::vector<std::uint8_t> out;
  put_u32(out, g.offset);
  put_u32(out, g.count);
  return out;
}

ReadGrant decode_read_grant(std::span<const std::uint8_t> body) {
  if (body.size() != 8) throw std::invalid_argument("READ reply body must be 8 bytes");
  return {get_u32(body, 0), get_u32(body, 4)};
}

bool is_data_batch(const Frame& f) noexcept {
  return f.opcode == static_cast<std::uint8_t>(Opcode::read) && f.payload.size() >= kBatchHeaderBytes &&
         f.payload[0] == kBatchMarker && (f.payload.size() - kBatchHeaderBytes) % kPacketBytes == 0;
}

std::vector<std::uint8_t> encode_batch(std::uint16_t seq, std::uint32_t offset, std::span<const AcqPacket> packets) {
  if (packets.size() > kMaxBatchPackets) throw std::length_error("batch holds at most 91 packets");
  std::vector<std::uint8_t> payload;
  payload.reserve(kBatchHeaderBytes + packets.size() * kPacketBytes);
  payload.push_back(kBatchMarker);
  payload.push_back(0);
  put_u32(payload, offset);
  for (const auto& p : packets) {
    const PacketBytes b = pack_packet(p);
    payload.insert(payload.end(), b.begin(), b.end());
  }
  return encode_frame(Opcode::read, seq, payload);
}

Batch decode_batch(const Frame& f) {
  if (!is_data_batch(f)) throw std::invalid_argument("frame is not a data batch");
  Batch b;
  const std::span<const std::uint8_t> p(f.payload);
  b.offset = get_u32(p, 2);
  b.packets = unpack_log(p.subspan(kBatchHeaderBytes));
  return b;
}

std::vector<std::uint8_t> encode_ack(std::uint16_t seq, std::uint32_t offset) {
  std::vector<std::uint8_t> payload;
  put_u32(payload, offset);
  return encode_frame(Opcode::ack, seq, payload);
}

}  // namespace spindaq::proto
