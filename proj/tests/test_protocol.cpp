#include <doctest.h>

#include <random>
#include <string>

#include "spindaq/protocol.hpp"

using namespace spindaq;
using namespace spindaq::proto;

namespace {

std::uint16_t crc_bitwise(const std::vector<std::uint8_t>& bytes) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) {
    for (int i = 7; i >= 0; --i) {
      const bool top = ((crc >> 15) & 1) != ((b >> i) & 1);
      crc = static_cast<std::uint16_t>(crc << 1);
      if (top) crc ^= 0x1021;
    }
  }
  return crc;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("CRC-16/CCITT check value and random agreement") {
  CHECK(crc16_ccitt(bytes_of("123456789")) == 0x29B1);
  std::mt19937 rng(5);
  for (int n = 0; n < 200; ++n) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(n));
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    CHECK(crc16_ccitt(v) == crc_bitwise(v));
  }
}

TEST_CASE("frame layout") {
  const std::vector<std::uint8_t> payload{0xAA, 0xBB, 0xCC};
  const auto f = encode_frame(Opcode::set_dds, 0x1234, payload);
  REQUIRE(f.size() == 13);
  const std::vector<std::uint8_t> head(f.begin(), f.begin() + 11);
  CHECK(head == std::vector<std::uint8_t>{0xDA, 0x51, 0x01, 0x03, 0x12, 0x34, 0x00, 0x03, 0xAA, 0xBB, 0xCC});
  const std::uint16_t crc = crc_bitwise(head);
  CHECK(f[11] == crc >> 8);
  CHECK(f[12] == (crc & 0xFF));
  const auto d = decode_frame(f);
  REQUIRE(d);
  CHECK(d.frame == Frame{0x03, 0x1234, payload});
}

TEST_CASE("decoder rejects corrupted frames with the matching status") {
  const auto good = encode_frame(Opcode::status, 7);
  auto f = good;
  f[0] = 0x00;
  CHECK(decode_frame(f).status == Status::err_magic);
  f = good;
  f[2] = 0x02;
  CHECK(decode_frame(f).status == Status::err_version);
  f = good;
  f.back() ^= 1;
  CHECK(decode_frame(f).status == Status::err_crc);
  f = good;
  f.push_back(0);
  CHECK(decode_frame(f).status == Status::err_length);
  CHECK(decode_frame(std::vector<std::uint8_t>(5, 0xDA)).status == Status::err_length);
  std::mt19937 rng(9);
  int accepted = 0;
  for (int i = 0; i < 2000; ++i) {
    f = good;
    f[rng() % f.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    if (decode_frame(f)) ++accepted;
  }
  CHECK(accepted == 0);
}

TEST_CASE("payload limit is one 1472-byte datagram") {
  CHECK(kMaxPayload == 1462);
  std::vector<std::uint8_t> big(kMaxPayload, 1);
  CHECK(encode_frame(Opcode::set_env, 1, big).size() == kMaxDatagram);
  big.push_back(1);
  CHECK_THROWS_AS(encode_frame(Opcode::set_env, 1, big), std::length_error);
}

TEST_CASE("response carries the status byte first") {
  const auto f = encode_response(0x0A, 3, Status::err_state, "busy");
  const auto d = decode_frame(f);
  REQUIRE(d);
  CHECK(d.frame.payload[0] == 6);
  CHECK(std::string(d.frame.payload.begin() + 1, d.frame.payload.end()) == "busy");
  CHECK(to_string(Status::err_range) == "ERR_RANGE");
}

TEST_CASE("HELLO, READ and grant bodies") {
  const HelloInfo h{std::string(kIdentity), kCapabilities};
  const auto hb = encode_hello_body(h);
  const auto h2 = decode_hello_body(hb);
  CHECK(h2.identity == "SPINDAQ-EMU/1");
  CHECK(h2.capabilities == kCapabilities);
  CHECK_THROWS(decode_hello_body(std::vector<std::uint8_t>{1, 2, 3}));

  const auto rb = encode_read_request({0x01020304, 0x0506});
  CHECK(rb == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});
  const auto rr = decode_read_request(rb);
  CHECK(rr.offset == 0x01020304);
  CHECK(rr.count == 0x0506);
  CHECK_THROWS(decode_read_request(std::vector<std::uint8_t>{1, 2}));

  const auto g = decode_read_grant(encode_read_grant({7, 91}));
  CHECK(g.offset == 7);
  CHECK(g.count == 91);
}

TEST_CASE("data batches") {
  std::vector<AcqPacket> pk;
  for (int i = 0; i < 91; ++i) pk.push_back({static_cast<std::uint64_t>(i), 1, 2, 3, 4});
  const auto f = encode_batch(42, 1000, pk);
  CHECK(f.size() == kMaxDatagram);
  const auto d = decode_frame(f);
  REQUIRE(d);
  CHECK(is_data_batch(d.frame));
  const Batch b = decode_batch(d.frame);
  CHECK(b.offset == 1000);
  CHECK(b.packets == pk);
  pk.push_back({});
  CHECK_THROWS_AS(encode_batch(42, 0, pk), std::length_error);
  CHECK(batch_count(100000) == 1099);
  CHECK(batch_count(91) == 1);
  CHECK(batch_count(0) == 0);

  // An ordinary READ reply is not a batch.
  const auto grant = encode_read_grant({0, 5});
  const auto r = decode_frame(encode_response(0x0B, 1, Status::ok, grant));
  CHECK_FALSE(is_data_batch(r.frame));
}

TEST_CASE("opcode table") {
  for (int op = 0x01; op <= 0x0D; ++op) CHECK(is_known_opcode(static_cast<std::uint8_t>(op)));
  CHECK_FALSE(is_known_opcode(0x00));
  CHECK_FALSE(is_known_opcode(0x0E));
}
