#include <doctest.h>

#include <chrono>
#include <stdexcept>
#include <string>

#include "spindaq/instrument.hpp"

using namespace spindaq;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> body(const json& j) {
  const std::string s = j.dump();
  return {s.begin(), s.end()};
}

std::string text(const Reply& r) { return {r.body.begin(), r.body.end()}; }

Reply send(Instrument& inst, proto::Opcode op, const json& j) {
  const auto b = body(j);
  return inst.handle(static_cast<std::uint8_t>(op), b);
}

Reply send(Instrument& inst, proto::Opcode op) { return inst.handle(static_cast<std::uint8_t>(op), {}); }

}  // namespace

TEST_CASE("software-triggered sequence completes with N*R*S packets") {
  Instrument inst;
  REQUIRE(send(inst, proto::Opcode::set_sap,
               json{{"points", 3}, {"point_repeats", 2}, {"window_ns", 800}, {"trigger_source", "software"}})
              .status == proto::Status::ok);
  inst.arm();
  CHECK(inst.status().state == RunState::running);
  CHECK(inst.status().expected == 6);
  for (int i = 0; i < 6; ++i) inst.soft_trigger();
  REQUIRE(inst.wait_while_running(5000ms));
  const InstrumentStatus st = inst.status();
  CHECK(st.state == RunState::complete);
  CHECK(st.emitted == 6);
  CHECK(st.stored == 6);
  const auto p = inst.packets(0, 6);
  const std::uint16_t want_idx[] = {0, 0, 1, 1, 2, 2};
  for (std::size_t i = 0; i < 6; ++i) CHECK(p[i].point_index == want_idx[i]);
  for (std::size_t i = 1; i < 6; ++i) CHECK(p[i].timestamp_ns > p[i - 1].timestamp_ns);
  CHECK_THROWS_AS(inst.soft_trigger(), DeviceStateError);
}

TEST_CASE("arming on the PWM trigger needs the channel in PWM mode") {
  Instrument inst;
  send(inst, proto::Opcode::set_sap, json{{"trigger_source", "internal_pwm"}});
  const Reply r = send(inst, proto::Opcode::arm);
  CHECK(r.status == proto::Status::err_state);
  CHECK(inst.status().state == RunState::idle);

  CHECK(send(inst, proto::Opcode::set_pwm, json{{"channel", 1}, {"period_ticks", 100}, {"duty", 0.5}}).status ==
        proto::Status::ok);
  CHECK(send(inst, proto::Opcode::arm).status == proto::Status::ok);
  REQUIRE(inst.wait_while_running(5000ms));
  CHECK(inst.status().stored == 1);
  CHECK(inst.packets(0, 1)[0].timestamp_ns == 0);
}

TEST_CASE("settings are locked while running") {
  Instrument inst;
  send(inst, proto::Opcode::set_sap, json{{"points", 2}, {"trigger_source", "software"}});
  inst.arm();
  for (auto op : {proto::Opcode::set_sap, proto::Opcode::set_bias, proto::Opcode::set_env}) {
    const Reply r = send(inst, op, json::object());
    CHECK(r.status == proto::Status::err_state);
  }
  CHECK(send(inst, proto::Opcode::set_pwm, json{{"channel", 0}}).status == proto::Status::err_state);
  CHECK(send(inst, proto::Opcode::arm).status == proto::Status::err_state);
  inst.stop();
  CHECK(inst.status().state == RunState::stopped);
  CHECK(send(inst, proto::Opcode::set_sap, json{{"points", 4}}).status == proto::Status::ok);
}

TEST_CASE("bad parameters map to protocol statuses") {
  Instrument inst;
  CHECK(send(inst, proto::Opcode::set_sap, json{{"points", 0}}).status == proto::Status::err_param);
  CHECK(send(inst, proto::Opcode::set_sap, json{{"points", "many"}}).status == proto::Status::err_param);
  const std::string junk = "{not json";
  const std::vector<std::uint8_t> jb(junk.begin(), junk.end());
  CHECK(inst.handle(static_cast<std::uint8_t>(proto::Opcode::set_env), jb).status == proto::Status::err_param);
  CHECK(send(inst, proto::Opcode::set_dds, json{{"channel", 0}, {"frequency_hz", 1e9}, {"amplitude_vpp", 1.0}})
            .status == proto::Status::err_param);
  CHECK(inst.handle(0x7F, {}).status == proto::Status::err_opcode);
  CHECK(inst.handle(static_cast<std::uint8_t>(proto::Opcode::ack), {}).status == proto::Status::err_opcode);

  const auto req = proto::encode_read_request({0, 1});
  const Reply r = inst.handle(static_cast<std::uint8_t>(proto::Opcode::read), req);
  CHECK(r.status == proto::Status::err_range);
  CHECK_FALSE(r.transfer.has_value());
}

TEST_CASE("HELLO and STATUS bodies") {
  Instrument inst;
  const Reply h = send(inst, proto::Opcode::hello);
  const auto info = proto::decode_hello_body(h.body);
  CHECK(info.identity == "SPINDAQ-EMU/1");
  CHECK(info.capabilities == proto::kCapabilities);

  send(inst, proto::Opcode::set_pwm, json{{"channel", 1}, {"period_ns", 20'000'000}, {"duty", 0.8}});
  const json st = json::parse(text(send(inst, proto::Opcode::status)));
  CHECK(st.at("state") == "idle");
  CHECK(st.at("config").at("msg").at(1).at("mode") == "pwm");
  CHECK(st.at("config").at("msg").at(1).at("pwm").at("period_ticks") == 2'500'000);
  CHECK(st.at("config").at("msg").at(1).at("pwm").at("duty") == 0.8);
  CHECK(st.at("config").at("msg").at(0).at("mode") == "off");
  const InstrumentStatus parsed = status_from_json(st);
  CHECK(parsed.state == RunState::idle);
}

TEST_CASE("continuous runs fill the ring and drain into the store") {
  Instrument inst;
  send(inst, proto::Opcode::set_sap,
       json{{"pattern", "continuous"}, {"decimation", 16}, {"continuous_stop_after", 10000}});
  inst.arm();
  REQUIRE(inst.wait_while_running(10000ms));
  const InstrumentStatus st = inst.status();
  CHECK(st.state == RunState::complete);
  CHECK(st.ring_written == 10000);
  CHECK(st.ring_available == kRingCapacity);

  const proto::ReadGrant g = inst.drain_ring(100);
  CHECK(g.offset == 0);
  CHECK(g.count == 100);
  const auto p = inst.packets(0, 100);
  // the newest 100 of 10000, stamped at the start of each 16-tick block
  CHECK(p.back().timestamp_ns == 9999ull * 16 * 8);
  CHECK(p.front().timestamp_ns == 9900ull * 16 * 8);
  CHECK(p.front().point_index == 9900);
  CHECK_THROWS_AS(inst.drain_ring(kRingCapacity + 1), std::invalid_argument);
}

TEST_CASE("ring reads outside continuous mode are refused") {
  Instrument inst;
  CHECK_THROWS_AS(inst.drain_ring(1), DeviceStateError);
  const auto req = proto::encode_read_request({proto::kRingOffset, 10});
  CHECK(inst.handle(static_cast<std::uint8_t>(proto::Opcode::read), req).status == proto::Status::err_state);
}

TEST_CASE("a full store stops the run") {
  Instrument inst({}, 4);
  send(inst, proto::Opcode::set_sap, json{{"points", 10}, {"trigger_source", "external_di"}});
  inst.arm();
  REQUIRE(inst.wait_while_running(5000ms));
  const InstrumentStatus st = inst.status();
  CHECK(st.state == RunState::stopped);
  CHECK(st.store_full);
  CHECK(st.stored == 4);
}
