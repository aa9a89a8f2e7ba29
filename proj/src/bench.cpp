#include "spindaq/bench.hpp"

#include <chrono>

#include "spindaq/client.hpp"
#include "spindaq/errors.hpp"
#include "spindaq/server.hpp"

namespace spindaq {

namespace {
using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }
}  // namespace

EmulationBench bench_emulation(std::uint64_t packets, std::uint32_t ticks_per_packet, DeviceSettings settings) {
  settings.sap = SapConfig{};
  settings.sap.pattern = Pattern::continuous;
  settings.sap.decimation = ticks_per_packet;
  settings.sap.continuous_stop_after = packets;
  Instrument inst(settings, 1);
  const auto t0 = Clock::now();
  inst.arm();
  inst.wait_while_running(std::chrono::hours(1));
  EmulationBench b;
  b.seconds = since(t0);
  b.ticks = static_cast<std::uint64_t>(inst.status().emulated_time_ns / kTickNs);
  b.ticks_per_second = static_cast<double>(b.ticks) / b.seconds;
  return b;
}

LoopbackBench bench_loopback(std::uint64_t packets) {
  ServerConfig cfg;
  cfg.port = 0;
  cfg.store_capacity = packets;
  DeviceServer server(cfg);
  server.start();

  Client client("127.0.0.1", server.port());
  client.set_pwm({{"channel", 1}, {"period_ticks", 4}, {"duty", 0.5}});
  SapConfig sap;
  sap.pattern = Pattern::sequence;
  sap.trigger_source = TriggerSource::internal_pwm;
  sap.window_ns = 8;
  sap.points = 1;
  sap.point_repeats = static_cast<std::uint32_t>(packets);
  client.set_sap(sap);
  client.arm();
  const auto st = client.wait_until_done(std::chrono::minutes(10));
  if (st.state != RunState::complete) throw Error(ErrorCategory::device, "INCOMPLETE", "benchmark fill did not finish");

  const auto t0 = Clock::now();
  const auto got = client.read(0, packets);
  LoopbackBench b;
  b.seconds = since(t0);
  b.packets = got.size();
  b.megabytes_per_second = static_cast<double>(b.packets * kPacketBytes) / 1e6 / b.seconds;
  client.bye();
  server.stop();
  return b;
}

}  // namespace spindaq
