#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "spindaq/protocol.hpp"
#include "spindaq/sap.hpp"
#include "spindaq/settings.hpp"

namespace spindaq {

/// Command not allowed in the current run state.
class DeviceStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Logic-high level of a PWM output seen through the loopback path, volts.
inline constexpr double kPwmLoopbackVolts = 0.9;

/// The emulated bench: photodetector, APD, synth outputs and the MW source,
/// all driven from one settings snapshot and seeded RNG streams.
class Scene {
 public:
  explicit Scene(const DeviceSettings& settings);
  Scene(const Scene&) = delete;
  Scene& operator=(const Scene&) = delete;
  ~Scene();

  SignalSources& sources() noexcept { return *sources_; }
  FrontEnd front_end() const;
  /// Trigger edge: the MW list and pulse program step forward.
  void on_edge(std::int64_t edge_ns, bool accepted);
  /// Normalized fluorescence at time t.
  double level(std::int64_t t_ns) const;
  const MwState& mw() const noexcept { return mw_; }
  std::uint64_t edges() const noexcept { return edges_; }

 private:
  class Analog;
  class Photons;
  void refresh_level();

  DeviceSettings s_;
  std::vector<ResonanceLine> lines_;
  MwState mw_;
  std::uint64_t edges_ = 0;
  double static_level_ = 1.0;
  bool fm_ = false;
  DdsConfig fm_source_;
  std::unique_ptr<Analog> ai1_;
  std::unique_ptr<Analog> ai2_;
  std::unique_ptr<Photons> di_;
  std::unique_ptr<SignalSources> sources_;
};

enum class RunState { idle, running, complete, stopped };
std::string_view to_string(RunState s) noexcept;
RunState run_state_from_string(std::string_view name);

struct InstrumentStatus {
  RunState state = RunState::idle;
  Pattern pattern = Pattern::sequence;
  std::uint64_t expected = 0;  // packets a complete sequence produces
  std::uint64_t emitted = 0;
  std::uint64_t stored = 0;
  std::uint64_t dropped_triggers = 0;
  std::uint64_t ring_written = 0;
  std::uint64_t ring_available = 0;
  std::int64_t emulated_time_ns = 0;
  bool store_full = false;
};
json to_json(const InstrumentStatus& s);
InstrumentStatus status_from_json(const json& j);

struct Reply {
  proto::Status status = proto::Status::ok;
  std::vector<std::uint8_t> body;
  /// Set on a successful READ: packets the transport must now stream.
  std::optional<proto::ReadGrant> transfer;
};

/// Device state machine behind the protocol. ARM starts a worker-side run;
/// every other call returns immediately.
class Instrument {
 public:
  explicit Instrument(DeviceSettings initial = {}, std::size_t store_capacity = kDefaultStoreCapacity);
  ~Instrument();
  Instrument(const Instrument&) = delete;
  Instrument& operator=(const Instrument&) = delete;

  /// Executes one command opcode. ACK and BYE belong to the transport layer.
  Reply handle(std::uint8_t opcode, std::span<const std::uint8_t> payload);

  DeviceSettings settings() const;
  void arm();
  void stop();
  void soft_trigger();
  InstrumentStatus status() const;
  /// Copies stored packets; throws std::out_of_range past the end.
  std::vector<AcqPacket> packets(std::size_t offset, std::size_t count) const;
  /// Moves up to `count` of the newest ring packets into the store.
  proto::ReadGrant drain_ring(std::size_t count);
  /// Blocks until the run leaves the running state or the timeout passes.
  bool wait_while_running(std::chrono::milliseconds timeout) const;

 private:
  void worker_main();
  void execute(const DeviceSettings& snap, std::uint64_t gen);
  void execute_sequence(const DeviceSettings& snap, std::uint64_t gen, Scene& scene);
  void execute_continuous(const DeviceSettings& snap, std::uint64_t gen, Scene& scene);
  bool publish_stored(std::uint64_t gen, const AcqPacket& p, std::uint64_t dropped, std::int64_t now_ns);
  Reply dispatch(std::uint8_t opcode, std::span<const std::uint8_t> payload);
  void require_idle() const;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  DeviceSettings settings_;
  PacketStore store_;
  RingBuffer ring_;
  RunState state_ = RunState::idle;
  Pattern run_pattern_ = Pattern::sequence;
  std::uint64_t expected_ = 0;
  std::uint64_t emitted_ = 0;
  std::uint64_t dropped_ = 0;
  std::int64_t emulated_ns_ = 0;
  bool store_full_ = false;
  std::uint64_t pending_soft_ = 0;
  std::uint64_t gen_ = 0;
  bool run_requested_ = false;
  bool shutdown_ = false;
  std::thread worker_;
};

}  // namespace spindaq
