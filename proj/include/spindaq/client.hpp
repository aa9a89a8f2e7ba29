#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spindaq/errors.hpp"
#include "spindaq/instrument.hpp"
#include "spindaq/protocol.hpp"
#include "spindaq/transport.hpp"

namespace spindaq {

struct ClientOptions {
  /// Reply wait per attempt; data reads re-request after (max_attempts+1) of these without progress.
  std::chrono::milliseconds timeout{200};
  int max_attempts = 5;
  /// Faults injected on everything the client sends.
  net::Impairment impairment;
};

struct ClientStats {
  std::uint64_t commands = 0;
  std::uint64_t command_retransmits = 0;
  std::uint64_t read_requests = 0;
  std::uint64_t batches = 0;
  std::uint64_t duplicate_batches = 0;
  std::uint64_t acks = 0;
};

/// Host-side SDK. Commands are stop-and-wait with retransmission under the
/// same sequence number, so the device executes each at most once.
class Client {
 public:
  /// Throws Error(network) if the host does not resolve.
  Client(const std::string& host, std::uint16_t port, ClientOptions opts = {});
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  proto::HelloInfo hello();
  json set_sap(const SapConfig& cfg);
  json set_dds(const json& body);
  json set_pwm(const json& body);
  json set_bias(const json& body);
  json set_env(const json& body);
  void arm();
  void soft_trigger();
  void stop();
  InstrumentStatus status();
  /// Polls STATUS until the run leaves the running state.
  InstrumentStatus wait_until_done(std::chrono::milliseconds limit,
                                   std::chrono::milliseconds poll = std::chrono::milliseconds(20));
  /// Packets [offset, offset + count) of the sequence store.
  std::vector<AcqPacket> read(std::uint64_t offset, std::uint64_t count);
  /// Newest packets of the continuous ring, oldest first.
  std::vector<AcqPacket> read_ring(std::size_t max_count);
  /// Releases the device session.
  void bye();

  const ClientStats& stats() const noexcept { return stats_; }
  net::DatagramTransport& transport() noexcept { return *transport_; }

  /// Raw command: the reply status and body. Throws Error(network) on timeout.
  std::pair<proto::Status, std::vector<std::uint8_t>> transact(proto::Opcode op,
                                                               std::span<const std::uint8_t> payload = {});

 private:
  std::vector<std::uint8_t> command(proto::Opcode op, std::span<const std::uint8_t> payload = {});
  json json_command(proto::Opcode op, const json& body);
  std::vector<AcqPacket> read_chunk(std::uint32_t offset, std::uint16_t count, bool ring);
  std::uint16_t next_seq() noexcept { return seq_++; }
  std::optional<proto::Frame> receive_from_device(std::chrono::microseconds wait);

  ClientOptions opts_;
  net::Endpoint device_;
  std::unique_ptr<net::DatagramTransport> transport_;
  std::uint16_t seq_ = 1;
  bool talked_ = false;
  ClientStats stats_;
};

}  // namespace spindaq
