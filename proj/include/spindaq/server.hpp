#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "spindaq/instrument.hpp"
#include "spindaq/transport.hpp"

namespace spindaq {

struct ServerConfig {
  std::string bind_host = "127.0.0.1";
  std::uint16_t port = proto::kDefaultPort;
  std::size_t store_capacity = kDefaultStoreCapacity;
  std::chrono::milliseconds retransmit_timeout{200};
  int max_attempts = 5;
  std::chrono::milliseconds session_idle{10000};
  /// Faults injected on everything the server sends.
  net::Impairment impairment;
  DeviceSettings device;
};

/// Keys: bind_host, port, seed, store_capacity, retransmit_timeout_ms,
/// max_attempts, session_idle_ms, impairment{loss,duplicate,reorder,seed},
/// environment (a SET_ENV body).
ServerConfig server_config_from_json(const json& j, ServerConfig base = {});
ServerConfig load_server_config(const std::string& path);
/// SPINDAQ_PORT and SPINDAQ_SEED win over file values.
void apply_env_overrides(ServerConfig& cfg);

struct ServerCounters {
  std::uint64_t malformed = 0;
  std::uint64_t rejected = 0;    // commands from a second endpoint
  std::uint64_t duplicates = 0;  // retransmitted commands answered from cache
  std::uint64_t batches_sent = 0;
  std::uint64_t batch_retransmits = 0;
  std::uint64_t transfers_completed = 0;
  std::uint64_t transfers_aborted = 0;
};

class DeviceServer {
 public:
  /// Binds immediately; throws std::system_error if the port is taken.
  explicit DeviceServer(ServerConfig cfg);
  ~DeviceServer();
  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  std::uint16_t port() const;
  /// Serves on a background thread.
  void start();
  /// Serves on the calling thread until stop().
  void run();
  void stop();
  ServerCounters counters() const;
  Instrument& instrument() noexcept { return instrument_; }

 private:
  using Clock = std::chrono::steady_clock;

  struct CachedReply {
    std::vector<std::uint8_t> request;
    std::vector<std::uint8_t> response;
  };

  struct Transfer {
    bool active = false;
    net::Endpoint to;
    std::uint16_t seq = 0;
    std::uint32_t cursor = 0;
    std::uint32_t end = 0;
    std::uint32_t batch_len = 0;
    int attempts = 0;
    Clock::time_point deadline;
  };

  void on_datagram(const net::Datagram& d);
  void send_batch();
  void service_transfer();
  void end_session();

  ServerConfig cfg_;
  Instrument instrument_;
  net::UdpSocket* socket_ = nullptr;
  std::unique_ptr<net::DatagramTransport> transport_;
  std::optional<net::Endpoint> session_;
  Clock::time_point last_seen_;
  std::unordered_map<std::uint16_t, CachedReply> cache_;
  std::deque<std::uint16_t> cache_order_;
  Transfer transfer_;
  ServerCounters counters_;
  mutable std::mutex counters_mu_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace spindaq
