#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace spindaq::net {

struct Endpoint {
  std::uint32_t address = 0;  // IPv4, host byte order
  std::uint16_t port = 0;
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
  std::string to_string() const;
};

/// Resolves a dotted quad or hostname to an IPv4 endpoint.
Endpoint resolve(const std::string& host, std::uint16_t port);

struct Datagram {
  Endpoint from;
  std::vector<std::uint8_t> bytes;
};

class DatagramTransport {
 public:
  virtual ~DatagramTransport() = default;
  virtual void send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) = 0;
  /// Blocks up to timeout; empty on timeout.
  virtual std::optional<Datagram> receive(std::chrono::microseconds timeout) = 0;
};

class UdpSocket final : public DatagramTransport {
 public:
  /// Binds host:port (port 0 picks an ephemeral port). Throws std::system_error.
  UdpSocket(const std::string& host, std::uint16_t port);
  ~UdpSocket() override;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  Endpoint local() const;
  void send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) override;
  std::optional<Datagram> receive(std::chrono::microseconds timeout) override;

 private:
  int fd_ = -1;
};

/// Datagram-level faults applied on the sending side.
struct Impairment {
  double loss = 0.0;
  double duplicate = 0.0;
  double reorder = 0.0;
  std::uint64_t seed = 1;
  bool active() const noexcept { return loss > 0.0 || duplicate > 0.0 || reorder > 0.0; }
};

struct ImpairmentCounters {
  std::uint64_t offered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t duplicated = 0;
  std::uint64_t reordered = 0;
};

/// Drops, duplicates, or holds back a datagram until the next send (reorder).
class ImpairedTransport final : public DatagramTransport {
 public:
  ImpairedTransport(std::unique_ptr<DatagramTransport> inner, Impairment impairment);
  void send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) override;
  std::optional<Datagram> receive(std::chrono::microseconds timeout) override;
  const ImpairmentCounters& counters() const noexcept { return counters_; }
  DatagramTransport& inner() noexcept { return *inner_; }

 private:
  std::unique_ptr<DatagramTransport> inner_;
  Impairment impairment_;
  std::mt19937_64 rng_;
  std::optional<std::pair<Endpoint, std::vector<std::uint8_t>>> held_;
  ImpairmentCounters counters_;
};

}  // namespace spindaq::net
