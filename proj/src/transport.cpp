#include "spindaq/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>

#include "spindaq/protocol.hpp"

namespace spindaq::net {

namespace {

sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(ep.address);
  a.sin_port = htons(ep.port);
  return a;
}

[[noreturn]] void throw_errno(const char* what) { throw std::system_error(errno, std::generic_category(), what); }

}  // namespace

std::string Endpoint::to_string() const {
  in_addr a{};
  a.s_addr = htonl(address);
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &a, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(port);
}

Endpoint resolve(const std::string& host, std::uint16_t port) {
  in_addr a{};
  if (inet_pton(AF_INET, host.c_str(), &a) == 1) return {ntohl(a.s_addr), port};
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw std::system_error(std::make_error_code(std::errc::host_unreachable), "cannot resolve " + host);
  const auto* sa = reinterpret_cast<const sockaddr_in*>(res->ai_addr);
  Endpoint ep{ntohl(sa->sin_addr.s_addr), port};
  freeaddrinfo(res);
  return ep;
}

UdpSocket::UdpSocket(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw_errno("socket");
  int buf = 4 << 20;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDBUF, &buf, sizeof buf);
  const sockaddr_in a = to_sockaddr(resolve(host, port));
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw std::system_error(err, std::generic_category(), "bind " + host + ":" + std::to_string(port));
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

Endpoint UdpSocket::local() const {
  sockaddr_in a{};
  socklen_t len = sizeof a;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len) != 0) throw_errno("getsockname");
  return {ntohl(a.sin_addr.s_addr), ntohs(a.sin_port)};
}

void UdpSocket::send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) {
  const sockaddr_in a = to_sockaddr(to);
  // Best effort, like the wire: a full buffer behaves as a lost datagram.
  (void)::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&a), sizeof a);
}

std::optional<Datagram> UdpSocket::receive(std::chrono::microseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int ms = static_cast<int>((timeout.count() + 999) / 1000);
  const int rc = ::poll(&p, 1, ms < 0 ? 0 : ms);
  if (rc <= 0) return std::nullopt;
  Datagram d;
  d.bytes.resize(2048);
  sockaddr_in from{};
  socklen_t len = sizeof from;
  const ssize_t n = ::recvfrom(fd_, d.bytes.data(), d.bytes.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
  if (n < 0) return std::nullopt;
  d.bytes.resize(static_cast<std::size_t>(n));
  d.from = {ntohl(from.sin_addr.s_addr), ntohs(from.sin_port)};
  return d;
}

ImpairedTransport::ImpairedTransport(std::unique_ptr<DatagramTransport> inner, Impairment impairment)
    : inner_(std::move(inner)), impairment_(impairment), rng_(impairment.seed) {}

void ImpairedTransport::send_to(const Endpoint& to, std::span<const std::uint8_t> bytes) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ++counters_.offered;
  auto flush_held = [&] {
    if (held_) {
      inner_->send_to(held_->first, held_->second);
      held_.reset();
    }
  };
  if (u(rng_) < impairment_.loss) {
    ++counters_.dropped;
    return;
  }
  if (!held_ && u(rng_) < impairment_.reorder) {
    ++counters_.reordered;
    held_.emplace(to, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    return;
  }
  inner_->send_to(to, bytes);
  if (u(rng_) < impairment_.duplicate) {
    ++counters_.duplicated;
    inner_->send_to(to, bytes);
  }
  flush_held();
}

std::optional<Datagram> ImpairedTransport::receive(std::chrono::microseconds timeout) {
  return inner_->receive(timeout);
}

}  // namespace spindaq::net
