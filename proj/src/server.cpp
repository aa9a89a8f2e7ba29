#include "spindaq/server.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <string>

namespace spindaq {

namespace {

constexpr std::size_t kReplyCacheEntries = 256;
constexpr auto kIdlePoll = std::chrono::milliseconds(50);

std::uint64_t parse_env_number(const char* name, const char* text, std::uint64_t max) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || text[used] != '\0' || v > max)
    throw std::invalid_argument(std::string(name) + " is not a valid number: " + text);
  return v;
}

}  // namespace

ServerConfig server_config_from_json(const json& j, ServerConfig c) {
  if (!j.is_object()) throw std::invalid_argument("server config must be a JSON object");
  c.bind_host = j.value("bind_host", c.bind_host);
  c.port = j.value("port", c.port);
  c.device.seed = j.value("seed", c.device.seed);
  c.store_capacity = j.value("store_capacity", c.store_capacity);
  if (auto it = j.find("retransmit_timeout_ms"); it != j.end())
    c.retransmit_timeout = std::chrono::milliseconds(it->get<std::int64_t>());
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  if (auto it = j.find("session_idle_ms"); it != j.end())
    c.session_idle = std::chrono::milliseconds(it->get<std::int64_t>());
  if (auto it = j.find("impairment"); it != j.end()) {
    c.impairment.loss = it->value("loss", c.impairment.loss);
    c.impairment.duplicate = it->value("duplicate", c.impairment.duplicate);
    c.impairment.reorder = it->value("reorder", c.impairment.reorder);
    c.impairment.seed = it->value("seed", c.impairment.seed);
  }
  if (auto it = j.find("environment"); it != j.end()) apply_env_json(c.device, *it);
  if (c.retransmit_timeout.count() <= 0 || c.max_attempts <= 0)
    throw std::invalid_argument("retransmit timeout and attempts must be positive");
  return c;
}

ServerConfig load_server_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return server_config_from_json(json::parse(in));
}

void apply_env_overrides(ServerConfig& cfg) {
  if (const char* p = std::getenv("SPINDAQ_PORT"))
    cfg.port = static_cast<std::uint16_t>(parse_env_number("SPINDAQ_PORT", p, 65535));
  if (const char* s = std::getenv("SPINDAQ_SEED"))
    cfg.device.seed = parse_env_number("SPINDAQ_SEED", s, UINT64_MAX);
}

DeviceServer::DeviceServer(ServerConfig cfg) : cfg_(std::move(cfg)), instrument_(cfg_.device, cfg_.store_capacity) {
  auto sock = std::make_unique<net::UdpSocket>(cfg_.bind_host, cfg_.port);
  socket_ = sock.get();
  if (cfg_.impairment.active())
    transport_ = std::make_unique<net::ImpairedTransport>(std::move(sock), cfg_.impairment);
  else
    transport_ = std::move(sock);
}

DeviceServer::~DeviceServer() { stop(); }

std::uint16_t DeviceServer::port() const { return socket_->local().port; }

void DeviceServer::start() {
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void DeviceServer::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

ServerCounters DeviceServer::counters() const {
  std::lock_guard lk(counters_mu_);
  return counters_;
}

void DeviceServer::run() {
  while (!stop_) {
    auto wait = std::chrono::duration_cast<std::chrono::microseconds>(kIdlePoll);
    if (transfer_.active) {
      const auto left = std::chrono::duration_cast<std::chrono::microseconds>(transfer_.deadline - Clock::now());
      wait = std::clamp(left, std::chrono::microseconds(0), wait);
    }
    if (auto d = transport_->receive(wait)) on_datagram(*d);
    service_transfer();
  }
}

void DeviceServer::end_session() {
  session_.reset();
  cache_.clear();
  cache_order_.clear();
  transfer_.active = false;
}

void DeviceServer::on_datagram(const net::Datagram& d) {
  using proto::Opcode;
  const auto decoded = proto::decode_frame(d.bytes);
  if (!decoded || proto::is_data_batch(decoded.frame)) {
    std::lock_guard lk(counters_mu_);
    ++counters_.malformed;
    return;
  }
  const proto::Frame& f = decoded.frame;
  const auto now = Clock::now();
  const bool live = session_ && now - last_seen_ < cfg_.session_idle;
  const bool control = f.opcode == static_cast<std::uint8_t>(Opcode::ack) ||
                       f.opcode == static_cast<std::uint8_t>(Opcode::bye);

  if (live && !(*session_ == d.from)) {
    if (control) return;
    std::lock_guard lk(counters_mu_);
    ++counters_.rejected;
    transport_->send_to(d.from, proto::encode_response(f.opcode, f.seq, proto::Status::err_state, "device in use"));
    return;
  }
  if (!live) {
    if (f.opcode == static_cast<std::uint8_t>(Opcode::ack)) return;
    if (!session_ || !(*session_ == d.from)) end_session();
    session_ = d.from;
  }
  last_seen_ = now;

  if (f.opcode == static_cast<std::uint8_t>(Opcode::ack)) {
    if (f.payload.size() != 4 || !transfer_.active || transfer_.seq != f.seq) return;
    if (proto::get_u32(f.payload, 0) != transfer_.cursor) return;
    transfer_.cursor += transfer_.batch_len;
    transfer_.attempts = 0;
    if (transfer_.cursor >= transfer_.end) {
      transfer_.active = false;
      std::lock_guard lk(counters_mu_);
      ++counters_.transfers_completed;
    } else {
      send_batch();
    }
    return;
  }
  if (f.opcode == static_cast<std::uint8_t>(Opcode::bye)) {
    transport_->send_to(d.from, proto::encode_response(f.opcode, f.seq, proto::Status::ok));
    end_session();
    return;
  }

  if (auto it = cache_.find(f.seq); it != cache_.end() && it->second.request == d.bytes) {
    {
      std::lock_guard lk(counters_mu_);
      ++counters_.duplicates;
    }
    transport_->send_to(d.from, it->second.response);
    return;
  }

  Reply r = proto::is_known_opcode(f.opcode) ? instrument_.handle(f.opcode, f.payload)
                                             : Reply{proto::Status::err_opcode, {}, std::nullopt};
  if (r.body.size() + 1 > proto::kMaxPayload) {
    const std::string msg = "reply exceeds one datagram";
    r = Reply{proto::Status::err_length, {msg.begin(), msg.end()}, std::nullopt};
  }
  auto response = proto::encode_response(f.opcode, f.seq, r.status, r.body);
  if (cache_.find(f.seq) == cache_.end()) {
    cache_order_.push_back(f.seq);
    if (cache_order_.size() > kReplyCacheEntries) {
      cache_.erase(cache_order_.front());
      cache_order_.pop_front();
    }
  }
  cache_[f.seq] = {d.bytes, response};
  transport_->send_to(d.from, response);

  const proto::ReadGrant g = r.transfer.value_or(proto::ReadGrant{});
  if (g.count > 0) {
    transfer_ = {};
    transfer_.active = true;
    transfer_.to = d.from;
    transfer_.seq = f.seq;
    transfer_.cursor = g.offset;
    transfer_.end = g.offset + g.count;
    send_batch();
  }
}

void DeviceServer::send_batch() {
  const std::uint32_t n = std::min<std::uint32_t>(static_cast<std::uint32_t>(proto::kMaxBatchPackets),
                                                  transfer_.end - transfer_.cursor);
  std::vector<AcqPacket> packets;
  try {
    packets = instrument_.packets(transfer_.cursor, n);
  } catch (const std::out_of_range&) {
    // The store was re-armed underneath the transfer.
    transfer_.active = false;
    std::lock_guard lk(counters_mu_);
    ++counters_.transfers_aborted;
    return;
  }
  transport_->send_to(transfer_.to, proto::encode_batch(transfer_.seq, transfer_.cursor, packets));
  transfer_.batch_len = n;
  ++transfer_.attempts;
  transfer_.deadline = Clock::now() + cfg_.retransmit_timeout;
  std::lock_guard lk(counters_mu_);
  ++counters_.batches_sent;
  if (transfer_.attempts > 1) ++counters_.batch_retransmits;
}

void DeviceServer::service_transfer() {
  if (!transfer_.active || Clock::now() < transfer_.deadline) return;
  if (transfer_.attempts >= cfg_.max_attempts) {
    transfer_.active = false;
    std::lock_guard lk(counters_mu_);
    ++counters_.transfers_aborted;
    return;
  }
  send_batch();
}

}  // namespace spindaq
