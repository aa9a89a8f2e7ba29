#include "spindaq/client.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <system_error>
#include <thread>

namespace spindaq {

namespace {

using Clock = std::chrono::steady_clock;
using std::chrono::duration_cast;
using std::chrono::microseconds;

std::string op_name(proto::Opcode op) {
  switch (op) {
    case proto::Opcode::hello: return "HELLO";
    case proto::Opcode::set_sap: return "SET_SAP";
    case proto::Opcode::set_dds: return "SET_DDS";
    case proto::Opcode::set_pwm: return "SET_PWM";
    case proto::Opcode::set_bias: return "SET_BIAS";
    case proto::Opcode::set_env: return "SET_ENV";
    case proto::Opcode::arm: return "ARM";
    case proto::Opcode::soft_trigger: return "SOFT_TRIGGER";
    case proto::Opcode::stop: return "STOP";
    case proto::Opcode::status: return "STATUS";
    case proto::Opcode::read: return "READ";
    case proto::Opcode::ack: return "ACK";
    case proto::Opcode::bye: return "BYE";
  }
  return "?";
}

Error device_error(proto::Opcode op, proto::Status st, const std::vector<std::uint8_t>& body) {
  return Error(ErrorCategory::device, std::string(proto::to_string(st)),
               op_name(op) + " rejected: " + std::string(body.begin(), body.end()));
}

}  // namespace

Client::Client(const std::string& host, std::uint16_t port, ClientOptions opts) : opts_(opts) {
  try {
    device_ = net::resolve(host, port);
    auto sock = std::make_unique<net::UdpSocket>("0.0.0.0", 0);
    if (opts_.impairment.active())
      transport_ = std::make_unique<net::ImpairedTransport>(std::move(sock), opts_.impairment);
    else
      transport_ = std::move(sock);
  } catch (const std::system_error& e) {
    throw Error(ErrorCategory::network, "UNREACHABLE", e.what());
  }
}

Client::~Client() {
  if (!talked_) return;
  try {
    bye();
  } catch (const std::exception&) {
  }
}

std::optional<proto::Frame> Client::receive_from_device(microseconds wait) {
  auto d = transport_->receive(wait);
  if (!d || !(d->from == device_)) return std::nullopt;
  auto dec = proto::decode_frame(d->bytes);
  if (!dec) return std::nullopt;
  return std::move(dec.frame);
}

std::pair<proto::Status, std::vector<std::uint8_t>> Client::transact(proto::Opcode op,
                                                                     std::span<const std::uint8_t> payload) {
  const std::uint16_t seq = next_seq();
  const auto bytes = proto::encode_frame(op, seq, payload);
  ++stats_.commands;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    if (attempt > 0) ++stats_.command_retransmits;
    transport_->send_to(device_, bytes);
    const auto deadline = Clock::now() + opts_.timeout;
    for (auto now = Clock::now(); now < deadline; now = Clock::now()) {
      auto f = receive_from_device(duration_cast<microseconds>(deadline - now));
      if (!f || f->seq != seq || f->opcode != static_cast<std::uint8_t>(op) || proto::is_data_batch(*f) ||
          f->payload.empty())
        continue;
      talked_ = true;
      return {static_cast<proto::Status>(f->payload[0]), std::vector<std::uint8_t>(f->payload.begin() + 1, f->payload.end())};
    }
  }
  throw Error(ErrorCategory::network, "TIMEOUT",
              "no reply to " + op_name(op) + " from " + device_.to_string() + " after " +
                  std::to_string(opts_.max_attempts) + " attempts");
}

std::vector<std::uint8_t> Client::command(proto::Opcode op, std::span<const std::uint8_t> payload) {
  auto [st, body] = transact(op, payload);
  if (st != proto::Status::ok) throw device_error(op, st, body);
  return body;
}

json Client::json_command(proto::Opcode op, const json& body) {
  const std::string text = body.dump();
  if (text.size() > proto::kMaxPayload)
    throw Error(ErrorCategory::usage, "ERR_TOO_LARGE",
                "command body of " + std::to_string(text.size()) + " bytes exceeds one datagram");
  const auto reply = command(op, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return json::parse(reply.begin(), reply.end());
}

proto::HelloInfo Client::hello() { return proto::decode_hello_body(command(proto::Opcode::hello)); }
json Client::set_sap(const SapConfig& cfg) { return json_command(proto::Opcode::set_sap, to_json(cfg)); }
json Client::set_dds(const json& body) { return json_command(proto::Opcode::set_dds, body); }
json Client::set_pwm(const json& body) { return json_command(proto::Opcode::set_pwm, body); }
json Client::set_bias(const json& body) { return json_command(proto::Opcode::set_bias, body); }
json Client::set_env(const json& body) { return json_command(proto::Opcode::set_env, body); }
void Client::arm() { command(proto::Opcode::arm); }
void Client::soft_trigger() { command(proto::Opcode::soft_trigger); }
void Client::stop() { command(proto::Opcode::stop); }

void Client::bye() {
  command(proto::Opcode::bye);
  talked_ = false;
}

InstrumentStatus Client::status() {
  const auto body = command(proto::Opcode::status);
  return status_from_json(json::parse(body.begin(), body.end()));
}

InstrumentStatus Client::wait_until_done(std::chrono::milliseconds limit, std::chrono::milliseconds poll) {
  const auto deadline = Clock::now() + limit;
  for (;;) {
    auto s = status();
    if (s.state != RunState::running) return s;
    if (Clock::now() >= deadline)
      throw Error(ErrorCategory::device, "TIMEOUT", "acquisition still running after the wait limit");
    std::this_thread::sleep_for(poll);
  }
}

std::vector<AcqPacket> Client::read(std::uint64_t offset, std::uint64_t count) {
  std::vector<AcqPacket> out;
  out.reserve(count);
  while (count > 0) {
    const auto n = static_cast<std::uint16_t>(std::min<std::uint64_t>(count, 0xFFFF));
    if (offset + n > proto::kRingOffset) throw Error(ErrorCategory::usage, "ERR_RANGE", "offset beyond 32 bits");
    auto part = read_chunk(static_cast<std::uint32_t>(offset), n, false);
    out.insert(out.end(), part.begin(), part.end());
    offset += n;
    count -= n;
  }
  return out;
}

std::vector<AcqPacket> Client::read_ring(std::size_t max_count) {
  if (max_count > kRingCapacity) throw Error(ErrorCategory::usage, "ERR_PARAM", "ring read limited to 4096 packets");
  return read_chunk(proto::kRingOffset, static_cast<std::uint16_t>(max_count), true);
}

// Batches are accepted from any READ issued during this call and ACKed on
// every arrival, duplicates included, since the device may have lost an ACK.
// A stalled transfer is re-requested for the missing range under a new seq.
std::vector<AcqPacket> Client::read_chunk(std::uint32_t offset, std::uint16_t count, bool ring) {
  std::vector<AcqPacket> out;
  std::vector<char> have;
  std::uint32_t begin = offset;
  std::size_t n = count;
  std::size_t filled = 0;
  bool known = !ring;
  if (known) {
    out.resize(n);
    have.assign(n, 0);
  }
  std::vector<proto::Batch> early;
  std::set<std::uint16_t> seqs;

  std::uint16_t cur_seq = 0;
  std::vector<std::uint8_t> cur_bytes;
  bool granted = false;
  auto sent_at = Clock::now();
  auto last_progress = sent_at;
  int stalls = 0;

  auto issue = [&](std::uint32_t off, std::uint16_t cnt) {
    cur_seq = next_seq();
    seqs.insert(cur_seq);
    cur_bytes = proto::encode_frame(proto::Opcode::read, cur_seq, proto::encode_read_request({off, cnt}));
    granted = false;
    ++stats_.read_requests;
    transport_->send_to(device_, cur_bytes);
    sent_at = Clock::now();
  };
  auto absorb = [&](const proto::Batch& b) {
    bool progress = false;
    for (std::size_t k = 0; k < b.packets.size(); ++k) {
      const std::uint64_t at = std::uint64_t{b.offset} + k;
      if (at < begin || at - begin >= n) continue;
      const auto idx = static_cast<std::size_t>(at - begin);
      if (have[idx]) continue;
      have[idx] = 1;
      out[idx] = b.packets[k];
      ++filled;
      progress = true;
    }
    return progress;
  };

  issue(offset, count);
  const auto stall_limit = opts_.timeout * (opts_.max_attempts + 1);
  while (!(known && filled == n)) {
    const auto now = Clock::now();
    auto wake = granted ? last_progress + stall_limit : sent_at + opts_.timeout;
    if (now >= wake) {
      if (++stalls > opts_.max_attempts)
        throw Error(ErrorCategory::network, "TIMEOUT",
                    "data transfer from " + device_.to_string() + " stalled after " +
                        std::to_string(opts_.max_attempts) + " attempts");
      if (!granted) {
        ++stats_.command_retransmits;
        transport_->send_to(device_, cur_bytes);
        sent_at = now;
      } else {
        const auto first = static_cast<std::size_t>(std::find(have.begin(), have.end(), 0) - have.begin());
        const auto last = static_cast<std::size_t>(have.rend() - std::find(have.rbegin(), have.rend(), 0)) - 1;
        issue(begin + static_cast<std::uint32_t>(first), static_cast<std::uint16_t>(last - first + 1));
        last_progress = now;
      }
      continue;
    }
    auto f = receive_from_device(duration_cast<microseconds>(wake - now));
    if (!f) continue;
    if (proto::is_data_batch(*f)) {
      if (!seqs.count(f->seq)) continue;
      proto::Batch b = proto::decode_batch(*f);
      transport_->send_to(device_, proto::encode_ack(f->seq, b.offset));
      ++stats_.acks;
      ++stats_.batches;
      bool progress = false;
      if (known) progress = absorb(b);
      else early.push_back(std::move(b));
      if (progress) {
        last_progress = Clock::now();
        stalls = 0;
      } else if (known) {
        ++stats_.duplicate_batches;
      }
      continue;
    }
    if (f->opcode != static_cast<std::uint8_t>(proto::Opcode::read) || f->seq != cur_seq || f->payload.empty() ||
        granted)
      continue;
    const auto st = static_cast<proto::Status>(f->payload[0]);
    std::vector<std::uint8_t> body(f->payload.begin() + 1, f->payload.end());
    if (st != proto::Status::ok) throw device_error(proto::Opcode::read, st, body);
    const auto grant = proto::decode_read_grant(body);
    talked_ = true;
    granted = true;
    stalls = 0;
    last_progress = Clock::now();
    if (!known) {
      known = true;
      begin = grant.offset;
      n = grant.count;
      out.resize(n);
      have.assign(n, 0);
      for (const auto& b : early) absorb(b);
      early.clear();
    }
  }
  return out;
}

}  // namespace spindaq
