#include "spindaq/codec.hpp"

#include <cmath>
#include <string>

namespace spindaq {

BiasModel::BiasModel(std::vector<BiasPoint> table, double reference_temperature_c)
    : table_(std::move(table)), reference_temperature_c_(reference_temperature_c), slope_(0.0) {
  if (table_.size() < 2) throw std::invalid_argument("bias model needs at least 2 calibration points");
  for (std::size_t i = 1; i < table_.size(); ++i) {
    if (!(table_[i].temperature_c > table_[i - 1].temperature_c))
      throw std::invalid_argument("bias model temperatures must be strictly increasing");
  }
  double mean_t = 0.0;
  double mean_b = 0.0;
  for (const auto& p : table_) {
    mean_t += p.temperature_c;
    mean_b += p.bias_mv;
  }
  mean_t /= static_cast<double>(table_.size());
  mean_b /= static_cast<double>(table_.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& p : table_) {
    sxy += (p.temperature_c - mean_t) * (p.bias_mv - mean_b);
    sxx += (p.temperature_c - mean_t) * (p.temperature_c - mean_t);
  }
  slope_ = sxy / sxx;
}

BiasModel BiasModel::bench_default() {
  return BiasModel({{30.0, 0.124},
                    {35.0, 0.393},
                    {40.0, 0.608},
                    {45.0, 0.803},
                    {50.0, 0.929},
                    {55.0, 1.086},
                    {60.0, 1.275}},
                   24.0);
}

BiasModel BiasModel::zero() { return BiasModel({{0.0, 0.0}, {100.0, 0.0}}, 24.0); }

double bias_at_temperature(const BiasModel& model, double t) {
  const auto& tab = model.table();
  if (t <= tab.front().temperature_c)
    return tab.front().bias_mv + model.fitted_slope() * (t - tab.front().temperature_c);
  if (t >= tab.back().temperature_c)
    return tab.back().bias_mv + model.fitted_slope() * (t - tab.back().temperature_c);
  for (std::size_t i = 1; i < tab.size(); ++i) {
    const auto& hi = tab[i];
    if (t == hi.temperature_c) return hi.bias_mv;
    if (t < hi.temperature_c) {
      const auto& lo = tab[i - 1];
      const double u = (t - lo.temperature_c) / (hi.temperature_c - lo.temperature_c);
      return lo.bias_mv + u * (hi.bias_mv - lo.bias_mv);
    }
  }
  return tab.back().bias_mv;
}

std::int64_t bias_offset_codes(const BiasModel& model, double temperature_c) {
  return round_half_away(bias_at_temperature(model, temperature_c) * kCodesPerMillivolt);
}

SignedCode apply_bias_correction(SignedCode s, const BiasModel& model, double temperature_c) {
  return SignedCode::clamped(s.value() - bias_offset_codes(model, temperature_c));
}

namespace {

void put_be(std::uint8_t* out, std::uint64_t v, int nbytes) {
  for (int i = nbytes - 1; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
}

std::uint64_t get_be(const std::uint8_t* in, int nbytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i) v = (v << 8) | in[i];
  return v;
}

void check_channel(std::int16_t v, const char* name) {
  if (v < kCodeMin || v > kCodeMax)
    throw std::out_of_range(std::string(name) + " outside the signed 14-bit code range");
}

}  // namespace

void pack_packet(const AcqPacket& p, std::span<std::uint8_t, kPacketBytes> out) {
  if (p.timestamp_ns > kTimestampMask) throw std::out_of_range("timestamp exceeds 48 bits");
  check_channel(p.ch1, "ch1");
  check_channel(p.ch2, "ch2");
  put_be(out.data(), p.timestamp_ns, 6);
  put_be(out.data() + 6, p.point_index, 2);
  put_be(out.data() + 8, static_cast<std::uint16_t>(p.ch1), 2);
  put_be(out.data() + 10, static_cast<std::uint16_t>(p.ch2), 2);
  put_be(out.data() + 12, p.photon_count, 4);
}

PacketBytes pack_packet(const AcqPacket& p) {
  PacketBytes out{};
  pack_packet(p, out);
  return out;
}

AcqPacket unpack_packet(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kPacketBytes)
    throw std::invalid_argument("acquisition packet must be exactly 16 bytes, got " +
                                std::to_string(bytes.size()));
  AcqPacket p;
  p.timestamp_ns = get_be(bytes.data(), 6);
  p.point_index = static_cast<std::uint16_t>(get_be(bytes.data() + 6, 2));
  p.ch1 = static_cast<std::int16_t>(static_cast<std::uint16_t>(get_be(bytes.data() + 8, 2)));
  p.ch2 = static_cast<std::int16_t>(static_cast<std::uint16_t>(get_be(bytes.data() + 10, 2)));
  p.photon_count = static_cast<std::uint32_t>(get_be(bytes.data() + 12, 4));
  check_channel(p.ch1, "ch1");
  check_channel(p.ch2, "ch2");
  return p;
}

std::vector<std::uint8_t> pack_log(std::span<const AcqPacket> packets) {
  std::vector<std::uint8_t> out(packets.size() * kPacketBytes);
  for (std::size_t i = 0; i < packets.size(); ++i)
    pack_packet(packets[i], std::span<std::uint8_t, kPacketBytes>(out.data() + i * kPacketBytes, kPacketBytes));
  return out;
}

std::vector<AcqPacket> unpack_log(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kPacketBytes != 0) throw std::invalid_argument("packet log length is not a multiple of 16");
  std::vector<AcqPacket> out;
  out.reserve(bytes.size() / kPacketBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kPacketBytes)
    out.push_back(unpack_packet(bytes.subspan(off, kPacketBytes)));
  return out;
}

}  // namespace spindaq
