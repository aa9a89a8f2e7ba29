#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace spindaq {

// 14-bit ADC full scale and the signed representation sent to the host.
inline constexpr std::uint16_t kRawMax = 0x3FFF;
inline constexpr int kCodeMin = -8192;
inline constexpr int kCodeMax = 8191;
inline constexpr double kCodesPerVolt = 8192.0;
inline constexpr double kCodesPerMillivolt = kCodesPerVolt / 1000.0;

/// Rounds to the nearest integer, ties away from zero. |x| must fit in int64.
constexpr std::int64_t round_half_away(double x) noexcept {
  auto i = static_cast<std::int64_t>(x);
  const double frac = x - static_cast<double>(i);  // exact
  if (frac >= 0.5) ++i;
  else if (frac <= -0.5) --i;
  return i;
}

/// Unsigned ADC output code, 0x0000..0x3FFF.
class RawSample {
 public:
  constexpr explicit RawSample(std::uint16_t code) : code_(code) {
    if (code > kRawMax) throw std::out_of_range("raw ADC code exceeds 14 bits");
  }
  constexpr std::uint16_t code() const noexcept { return code_; }
  friend constexpr bool operator==(RawSample, RawSample) = default;

 private:
  std::uint16_t code_;
};

/// Encoded sample in [-8192, +8191]; one code is 1/8192 V.
class SignedCode {
 public:
  constexpr SignedCode() = default;
  constexpr explicit SignedCode(int value) : value_(static_cast<std::int16_t>(value)) {
    if (value < kCodeMin || value > kCodeMax) throw std::out_of_range("signed code outside [-8192, 8191]");
  }
  static constexpr SignedCode clamped(std::int64_t value) noexcept {
    SignedCode s;
    s.value_ = static_cast<std::int16_t>(value < kCodeMin ? kCodeMin : value > kCodeMax ? kCodeMax : value);
    return s;
  }
  constexpr int value() const noexcept { return value_; }
  friend constexpr bool operator==(SignedCode, SignedCode) = default;

 private:
  std::int16_t value_ = 0;
};

/// Sign-bit-first complement encoding: 0x0000 -> +8191, 0x3FFF -> -8192.
constexpr SignedCode encode_raw_to_signed(RawSample raw) noexcept {
  return SignedCode::clamped(kCodeMax - static_cast<int>(raw.code()));
}

constexpr RawSample decode_signed_to_raw(SignedCode s) noexcept {
  return RawSample(static_cast<std::uint16_t>(kCodeMax - s.value()));
}

constexpr double signed_to_voltage(SignedCode s) noexcept { return s.value() / kCodesPerVolt; }

/// ADC quantizer: nearest code, saturating at the rails.
constexpr SignedCode voltage_to_signed(double volts) noexcept {
  if (!(volts == volts)) return SignedCode{};
  const double codes = volts * kCodesPerVolt;
  if (codes <= kCodeMin) return SignedCode::clamped(kCodeMin);
  if (codes >= kCodeMax) return SignedCode::clamped(kCodeMax);
  return SignedCode::clamped(round_half_away(codes));
}

struct BiasPoint {
  double temperature_c;
  double bias_mv;
};

/// Temperature -> average analog-channel offset, from a calibration table.
class BiasModel {
 public:
  BiasModel(std::vector<BiasPoint> table, double reference_temperature_c);

  /// Bench calibration of both AI channels, pre-corrected at 24 C.
  static BiasModel bench_default();
  /// A model that never corrects anything.
  static BiasModel zero();

  const std::vector<BiasPoint>& table() const noexcept { return table_; }
  double reference_temperature() const noexcept { return reference_temperature_c_; }
  /// Least-squares slope over every table point, mV per degree C.
  double fitted_slope() const noexcept { return slope_; }

 private:
  std::vector<BiasPoint> table_;
  double reference_temperature_c_;
  double slope_;
};

/// Piecewise-linear inside the table span; outside, continues from the nearest
/// end point with the fitted slope.
double bias_at_temperature(const BiasModel& model, double temperature_c);

/// Offset in ADC codes that the correction subtracts at this temperature.
std::int64_t bias_offset_codes(const BiasModel& model, double temperature_c);

SignedCode apply_bias_correction(SignedCode s, const BiasModel& model, double temperature_c);

/// apply_bias_correction with the offset resolved once, for per-sample use.
class BiasCorrector {
 public:
  BiasCorrector() = default;
  BiasCorrector(const BiasModel& model, double temperature_c)
      : offset_(bias_offset_codes(model, temperature_c)) {}
  SignedCode operator()(SignedCode s) const noexcept { return SignedCode::clamped(s.value() - offset_); }
  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_ = 0;
};

/// One synchronized acquisition record. Wire size is exactly 16 bytes.
struct AcqPacket {
  std::uint64_t timestamp_ns = 0;  // 48 bits on the wire
  std::uint16_t point_index = 0;
  std::int16_t ch1 = 0;
  std::int16_t ch2 = 0;
  std::uint32_t photon_count = 0;

  friend bool operator==(const AcqPacket&, const AcqPacket&) = default;
};

inline constexpr std::size_t kPacketBytes = 16;
inline constexpr std::uint64_t kTimestampMask = (std::uint64_t{1} << 48) - 1;
using PacketBytes = std::array<std::uint8_t, kPacketBytes>;

constexpr std::uint32_t saturating_count(std::uint64_t n) noexcept {
  return n > 0xFFFFFFFFull ? 0xFFFFFFFFu : static_cast<std::uint32_t>(n);
}

/// Layout (big-endian): timestamp 6 | point 2 | ch1 2 | ch2 2 | count 4.
PacketBytes pack_packet(const AcqPacket& p);
void pack_packet(const AcqPacket& p, std::span<std::uint8_t, kPacketBytes> out);
AcqPacket unpack_packet(std::span<const std::uint8_t> bytes);

/// Concatenated wire form of a packet log.
std::vector<std::uint8_t> pack_log(std::span<const AcqPacket> packets);
std::vector<AcqPacket> unpack_log(std::span<const std::uint8_t> bytes);

}  // namespace spindaq
