#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include "spindaq/codec.hpp"

using namespace spindaq;

namespace {

// Calibration table of the bench channel offset, mV.
constexpr std::array<std::pair<double, double>, 7> kTable{{
    {30, 0.124}, {35, 0.393}, {40, 0.608}, {45, 0.803}, {50, 0.929}, {55, 1.086}, {60, 1.275}}};

double ls_slope() {
  double st = 0, sb = 0;
  for (auto [t, b] : kTable) st += t, sb += b;
  const double mt = st / kTable.size(), mb = sb / kTable.size();
  double num = 0, den = 0;
  for (auto [t, b] : kTable) num += (t - mt) * (b - mb), den += (t - mt) * (t - mt);
  return num / den;
}

}  // namespace

TEST_CASE("raw code endpoints and midpoint") {
  CHECK(encode_raw_to_signed(RawSample(0x0000)).value() == 8191);
  CHECK(encode_raw_to_signed(RawSample(0x3FFF)).value() == -8192);
  CHECK(encode_raw_to_signed(RawSample(0x1FFF)).value() == 0);
  CHECK(encode_raw_to_signed(RawSample(0x2000)).value() == -1);
}

TEST_CASE("raw/signed mapping is a bijection on 14 bits") {
  std::set<int> seen;
  for (int raw = 0; raw <= 0x3FFF; ++raw) {
    const SignedCode s = encode_raw_to_signed(RawSample(static_cast<std::uint16_t>(raw)));
    CHECK(s.value() == 8191 - raw);
    CHECK(decode_signed_to_raw(s).code() == raw);
    seen.insert(s.value());
  }
  CHECK(seen.size() == 16384);
}

TEST_CASE("raw sample rejects codes above 14 bits") {
  CHECK_THROWS_AS(RawSample(0x4000), std::out_of_range);
  CHECK_THROWS_AS(SignedCode(8192), std::out_of_range);
  CHECK_THROWS_AS(SignedCode(-8193), std::out_of_range);
}

TEST_CASE("voltage scale is 1/8192 V per code") {
  CHECK(signed_to_voltage(SignedCode(8191)) == 8191.0 / 8192.0);
  CHECK(signed_to_voltage(SignedCode(-8192)) == -1.0);
  CHECK(signed_to_voltage(SignedCode(1)) == 1.0 / 8192.0);
  CHECK(voltage_to_signed(0.5).value() == 4096);
  CHECK(voltage_to_signed(2.0).value() == 8191);
  CHECK(voltage_to_signed(-2.0).value() == -8192);
  CHECK(voltage_to_signed(2.5 / 8192.0).value() == 3);
  CHECK(voltage_to_signed(-2.5 / 8192.0).value() == -3);
  CHECK(voltage_to_signed(std::nan("")).value() == 0);
}

TEST_CASE("round half away from zero") {
  CHECK(round_half_away(2.5) == 3);
  CHECK(round_half_away(-2.5) == -3);
  CHECK(round_half_away(2.4999999999999996) == 2);
  CHECK(round_half_away(0.49999999999999994) == 0);
  CHECK(round_half_away(-0.49999999999999994) == 0);
  for (double x = -50.0; x <= 50.0; x += 0.37) CHECK(round_half_away(x) == static_cast<std::int64_t>(std::round(x)));
}

TEST_CASE("bias model reproduces the calibration table") {
  const BiasModel m = BiasModel::bench_default();
  for (auto [t, b] : kTable) CHECK(bias_at_temperature(m, t) == b);
}

TEST_CASE("bias model interpolates linearly inside the table") {
  const BiasModel m = BiasModel::bench_default();
  CHECK(bias_at_temperature(m, 32.5) == doctest::Approx((0.124 + 0.393) / 2).epsilon(1e-12));
  CHECK(bias_at_temperature(m, 59.0) == doctest::Approx(1.086 + 0.8 * (1.275 - 1.086)).epsilon(1e-12));
}

TEST_CASE("bias model extrapolates with the least-squares slope") {
  const BiasModel m = BiasModel::bench_default();
  const double slope = ls_slope();
  CHECK(m.fitted_slope() == doctest::Approx(slope).epsilon(1e-12));
  CHECK(slope == doctest::Approx(0.036857).epsilon(1e-4));
  CHECK(bias_at_temperature(m, 24.0) == doctest::Approx(0.124 - 6.0 * slope).epsilon(1e-12));
  CHECK(bias_at_temperature(m, 70.0) == doctest::Approx(1.275 + 10.0 * slope).epsilon(1e-12));
}

TEST_CASE("bias model rejects bad tables") {
  CHECK_THROWS_AS(BiasModel({{30, 0.1}}, 24), std::invalid_argument);
  CHECK_THROWS_AS(BiasModel({{30, 0.1}, {30, 0.2}}, 24), std::invalid_argument);
}

TEST_CASE("bias correction leaves at most one code at each table temperature") {
  const BiasModel m = BiasModel::bench_default();
  for (auto [t, b] : kTable) {
    const int expected_offset = static_cast<int>(std::lround(b * 8.192));
    CHECK(bias_offset_codes(m, t) == expected_offset);
    const SignedCode measured = voltage_to_signed(b * 1e-3);
    CHECK(std::abs(apply_bias_correction(measured, m, t).value()) <= 1);
    CHECK(BiasCorrector(m, t)(measured) == apply_bias_correction(measured, m, t));
  }
}

TEST_CASE("bias correction saturates at the rails") {
  const BiasModel m = BiasModel::bench_default();
  CHECK(apply_bias_correction(SignedCode(-8192), m, 60).value() == -8192);
}

TEST_CASE("packet layout is big-endian, 16 bytes") {
  AcqPacket p;
  p.timestamp_ns = 0x010203040506ull;
  p.point_index = 0x0708;
  p.ch1 = -2;
  p.ch2 = 0x0A0B;
  p.photon_count = 0x0C0D0E0F;
  const std::array<std::uint8_t, 16> expected{0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,
                                              0xFF, 0xFE, 0x0A, 0x0B, 0x0C, 0x0D, 0x0E, 0x0F};
  const auto bytes = pack_packet(p);
  CHECK(std::equal(bytes.begin(), bytes.end(), expected.begin()));
  CHECK(unpack_packet(bytes) == p);
}

TEST_CASE("packet codec rejects out-of-range fields and wrong sizes") {
  AcqPacket p;
  p.timestamp_ns = std::uint64_t{1} << 48;
  CHECK_THROWS_AS(pack_packet(p), std::out_of_range);
  p.timestamp_ns = 0;
  p.ch1 = 8192;
  CHECK_THROWS(pack_packet(p));
  std::array<std::uint8_t, 15> short_buf{};
  CHECK_THROWS_AS(unpack_packet(short_buf), std::invalid_argument);
}

TEST_CASE("photon counts saturate at 32 bits") {
  CHECK(saturating_count(5) == 5);
  CHECK(saturating_count(std::uint64_t{1} << 40) == 0xFFFFFFFFu);
}

TEST_CASE("packet log round-trips") {
  std::vector<AcqPacket> v;
  for (int i = 0; i < 100; ++i)
    v.push_back({static_cast<std::uint64_t>(i) * 977, static_cast<std::uint16_t>(i), static_cast<std::int16_t>(i - 50),
                 static_cast<std::int16_t>(-i), static_cast<std::uint32_t>(i * i)});
  const auto bytes = pack_log(v);
  CHECK(bytes.size() == 1600);
  CHECK(unpack_log(bytes) == v);
  std::vector<std::uint8_t> bad(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS(unpack_log(bad));
}
