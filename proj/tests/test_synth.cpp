#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "spindaq/synth.hpp"

using namespace spindaq;

namespace {

// Mean spacing of rising zero crossings (linear interpolation), ns.
double crossing_period_ns(const std::vector<double>& v, double dt_ns) {
  std::vector<double> t;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i - 1] < 0.0 && v[i] >= 0.0) t.push_back((static_cast<double>(i - 1) + v[i - 1] / (v[i - 1] - v[i])) * dt_ns);
  REQUIRE(t.size() >= 2);
  return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

}  // namespace

TEST_CASE("tuning word is round(f * 2^32 / 125 MHz)") {
  for (double f : {0.0, 1.0, 10.0, 1e3, 1e6, 10e6, 49.57e6, 62.5e6}) {
    const auto expected = static_cast<std::uint32_t>(std::llround(f * 4294967296.0 / 125e6));
    CHECK(compute_ftw(f) == expected);
  }
  CHECK(compute_ftw(10e6) == 343597384u);
  CHECK_THROWS_AS(compute_ftw(62.6e6), std::invalid_argument);
  CHECK_THROWS_AS(compute_ftw(-1.0), std::invalid_argument);
}

TEST_CASE("slow tones switch to the 64-bit accumulator") {
  const DdsConfig d = make_dds(10.0, 1.72);
  CHECK(d.frequency_word == 344u);
  CHECK(uses_slow_tone(d));
  CHECK(output_frequency(d) == doctest::Approx(10.0).epsilon(1e-12));
  const DdsConfig fast = make_dds(10e6, 1.0);
  CHECK_FALSE(uses_slow_tone(fast));
  CHECK(output_frequency(fast) == doctest::Approx(343597384.0 * 125e6 / 4294967296.0).epsilon(1e-15));
}

TEST_CASE("10 MHz output has a 100 ns zero-crossing period") {
  const DdsConfig d = make_dds(10e6, 2.0);
  std::vector<double> v(2000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = dds_sample(d, i);
  const double period = crossing_period_ns(v, 8.0);
  CHECK(period == doctest::Approx(100.0).epsilon(1e-3));
}

TEST_CASE("10 Hz slow tone completes one cycle per 100 ms") {
  const DdsConfig d = make_dds(10.0, 1.0);
  const std::uint64_t ticks_per_cycle = 12'500'000;
  CHECK(std::abs(dds_sample(d, 0)) < 1e-9);
  CHECK(dds_sample(d, ticks_per_cycle / 4) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(dds_sample(d, ticks_per_cycle)) < 1e-6);
}

TEST_CASE("output power and roll-off") {
  CHECK(output_power_dbm(2.0, 0.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(output_power_dbm(1.0, 0.0) == doctest::Approx(10.0 + 20.0 * std::log10(0.5)).epsilon(1e-12));
  CHECK(20.0 * std::log10(output_gain(49.57e6)) == doctest::Approx(-10.0 * std::log10(2.0)).epsilon(1e-9));
  CHECK(output_gain(0.0) == 1.0);
  CHECK_THROWS(output_power_dbm(0.0, 0.0));
}

TEST_CASE("amplitude above 2 Vpp and words at Nyquist are rejected") {
  CHECK_THROWS_AS(make_dds(1e6, 2.01), std::invalid_argument);
  DdsConfig d;
  d.amplitude_vpp = 1.0;
  d.frequency_word = 1u << 31;
  CHECK_THROWS_AS(validate(d), std::invalid_argument);
}

TEST_CASE("waveform shapes") {
  constexpr double pi = std::numbers::pi;
  CHECK(waveform_value(Waveform::square, 0.1) == 1.0);
  CHECK(waveform_value(Waveform::square, pi + 0.1) == -1.0);
  CHECK(waveform_value(Waveform::triangle, pi / 2) == doctest::Approx(1.0));
  CHECK(waveform_value(Waveform::triangle, 3 * pi / 2) == doctest::Approx(-1.0));
  CHECK(waveform_value(Waveform::sawtooth, pi / 2) == doctest::Approx(0.5));
  CHECK(waveform_value(Waveform::sine, -pi / 2) == doctest::Approx(-1.0));
  CHECK(waveform_from_string("triangle") == Waveform::triangle);
  CHECK_THROWS(waveform_from_string("noise"));
}

TEST_CASE("block fill matches per-sample synthesis") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> f(0.0, 60e6), ph(-10, 10);
  for (int trial = 0; trial < 20; ++trial) {
    const DdsConfig d = make_dds(trial == 0 ? 10.0 : f(rng), 1.5, ph(rng));
    const std::uint64_t t0 = rng() % 1'000'000'000, step = 1 + rng() % 100;
    std::vector<double> block(1000);
    dds_fill(d, t0, step, block);
    for (std::size_t i = 0; i < block.size(); ++i) CHECK(std::abs(block[i] - dds_sample(d, t0 + i * step)) < 1e-12);
  }
}

TEST_CASE("PWM high time and levels") {
  PwmConfig p{2'500'000, 0.8, 10.0};
  CHECK(pwm_high_ticks(p) == 2'000'000u);
  CHECK(pwm_level(p, 0));
  CHECK(pwm_level(p, 1'999'999));
  CHECK_FALSE(pwm_level(p, 2'000'000));
  CHECK(pwm_level(p, 2'500'000));
  CHECK(pwm_analog(p, 5.0, 0.9) == doctest::Approx(0.45));
  CHECK(pwm_analog(p, 1000.0, 0.9) == doctest::Approx(0.9));
  CHECK(pwm_analog(p, 17e6, 0.9) == 0.0);
  CHECK_THROWS(validate(PwmConfig{1, 0.5, 0}));
  CHECK_THROWS(validate(PwmConfig{10, 1.5, 0}));
}
