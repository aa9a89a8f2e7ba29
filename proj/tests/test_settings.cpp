#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "spindaq/settings.hpp"

using namespace spindaq;

TEST_CASE("expand_sweep spacing and repeats") {
  const auto v = expand_sweep(10.0, 20.0, 3, 2);
  REQUIRE(v.size() == 6);
  const double want[] = {10, 10, 15, 15, 20, 20};
  for (std::size_t i = 0; i < 6; ++i) CHECK(v[i] == want[i]);
  CHECK(expand_sweep(5.0, 9.0, 1) == std::vector<double>{5.0});
  CHECK_THROWS_AS(expand_sweep(0, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(expand_sweep(0, 1, 2, 0), std::invalid_argument);
}

TEST_CASE("SAP settings round-trip and partial update") {
  SapConfig c;
  c.delay_ns = 800;
  c.window_ns = 16'000'000;
  c.points = 1000;
  c.point_repeats = 3;
  c.sweep_repeats = 2;
  c.decimation = 4;
  c.trigger_source = TriggerSource::external_di;
  const SapConfig back = sap_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  const SapConfig upd = sap_from_json(json{{"points", 7}}, c);
  CHECK(upd.points == 7);
  CHECK(upd.window_ns == c.window_ns);
  CHECK(upd.trigger_source == TriggerSource::external_di);

  CHECK_THROWS(sap_from_json(json{{"pattern", "zigzag"}}));
  CHECK_THROWS(sap_from_json(json::array()));
  CHECK_THROWS(sap_from_json(json{{"points", 0}}));
}

TEST_CASE("DDS settings accept a frequency or a tuning word") {
  const auto [ch, c] = dds_from_json(json{{"channel", 0}, {"frequency_hz", 10e6}, {"amplitude_vpp", 1.0}});
  CHECK(ch == 0);
  CHECK(c.frequency_word == static_cast<std::uint32_t>(std::llround(10e6 * 4294967296.0 / 125e6)));
  const json echo = dds_to_json(ch, c);
  const auto [ch2, c2] = dds_from_json(echo);
  CHECK(ch2 == 0);
  CHECK(c2.frequency_word == c.frequency_word);
  CHECK(c2.fine_word == c.fine_word);
  CHECK(c2.amplitude_vpp == c.amplitude_vpp);
  CHECK(to_string(c2.waveform) == "sine");

  CHECK_THROWS_AS(dds_from_json(json{{"channel", 2}, {"frequency_hz", 1e6}, {"amplitude_vpp", 1.0}}),
                  std::invalid_argument);
  CHECK_THROWS(dds_from_json(json{{"channel", 0}, {"frequency_hz", 1e6}}));
  CHECK_THROWS(dds_from_json(json{{"channel", 0}, {"frequency_hz", 1e6}, {"amplitude_vpp", 1.0}, {"waveform", "x"}}));
}

TEST_CASE("PWM settings take ticks or nanoseconds") {
  std::array<MsgChannel, 2> cur{};
  const auto [ch, c] = pwm_from_json(json{{"channel", 1}, {"period_ns", 20'000'000}, {"duty", 0.8}}, cur);
  CHECK(ch == 1);
  CHECK(c.period_ticks == 2'500'000);
  CHECK(c.duty == 0.8);
  const json echo = pwm_to_json(ch, c);
  CHECK(echo.at("period_ticks") == 2'500'000);
  const auto [ch2, c2] = pwm_from_json(echo, cur);
  CHECK(c2.period_ticks == c.period_ticks);
  CHECK(c2.rise_fall_ns == c.rise_fall_ns);

  CHECK_THROWS_AS(pwm_from_json(json{{"channel", 1}, {"period_ns", 100}}, cur), std::invalid_argument);
  CHECK_THROWS(pwm_from_json(json{{"channel", 1}, {"duty", 1.5}}, cur));
}

TEST_CASE("bias settings round-trip") {
  BiasSettings b;
  b.enabled = true;
  b.temperature_c = 42.5;
  const BiasSettings back = bias_from_json(to_json(b));
  CHECK(back.enabled);
  REQUIRE(back.temperature_c.has_value());
  CHECK(*back.temperature_c == 42.5);
  CHECK(back.model.table().size() == b.model.table().size());
  for (double t : {25.0, 30.0, 47.0, 60.0, 70.0}) CHECK(bias_at_temperature(back.model, t) == doctest::Approx(bias_at_temperature(b.model, t)));

  const BiasSettings cleared = bias_from_json(json{{"temperature_c", nullptr}}, back);
  CHECK_FALSE(cleared.temperature_c.has_value());
  CHECK(cleared.enabled);
}

TEST_CASE("environment round-trip keeps infinite decay") {
  NvEnvironment e;
  e.rabi_decay_ns = std::numeric_limits<double>::infinity();
  e.target = SpinTarget::single;
  const json j = to_json(e);
  CHECK(j.at("rabi_decay_ns").is_null());
  const NvEnvironment back = env_from_json(j);
  CHECK(std::isinf(back.rabi_decay_ns));
  CHECK(back.target == SpinTarget::single);
  CHECK(back.b_field_gauss == e.b_field_gauss);
  CHECK(to_json(back) == j);

  CHECK_THROWS(env_from_json(json{{"b_field_gauss", {1, 2}}}));
  CHECK_THROWS(env_from_json(json{{"target", "pair"}}));
}

TEST_CASE("SET_ENV body: sweep and list forms") {
  DeviceSettings s;
  apply_env_json(s, json{{"mw", {{"sweep", {{"start_mhz", 2800.0}, {"stop_mhz", 2900.0}, {"points", 11}, {"repeat_each", 2}}}}},
                          {"pulses", {{"durations_ns", {0.0, 100.0, 200.0}}}},
                          {"routing", {{"ai1", "ground"}, {"ai2", "msg1"}, {"trigger_pwm_channel", 0}}},
                          {"seed", 99}});
  REQUIRE(s.mw.frequency_list_mhz.size() == 22);
  CHECK(s.mw.frequency_list_mhz[0] == 2800.0);
  CHECK(s.mw.frequency_list_mhz[1] == 2800.0);
  CHECK(s.mw.frequency_list_mhz[2] == doctest::Approx(2810.0));
  CHECK(s.mw.frequency_list_mhz[21] == 2900.0);
  CHECK(s.pulse_durations_ns == std::vector<double>{0.0, 100.0, 200.0});
  CHECK(s.routing.ai1 == SignalRoute::ground);
  CHECK(s.routing.ai2 == SignalRoute::msg1);
  CHECK(s.routing.trigger_pwm_channel == 0);
  CHECK(s.seed == 99);

  const json echo = environment_to_json(s);
  CHECK(echo.at("mw").at("count") == 22);
  CHECK(echo.at("mw").at("first_mhz") == 2800.0);
  CHECK(echo.at("mw").at("last_mhz") == 2900.0);
  CHECK(echo.at("pulses").at("count") == 3);
  CHECK(echo.at("pulses").at("last_ns") == 200.0);
  CHECK(echo.at("routing").at("ai1") == "ground");
}

TEST_CASE("SET_ENV rejects bad input without partial changes") {
  DeviceSettings s;
  apply_env_json(s, json{{"mw", {{"frequencies_mhz", {2870.0}}}}});
  const DeviceSettings before = s;
  CHECK_THROWS(apply_env_json(s, json{{"mw", {{"frequencies_mhz", json::array()}}}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"pulses", {{"durations_ns", {10.0, -1.0}}}}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"routing", {{"ai1", "antenna"}}}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"routing", {{"trigger_pwm_channel", 3}}}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"fm", {{"source_channel", 2}}}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"external_trigger_period_ns", 4}}));
  CHECK_THROWS(apply_env_json(s, json{{"seed", 5}, {"mw", {{"start_mhz", 1.0}}}}));
  CHECK(s.seed == before.seed);
  CHECK(s.mw.frequency_list_mhz == before.mw.frequency_list_mhz);
  CHECK(s.external_trigger_period_ns == before.external_trigger_period_ns);
}
