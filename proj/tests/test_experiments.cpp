#include <doctest.h>

#include <cmath>

#include "spindaq/experiments.hpp"
#include "spindaq/server.hpp"

using namespace spindaq;

namespace {

ServerConfig local_config() {
  ServerConfig c;
  c.port = 0;
  return c;
}

std::uint16_t started(DeviceServer& s) {
  s.start();
  return s.port();
}

struct Rig {
  Rig() : server(local_config()), client("127.0.0.1", started(server)) {}
  DeviceServer server;
  Client client;
};

template <typename F>
Error error_from(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("no error thrown");
  return Error(ErrorCategory::internal, "", "");
}

double stddev(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("cw-ODMR defaults: 20 ms PWM at 80 % duty, 16 ms windows") {
  const CwOdmrOptions o;
  CHECK(o.period_ns == 20'000'000);
  CHECK(o.duty == 0.8);
  CHECK(o.points == 1000);
  CHECK(o.start_mhz == 2790.0);
  CHECK(o.stop_mhz == 2950.0);
  CHECK(auto_stride(16'000'000) == 100);
  CHECK(auto_stride(8) == 1);

  Rig rig;
  CwOdmrOptions small = o;
  small.points = 20;
  const ExperimentResult r = run_cw_odmr(rig.client, small);
  CHECK(r.kind == "cw-odmr");
  CHECK(r.summary.at("window_ns") == 16'000'000);
  CHECK(r.x.size() == 20);
  CHECK(r.packets.size() == 20);
  // windows open on successive PWM rising edges
  for (std::size_t i = 1; i < r.packets.size(); ++i)
    CHECK(r.packets[i].timestamp_ns - r.packets[i - 1].timestamp_ns == 20'000'000);
  const json st = json::parse([&] {
    const auto [status, body] = rig.client.transact(proto::Opcode::status);
    return std::string(body.begin(), body.end());
  }());
  CHECK(st.at("config").at("msg").at(1).at("pwm").at("period_ticks") == 2'500'000);
  CHECK(st.at("config").at("msg").at(1).at("pwm").at("duty") == 0.8);
}

TEST_CASE("cw-ODMR input validation") {
  Rig rig;
  CwOdmrOptions o;
  o.start_mhz = 2950;
  o.stop_mhz = 2790;
  Error e = error_from([&] { run_cw_odmr(rig.client, o); });
  CHECK(e.category() == ErrorCategory::usage);
  CHECK(e.code() == "ERR_PARAM");
  o = {};
  o.points = 1;
  CHECK(error_from([&] { run_cw_odmr(rig.client, o); }).category() == ErrorCategory::usage);
  o = {};
  o.duty = 1.0;
  CHECK(error_from([&] { run_cw_odmr(rig.client, o); }).category() == ErrorCategory::usage);
}

TEST_CASE("photon error bars shrink as one over root R") {
  Rig rig;
  CwOdmrOptions o = pulsed_odmr_defaults();
  o.start_mhz = 2000.0;  // far from the single line
  o.stop_mhz = 2010.0;
  o.points = 200;
  o.fit_lines = 0;
  double first_sigma = 0;
  for (std::uint32_t r : {1u, 4u, 16u}) {
    o.repeats = r;
    const ExperimentResult res = run_pulsed_odmr(rig.client, o);
    const double reported = res.sigma.mean();
    // 100 us windows at 1e6 counts/s: 100 counts each
    CHECK(reported == doctest::Approx(0.1 / std::sqrt(r)).epsilon(0.05));
    CHECK(stddev(res.y) == doctest::Approx(reported).epsilon(0.15));
    if (r == 1) first_sigma = reported;
    else CHECK(first_sigma / reported == doctest::Approx(std::sqrt(r)).epsilon(0.05));
  }
}

TEST_CASE("pulsed ODMR finds the single line") {
  Rig rig;
  CwOdmrOptions o = pulsed_odmr_defaults();
  o.repeats = 4;
  const ExperimentResult r = run_pulsed_odmr(rig.client, o);
  REQUIRE(r.fit.has_value());
  const auto& line = r.summary.at("lines").at(0);
  const double truth = 2870.0 - 2.8024 * 520.0;
  const double err = line.at("center_err_mhz").get<double>();
  CHECK(std::abs(line.at("center_mhz").get<double>() - truth) < std::max(4 * err, 0.05));
  CHECK(line.at("depth").get<double>() == doctest::Approx(0.3).epsilon(0.15));
}

TEST_CASE("Rabi oscillation frequency") {
  Rig rig;
  RabiOptions o;
  const ExperimentResult r = run_rabi(rig.client, o);
  REQUIRE(r.fit.has_value());
  CHECK(r.x.size() == 201);
  const double f = r.summary.at("f_rabi_mhz").get<double>();
  CHECK(std::abs(f - 5.0) < 0.02 * 5.0);
  CHECK(r.summary.at("tau_us").get<double>() == doctest::Approx(3.0).epsilon(0.3));

  RabiOptions uneven;
  uneven.durations_ns = {0, 50, 75, 400, 1000};
  uneven.fit = false;
  const ExperimentResult u = run_rabi(rig.client, uneven);
  CHECK(u.x.size() == 5);
  CHECK_FALSE(u.fit.has_value());

  uneven.durations_ns = {10, -1};
  CHECK(error_from([&] { run_rabi(rig.client, uneven); }).category() == ErrorCategory::usage);
}

TEST_CASE("lock-in without a usable reference") {
  Rig rig;
  LockinOptions o;
  o.amplitude_vpp = 1e-3;
  o.duration_s = 0.2;
  const Error e = error_from([&] { run_lockin(rig.client, o); });
  CHECK(e.category() == ErrorCategory::analysis);
  CHECK(e.code() == "ERR_NO_REFERENCE");
}

TEST_CASE("short lock-in run recovers the modulation") {
  Rig rig;
  LockinOptions o;
  o.f_mod_hz = 50.0;
  o.duration_s = 0.4;
  const LockinResult r = run_lockin(rig.client, o);
  CHECK(r.reference_frequency_hz == doctest::Approx(50.0).epsilon(0.01));
  CHECK(r.fluorescence_frequency_hz == doctest::Approx(100.0).epsilon(0.01));
  CHECK(r.lockin.first.r < 0.05 * r.lockin.second.r);
}

TEST_CASE("bias calibration reproduces the table and corrects to zero") {
  Rig rig;
  const ExperimentResult r = run_bias_calibration(rig.client, {});
  const double table_mv[] = {0.124, 0.393, 0.608, 0.803, 0.929, 1.086, 1.275};
  REQUIRE(r.x.size() == 7);
  for (Eigen::Index i = 0; i < 7; ++i) {
    CHECK(r.x[i] == 30.0 + 5.0 * static_cast<double>(i));
    CHECK(std::abs(r.y[i] - table_mv[i]) <= 3 * r.sigma[i]);
  }
  CHECK(r.summary.at("max_abs_corrected_code").get<double>() <= 1.0);
  CHECK_FALSE(rig.client.status().state == RunState::running);
}

TEST_CASE("cluster_centers groups hyperfine partners") {
  const auto g = cluster_centers({2800.0, 2802.16, 2797.84, 2830.0, 2831.0}, 5.0);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(2800.0));
  CHECK(g[1] == doctest::Approx(2830.5));
}
