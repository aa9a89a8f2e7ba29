#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <system_error>
#include <thread>

#include "spindaq/client.hpp"
#include "spindaq/experiments.hpp"
#include "spindaq/report.hpp"
#include "spindaq/server.hpp"

namespace spindaq {

std::atomic<bool> g_shutdown_requested{false};

namespace {

struct Globals {
  std::string host = "127.0.0.1";
  std::uint16_t port = proto::kDefaultPort;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string plot;
  std::string log;
  int timeout_ms = 200;
  int attempts = 5;
};

void emit(const ExperimentResult& r, const Globals& g, std::ostream& out) {
  const std::string path = g.out.empty() ? r.kind + ".csv" : g.out;
  write_csv(path, r);
  if (!g.plot.empty()) write_svg(g.plot, r);
  if (!g.log.empty()) write_packet_log(g.log, r.packets);
  json j = {{"kind", r.kind}, {"csv", path}, {"points", r.x.size()}, {"packets", r.packets.size()}, {"summary", r.summary}};
  if (r.fit) j["fit"] = to_json(*r.fit);
  out << j.dump(2) << "\n";
}

std::string packets_csv(const std::vector<AcqPacket>& packets) {
  std::string s = "timestamp_ns,point_index,ch1,ch2,photon_count\n";
  for (const auto& p : packets)
    s += std::to_string(p.timestamp_ns) + "," + std::to_string(p.point_index) + "," + std::to_string(p.ch1) + "," +
         std::to_string(p.ch2) + "," + std::to_string(p.photon_count) + "\n";
  return s;
}

void report(const std::string& category, const std::string& code, const std::string& message, std::ostream& err) {
  err << "error: category=" << category << " code=" << code << " message=" << message << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emulated DAQ instrument for ODMR: device server and experiment client", "spindaq"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  auto* host_opt = app.add_option("--host", g.host, "Device address")->capture_default_str();
  auto* port_opt = app.add_option("--port", g.port, "Device UDP port")->capture_default_str();
  app.add_option("--seed", g.seed, "Emulation seed sent to the device before the run");
  app.add_option("--config", g.config, "Server config JSON; clients take host and port from it");
  app.add_option("--out", g.out, "Output CSV path (default <experiment>.csv)");
  app.add_option("--plot", g.plot, "Also write an SVG plot here");
  app.add_option("--log", g.log, "Also write the raw packet log here");
  app.add_option("--timeout-ms", g.timeout_ms, "Reply timeout per attempt")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--attempts", g.attempts, "Attempts before TIMEOUT")->check(CLI::PositiveNumber)->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the emulated device");
  std::string bind;
  double loss = 0, dup = 0, reorder = 0, serve_for_s = 0;
  int retransmit_ms = 0;
  std::size_t store_capacity = 0;
  serve->add_option("--bind", bind, "Bind address (default 127.0.0.1)");
  serve->add_option("--loss", loss, "Drop probability for sent datagrams")->check(CLI::Range(0.0, 1.0));
  serve->add_option("--duplicate", dup, "Duplicate probability")->check(CLI::Range(0.0, 1.0));
  serve->add_option("--reorder", reorder, "Reorder probability")->check(CLI::Range(0.0, 1.0));
  serve->add_option("--retransmit-ms", retransmit_ms, "Batch retransmit timeout")->check(CLI::PositiveNumber);
  serve->add_option("--store-capacity", store_capacity, "Packet store size")->check(CLI::PositiveNumber);
  serve->add_option("--serve-for", serve_for_s, "Exit after this many seconds (0: until signalled)");

  // odmr
  auto* odmr = app.add_subcommand("odmr", "cw-ODMR sweep on the photodiode channel");
  CwOdmrOptions cw;
  double period_ms = 20.0, window_us = 0.0;
  std::string target = "ensemble";
  odmr->add_option("--start", cw.start_mhz, "Start frequency, MHz")->capture_default_str();
  odmr->add_option("--stop", cw.stop_mhz, "Stop frequency, MHz")->capture_default_str();
  odmr->add_option("--points", cw.points, "Sweep points (>= 2)")->capture_default_str();
  odmr->add_option("--repeats", cw.repeats, "Windows per point")->capture_default_str();
  odmr->add_option("--sweeps", cw.sweeps, "Sweep repeats")->capture_default_str();
  odmr->add_option("--period-ms", period_ms, "Trigger PWM period")->capture_default_str();
  odmr->add_option("--duty", cw.duty, "Trigger PWM duty")->capture_default_str();
  odmr->add_option("--window-us", window_us, "Detection window (0: PWM high time)")->capture_default_str();
  odmr->add_option("--stride", cw.stride, "Sampling stride K (0: automatic)")->capture_default_str();
  odmr->add_option("--fit-lines", cw.fit_lines, "Lorentzians to fit (0: none)")->capture_default_str();
  odmr->add_option("--target", target, "ensemble or single")->check(CLI::IsMember({"ensemble", "single"}))->capture_default_str();

  // pulsed-odmr
  auto* podmr = app.add_subcommand("pulsed-odmr", "Single-NV dip with APD photon counting");
  CwOdmrOptions pc = pulsed_odmr_defaults();
  double pc_period_us = static_cast<double>(pc.period_ns) / 1e3;
  podmr->add_option("--start", pc.start_mhz, "Start frequency, MHz")->capture_default_str();
  podmr->add_option("--stop", pc.stop_mhz, "Stop frequency, MHz")->capture_default_str();
  podmr->add_option("--points", pc.points, "Sweep points (>= 2)")->capture_default_str();
  podmr->add_option("--repeats", pc.repeats, "Windows per point")->capture_default_str();
  podmr->add_option("--sweeps", pc.sweeps, "Sweep repeats")->capture_default_str();
  podmr->add_option("--period-us", pc_period_us, "Trigger PWM period")->capture_default_str();
  podmr->add_option("--duty", pc.duty, "Trigger PWM duty")->capture_default_str();
  podmr->add_option("--fit-lines", pc.fit_lines, "Lorentzians to fit (0: none)")->capture_default_str();

  // rabi
  auto* rabi = app.add_subcommand("rabi", "Counts against MW pulse length");
  RabiOptions rb;
  double t0 = 0.0, t1 = 4000.0, rb_window_us = 1000.0, rb_period_us = 0.0;
  std::uint32_t rb_points = 201;
  bool no_fit = false;
  rabi->add_option("--t-start-ns", t0, "Shortest pulse")->capture_default_str();
  rabi->add_option("--t-stop-ns", t1, "Longest pulse")->capture_default_str();
  rabi->add_option("--points", rb_points, "Pulse lengths")->capture_default_str();
  rabi->add_option("--repeats", rb.repeats, "Windows per length")->capture_default_str();
  rabi->add_option("--sweeps", rb.sweeps, "Sweep repeats")->capture_default_str();
  rabi->add_option("--window-us", rb_window_us, "Counting window")->capture_default_str();
  rabi->add_option("--trigger-period-us", rb_period_us, "Pulse generator period (0: window + 10 us)");
  rabi->add_flag("--no-fit", no_fit, "Skip the damped-cosine fit");

  // lockin
  auto* lockin = app.add_subcommand("lockin", "FM lock-in on the single-NV dip");
  LockinOptions li;
  lockin->add_option("--f-mod", li.f_mod_hz, "Modulation frequency, Hz")->capture_default_str();
  lockin->add_option("--amplitude", li.amplitude_vpp, "Modulation amplitude, Vpp")->capture_default_str();
  lockin->add_option("--duration", li.duration_s, "Record length, s")->capture_default_str();
  lockin->add_option("--packets", li.packets, "Ring packets to record")->capture_default_str();
  lockin->add_option("--deviation", li.deviation_mhz, "Peak FM deviation, MHz (0: linewidth)")->capture_default_str();
  lockin->add_option("--offset", li.carrier_offset_mhz, "Carrier offset from the dip, MHz")->capture_default_str();

  // dds
  auto* dds = app.add_subcommand("dds", "Configure a synthesizer channel as a DDS tone");
  int dds_channel = 0;
  double freq_hz = 1e6, amp_vpp = 1.0, phase_rad = 0.0;
  std::string waveform = "sine";
  dds->add_option("--channel", dds_channel, "0 or 1")->check(CLI::Range(0, 1))->capture_default_str();
  dds->add_option("--freq", freq_hz, "Frequency, Hz")->capture_default_str();
  dds->add_option("--amplitude", amp_vpp, "Amplitude, Vpp")->capture_default_str();
  dds->add_option("--phase", phase_rad, "Phase offset, rad")->capture_default_str();
  dds->add_option("--waveform", waveform, "sine, square, triangle or sawtooth")->capture_default_str();

  // pwm
  auto* pwm = app.add_subcommand("pwm", "Configure a synthesizer channel as PWM");
  int pwm_channel = 1;
  double pwm_period_ms = 20.0, pwm_duty = 0.8, rise_fall_ns = 10.0;
  pwm->add_option("--channel", pwm_channel, "0 or 1")->check(CLI::Range(0, 1))->capture_default_str();
  pwm->add_option("--period-ms", pwm_period_ms, "Period, ms")->capture_default_str();
  pwm->add_option("--duty", pwm_duty, "Duty cycle")->capture_default_str();
  pwm->add_option("--rise-fall-ns", rise_fall_ns, "Edge time")->capture_default_str();

  // calibrate-bias
  auto* calib = app.add_subcommand("calibrate-bias", "Measure the grounded-input offset against temperature");
  BiasCalibrationOptions bc;
  calib->add_option("--temps", bc.temperatures_c, "Temperatures, C")->capture_default_str();
  calib->add_option("--windows", bc.windows, "Windows per temperature")->capture_default_str();

  // read-raw
  auto* raw = app.add_subcommand("read-raw", "Dump stored packets (or the ring) as CSV");
  std::uint64_t raw_offset = 0, raw_count = 0;
  bool raw_ring = false;
  raw->add_option("--offset", raw_offset, "First stored packet")->capture_default_str();
  raw->add_option("--count", raw_count, "Packets (0: everything stored)")->capture_default_str();
  raw->add_flag("--ring", raw_ring, "Read the continuous ring instead");

  auto* status = app.add_subcommand("status", "Print the device status JSON");

  std::vector<const char*> argv{"spindaq"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report("usage", "ERR_USAGE", e.what(), err);
    return exit_code(ErrorCategory::usage);
  }

  try {
    ServerConfig scfg;
    if (!g.config.empty()) scfg = load_server_config(g.config);
    apply_env_overrides(scfg);
    if (host_opt->count() == 0 && !g.config.empty()) g.host = scfg.bind_host;
    if (port_opt->count() == 0) g.port = scfg.port;

    if (serve->parsed()) {
      scfg.port = g.port;
      if (!bind.empty()) scfg.bind_host = bind;
      else if (host_opt->count()) scfg.bind_host = g.host;
      if (g.seed) scfg.device.seed = *g.seed;
      if (loss > 0 || dup > 0 || reorder > 0) {
        scfg.impairment.loss = loss;
        scfg.impairment.duplicate = dup;
        scfg.impairment.reorder = reorder;
      }
      if (retransmit_ms > 0) scfg.retransmit_timeout = std::chrono::milliseconds(retransmit_ms);
      if (store_capacity > 0) scfg.store_capacity = store_capacity;
      DeviceServer server(scfg);
      server.start();
      out << "listening on " << scfg.bind_host << ":" << server.port() << std::endl;
      const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(serve_for_s);
      while (!g_shutdown_requested && (serve_for_s <= 0 || std::chrono::steady_clock::now() < until))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      server.stop();
      return 0;
    }

    ClientOptions copts;
    copts.timeout = std::chrono::milliseconds(g.timeout_ms);
    copts.max_attempts = g.attempts;
    Client client(g.host, g.port, copts);
    if (g.seed) client.set_env({{"seed", *g.seed}});

    if (odmr->parsed()) {
      cw.period_ns = static_cast<std::uint64_t>(std::llround(period_ms * 1e6));
      cw.window_ns = static_cast<std::uint64_t>(std::llround(window_us * 1e3));
      cw.target = target == "single" ? SpinTarget::single : SpinTarget::ensemble;
      emit(run_cw_odmr(client, cw), g, out);
    } else if (podmr->parsed()) {
      pc.period_ns = static_cast<std::uint64_t>(std::llround(pc_period_us * 1e3));
      emit(run_pulsed_odmr(client, pc), g, out);
    } else if (rabi->parsed()) {
      if (rb_points == 0) throw Error(ErrorCategory::usage, "ERR_PARAM", "need at least one pulse length");
      rb.durations_ns = expand_sweep(t0, t1, rb_points);
      rb.window_ns = static_cast<std::uint64_t>(std::llround(rb_window_us * 1e3));
      rb.trigger_period_ns = std::llround(rb_period_us * 1e3);
      rb.fit = !no_fit;
      emit(run_rabi(client, rb), g, out);
    } else if (lockin->parsed()) {
      emit(run_lockin(client, li).series, g, out);
    } else if (dds->parsed()) {
      json echo = client.set_dds({{"channel", dds_channel},
                                  {"frequency_hz", freq_hz},
                                  {"amplitude_vpp", amp_vpp},
                                  {"phase_rad", phase_rad},
                                  {"waveform", waveform}});
      echo["output_power_dbm"] = output_power_dbm(amp_vpp, freq_hz);
      out << echo.dump(2) << "\n";
    } else if (pwm->parsed()) {
      const json echo = client.set_pwm({{"channel", pwm_channel},
                                        {"period_ns", std::llround(pwm_period_ms * 1e6)},
                                        {"duty", pwm_duty},
                                        {"rise_fall_ns", rise_fall_ns}});
      out << echo.dump(2) << "\n";
    } else if (calib->parsed()) {
      emit(run_bias_calibration(client, bc), g, out);
    } else if (raw->parsed()) {
      std::vector<AcqPacket> packets;
      if (raw_ring) {
        packets = client.read_ring(raw_count ? raw_count : kRingCapacity);
      } else {
        const auto st = client.status();
        if (raw_offset > st.stored) throw Error(ErrorCategory::usage, "ERR_RANGE", "offset beyond stored packets");
        packets = client.read(raw_offset, raw_count ? raw_count : st.stored - raw_offset);
      }
      const std::string path = g.out.empty() ? "packets.csv" : g.out;
      write_file(path, packets_csv(packets));
      if (!g.log.empty()) write_packet_log(g.log, packets);
      out << json{{"csv", path}, {"packets", packets.size()}}.dump() << "\n";
    } else if (status->parsed()) {
      const auto [st, body] = client.transact(proto::Opcode::status);
      if (st != proto::Status::ok) throw Error(ErrorCategory::device, std::string(proto::to_string(st)), "STATUS refused");
      out << json::parse(body.begin(), body.end()).dump(2) << "\n";
    }
    return 0;
  } catch (const Error& e) {
    report(std::string(to_string(e.category())), e.code(), e.what(), err);
    return exit_code(e.category());
  } catch (const std::system_error& e) {
    report("network", "SOCKET", e.what(), err);
    return exit_code(ErrorCategory::network);
  } catch (const std::invalid_argument& e) {
    report("usage", "ERR_PARAM", e.what(), err);
    return exit_code(ErrorCategory::usage);
  } catch (const json::exception& e) {
    report("io", "BAD_JSON", e.what(), err);
    return exit_code(ErrorCategory::io);
  } catch (const std::exception& e) {
    report("internal", "UNEXPECTED", e.what(), err);
    return exit_code(ErrorCategory::internal);
  }
}

}  // namespace spindaq
