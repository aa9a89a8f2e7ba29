#include "spindaq/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spindaq/fit.hpp"

namespace spindaq {

namespace {

// Smallest error quoted for a mean of n integer codes.
constexpr double kQuantizationRms = 0.28867513459481287;  // 1/sqrt(12)
constexpr std::uint64_t kTick = kTickNs;

Error usage(const std::string& msg) { return Error(ErrorCategory::usage, "ERR_PARAM", msg); }

std::vector<AcqPacket> acquire(Client& client, const SapConfig& sap, std::chrono::milliseconds limit,
                               std::uint32_t soft_triggers = 0) {
  client.set_sap(sap);
  client.arm();
  for (std::uint32_t i = 0; i < soft_triggers; ++i) client.soft_trigger();
  const InstrumentStatus st = client.wait_until_done(limit);
  if (st.state != RunState::complete)
    throw Error(ErrorCategory::device, "INCOMPLETE",
                "acquisition ended in state " + std::string(to_string(st.state)) + " after " +
                    std::to_string(st.emitted) + " packets");
  if (sap.pattern == Pattern::continuous) return client.read_ring(sap.continuous_read_max);
  return client.read(0, st.stored);
}

/// Per-point sample lists keyed by the packet point index.
std::vector<std::vector<double>> group_by_point(const std::vector<AcqPacket>& packets, std::uint32_t points,
                                                bool photons) {
  std::vector<std::vector<double>> g(points);
  for (const auto& p : packets) {
    if (p.point_index >= points) throw Error(ErrorCategory::device, "BAD_INDEX", "packet point index out of range");
    g[p.point_index].push_back(photons ? static_cast<double>(p.photon_count) : static_cast<double>(p.ch1));
  }
  for (const auto& v : g)
    if (v.empty()) throw Error(ErrorCategory::device, "MISSING_POINT", "a sweep point has no packets");
  return g;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v, double m) {
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

/// Point-to-point scatter, robust to a sparse set of features.
double scatter_estimate(const Eigen::VectorXd& y) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i + 1 < y.size(); ++i) d.push_back(std::abs(y[i + 1] - y[i]));
  return 1.4826 * median_of(d) / std::sqrt(2.0);
}

FitReport to_report(const std::string& model, std::vector<std::string> names, const FitSummary<double>& s) {
  FitReport f;
  f.model = model;
  f.names = std::move(names);
  f.values = s.params;
  f.errors = s.errors;
  f.covariance = s.covariance;
  f.chi2 = s.chi2;
  f.reduced_chi2 = s.reduced_chi2;
  f.iterations = s.iterations;
  f.converged = s.converged;
  f.poor_fit = s.poor_fit;
  return f;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::uint32_t auto_stride(std::uint64_t window_ns) {
  const std::uint64_t ticks = window_ns / kTick;
  return static_cast<std::uint32_t>(std::max<std::uint64_t>(1, (ticks + kAutoStrideSamples - 1) / kAutoStrideSamples));
}

std::vector<double> cluster_centers(std::vector<double> centers, double max_gap_mhz) {
  std::sort(centers.begin(), centers.end());
  std::vector<double> out;
  std::size_t i = 0;
  while (i < centers.size()) {
    std::size_t j = i + 1;
    while (j < centers.size() && centers[j] - centers[j - 1] < max_gap_mhz) ++j;
    double s = 0.0;
    for (std::size_t k = i; k < j; ++k) s += centers[k];
    out.push_back(s / static_cast<double>(j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------

ExperimentResult run_cw_odmr(Client& client, const CwOdmrOptions& o) {
  if (o.points < 2) throw usage("a sweep needs at least 2 points");
  if (!(o.start_mhz < o.stop_mhz)) throw usage("sweep start must be below stop");
  if (o.repeats == 0 || o.sweeps == 0) throw usage("repeats and sweeps must be positive");
  if (o.period_ns == 0 || o.period_ns % kTick != 0) throw usage("PWM period must be a positive multiple of 8 ns");
  if (!(o.duty > 0.0 && o.duty < 1.0)) throw usage("duty must lie in (0, 1)");
  PwmConfig pwm;
  pwm.period_ticks = o.period_ns / kTick;
  pwm.duty = o.duty;
  const std::uint64_t window = o.window_ns ? o.window_ns : pwm_high_ticks(pwm) * kTick;

  client.stop();
  client.set_env({{"env", {{"target", o.target == SpinTarget::single ? "single" : "ensemble"}}},
                  {"mw", {{"sweep", {{"start_mhz", o.start_mhz}, {"stop_mhz", o.stop_mhz}, {"points", o.points},
                                     {"repeat_each", o.repeats}}}}},
                  {"fm", {{"enabled", false}}},
                  {"pulses", {{"durations_ns", json::array()}}},
                  {"routing", {{"ai1", "pd"}, {"trigger_pwm_channel", 1}}}});
  client.set_pwm({{"channel", 1}, {"period_ticks", pwm.period_ticks}, {"duty", o.duty}});
  SapConfig sap;
  sap.pattern = Pattern::sequence;
  sap.trigger_source = TriggerSource::internal_pwm;
  sap.window_ns = window;
  sap.points = o.points;
  sap.point_repeats = o.repeats;
  sap.sweep_repeats = o.sweeps;
  sap.decimation = o.stride ? o.stride : auto_stride(window);

  ExperimentResult r;
  r.kind = o.photon_counting ? "pulsed-odmr" : "cw-odmr";
  r.x_label = "freq_mhz";
  r.y_label = "level";
  r.packets = acquire(client, sap, o.wait_limit);
  const auto groups = group_by_point(r.packets, o.points, o.photon_counting);

  const std::size_t nrep = std::size_t{o.repeats} * o.sweeps;
  std::vector<double> means(o.points);
  for (std::uint32_t i = 0; i < o.points; ++i) means[i] = mean_of(groups[i]);
  const double baseline = median_of(means);
  if (!(baseline > 0.0)) throw Error(ErrorCategory::analysis, "NO_SIGNAL", "off-resonance level is not positive");

  const auto freqs = expand_sweep(o.start_mhz, o.stop_mhz, o.points);
  r.x = to_vector(freqs);
  r.y = to_vector(means) / baseline;
  r.sigma.resize(o.points);
  const double floor = kQuantizationRms / std::sqrt(static_cast<double>(nrep)) / baseline;
  if (o.photon_counting) {
    for (std::uint32_t i = 0; i < o.points; ++i)
      r.sigma[i] = std::max(std::sqrt(means[i] * static_cast<double>(nrep)) / static_cast<double>(nrep) / baseline, floor);
  } else if (nrep >= 2) {
    for (std::uint32_t i = 0; i < o.points; ++i)
      r.sigma[i] = std::max(stderr_of(groups[i], means[i]) / baseline, floor);
  } else {
    r.sigma.setConstant(std::max(scatter_estimate(r.y), floor));
  }
  r.summary["baseline"] = baseline;
  r.summary["window_ns"] = window;
  r.summary["stride"] = sap.decimation;

  if (o.fit_lines > 0) {
    const auto fit = fit_lorentzian_multi<double>(r.x.array(), r.y.array(), r.sigma.array(), o.fit_lines);
    std::vector<std::string> names{"baseline"};
    for (int k = 1; k <= o.fit_lines; ++k) {
      names.push_back("center_" + std::to_string(k));
      names.push_back("fwhm_" + std::to_string(k));
      names.push_back("depth_" + std::to_string(k));
    }
    r.fit = to_report("multi_lorentzian", names, fit.summary);
    std::vector<double> centers;
    json lines = json::array();
    for (std::size_t k = 0; k < fit.dips.size(); ++k) {
      centers.push_back(fit.dips[k].center);
      lines.push_back({{"center_mhz", fit.dips[k].center},
                       {"center_err_mhz", fit.errors[k].center},
                       {"fwhm_mhz", fit.dips[k].fwhm},
                       {"depth", fit.dips[k].depth}});
    }
    r.summary["lines"] = lines;
    // Hyperfine partners sit 2.16 MHz apart; distinct orientations much further.
    r.summary["broad_centers_mhz"] = cluster_centers(centers, 5.0);
    r.extra_columns.emplace_back("fit", multi_lorentzian<double>(r.x.array(), fit.baseline, fit.dips).matrix());
  }
  return r;
}

CwOdmrOptions pulsed_odmr_defaults() {
  CwOdmrOptions o;
  const double center = NvEnvironment{}.single_center_mhz;
  o.start_mhz = center - 10.0;
  o.stop_mhz = center + 10.0;
  o.points = 201;
  o.period_ns = 200'000;
  o.target = SpinTarget::single;
  o.photon_counting = true;
  o.fit_lines = 1;
  return o;
}

ExperimentResult run_pulsed_odmr(Client& client, CwOdmrOptions opts) {
  opts.target = SpinTarget::single;
  opts.photon_counting = true;
  return run_cw_odmr(client, opts);
}

// ---------------------------------------------------------------------------

ExperimentResult run_rabi(Client& client, const RabiOptions& o) {
  if (o.durations_ns.empty()) throw usage("no MW durations given");
  if (o.durations_ns.size() > 0xFFFF) throw usage("at most 65535 durations");
  for (double d : o.durations_ns)
    if (!(d >= 0.0)) throw usage("MW durations must be non-negative");
  if (o.repeats == 0 || o.sweeps == 0) throw usage("repeats and sweeps must be positive");
  if (o.window_ns == 0) throw usage("window must be positive");
  const auto points = static_cast<std::uint32_t>(o.durations_ns.size());
  const std::int64_t period = o.trigger_period_ns ? o.trigger_period_ns : static_cast<std::int64_t>(o.window_ns) + 10'000;

  // Evenly spaced lengths travel as a sweep; anything else as an explicit list.
  json program;
  const auto uniform = expand_sweep(o.durations_ns.front(), o.durations_ns.back(), points);
  bool is_sweep = points >= 2;
  for (std::size_t i = 0; is_sweep && i < points; ++i)
    is_sweep = std::abs(uniform[i] - o.durations_ns[i]) <= 1e-9 * (1.0 + std::abs(uniform[i]));
  if (is_sweep) {
    program = {{"sweep", {{"start_ns", o.durations_ns.front()}, {"stop_ns", o.durations_ns.back()}, {"points", points},
                          {"repeat_each", o.repeats}}}};
  } else {
    std::vector<double> list;
    list.reserve(o.durations_ns.size() * o.repeats);
    for (double d : o.durations_ns) list.insert(list.end(), o.repeats, d);
    program = {{"durations_ns", list}};
  }

  client.stop();
  client.set_env({{"env", {{"target", "ensemble"}}},
                  {"fm", {{"enabled", false}}},
                  {"pulses", program},
                  {"routing", {{"ai1", "pd"}}},
                  {"external_trigger_period_ns", period}});
  SapConfig sap;
  sap.pattern = Pattern::sequence;
  sap.trigger_source = TriggerSource::external_di;
  sap.window_ns = o.window_ns;
  sap.points = points;
  sap.point_repeats = o.repeats;
  sap.sweep_repeats = o.sweeps;
  sap.decimation = o.stride ? o.stride : auto_stride(o.window_ns);

  ExperimentResult r;
  r.kind = "rabi";
  r.x_label = "duration_ns";
  r.y_label = "counts";
  r.packets = acquire(client, sap, o.wait_limit);
  const auto groups = group_by_point(r.packets, points, true);
  const double nrep = static_cast<double>(std::size_t{o.repeats} * o.sweeps);
  r.x = to_vector(o.durations_ns);
  r.y.resize(points);
  r.sigma.resize(points);
  for (std::uint32_t i = 0; i < points; ++i) {
    const double m = mean_of(groups[i]);
    r.y[i] = m;
    // Poisson: the summed count has variance equal to itself.
    r.sigma[i] = std::sqrt(m * nrep) / nrep;
  }

  if (o.fit && points >= 8) {
    const Eigen::ArrayXd t_us = r.x.array() / 1000.0;
    const Eigen::ArrayXd sig = r.sigma.array().max(1.0 / nrep);
    const auto s = fit_damped_cosine<double>(t_us, r.y.array(), sig);
    r.fit = to_report("damped_cosine", {"a", "b", "f_rabi_mhz", "decay_per_us"}, s);
    const double a = s.params[0], b = s.params[1], f = s.params[2], g = s.params[3];
    r.summary["f_rabi_mhz"] = f;
    r.summary["f_rabi_err_mhz"] = s.errors[2];
    r.summary["decay_per_us"] = g;
    r.summary["decay_err_per_us"] = s.errors[3];
    r.summary["tau_us"] = g > 0.0 ? 1.0 / g : std::numeric_limits<double>::infinity();
    const Eigen::ArrayXd curve = a - b * (2.0 * std::numbers::pi * f * t_us).cos() * (-g * t_us).exp();
    r.extra_columns.emplace_back("fit", curve.matrix());
  }
  return r;
}

// ---------------------------------------------------------------------------

LockinResult run_lockin(Client& client, const LockinOptions& o) {
  if (!(o.f_mod_hz > 0.0)) throw usage("modulation frequency must be positive");
  if (!(o.amplitude_vpp > 0.0 && o.amplitude_vpp <= kMaxAmplitudeVpp)) throw usage("amplitude must lie in (0, 2] Vpp");
  if (!(o.duration_s > 0.0)) throw usage("duration must be positive");
  if (o.packets < 16 || o.packets > kRingCapacity) throw usage("packet count must lie in [16, 4096]");
  const double bin_ns = o.duration_s * 1e9 / o.packets;
  const auto k = static_cast<std::uint32_t>(std::ceil(bin_ns / static_cast<double>(kTickNs)));

  client.stop();
  const json echo = client.set_env({{"env", {{"target", "single"}}}});
  const double center = echo.at("env").at("single_center_mhz").get<double>();
  const double deviation =
      o.deviation_mhz > 0.0 ? o.deviation_mhz : echo.at("env").at("single_linewidth_mhz").get<double>();
  client.set_dds({{"channel", 0}, {"frequency_hz", o.f_mod_hz}, {"amplitude_vpp", o.amplitude_vpp}, {"waveform", "sine"}});
  client.set_env({{"mw", {{"frequencies_mhz", {center + o.carrier_offset_mhz}}}},
                  {"fm", {{"enabled", true}, {"deviation_mhz", deviation}, {"source_channel", 0}}},
                  {"pulses", {{"durations_ns", json::array()}}},
                  {"routing", {{"ai1", "ground"}, {"ai2", "msg0"}}}});
  SapConfig sap;
  sap.pattern = Pattern::continuous;
  sap.decimation = k;
  sap.continuous_read_max = o.packets;
  sap.continuous_stop_after = o.packets;

  LockinResult out;
  ExperimentResult& r = out.series;
  r.kind = "lockin";
  r.x_label = "time_s";
  r.y_label = "level";
  r.packets = acquire(client, sap, o.wait_limit);
  const auto n = static_cast<Eigen::Index>(r.packets.size());
  if (n < 16) throw Error(ErrorCategory::device, "SHORT_READ", "ring returned too few packets");

  Eigen::ArrayXd t(n), counts(n), ref(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = r.packets[static_cast<std::size_t>(i)];
    t[i] = static_cast<double>(p.timestamp_ns) * 1e-9;
    counts[i] = p.photon_count;
    ref[i] = p.ch2;
  }
  try {
    out.lockin = lock_in(counts, ref, o.min_reference_codes);
  } catch (const NoReferenceError& e) {
    throw Error(ErrorCategory::analysis, "ERR_NO_REFERENCE", e.what());
  }
  const double dt = static_cast<double>(k) * kTickNs * 1e-9;
  out.reference_frequency_hz = out.lockin.reference_frequency / dt;

  const double mean = counts.mean();
  if (!(mean > 0.0)) throw Error(ErrorCategory::analysis, "NO_SIGNAL", "no photons counted");
  r.x = t.matrix();
  r.y = (counts / mean).matrix();
  r.sigma = (counts.sqrt() / mean).max(1.0 / mean).matrix();
  r.extra_columns.emplace_back("reference_v", (ref / kCodesPerVolt).matrix());
  const auto fit = fit_sinusoid<double>(t - t[0], r.y.array(), r.sigma.array());
  r.fit = to_report("sinusoid", {"offset", "cos_amp", "sin_amp", "frequency_hz"}, fit);
  out.fluorescence_frequency_hz = fit.params[3];

  auto harmonic_json = [](const HarmonicOutput& h) {
    return json{{"x", h.x}, {"y", h.y}, {"r", h.r}, {"phase_deg", h.phase * 180.0 / std::numbers::pi}};
  };
  r.summary["reference_frequency_hz"] = out.reference_frequency_hz;
  r.summary["fluorescence_frequency_hz"] = out.fluorescence_frequency_hz;
  r.summary["harmonic_1"] = harmonic_json(out.lockin.first);
  r.summary["harmonic_2"] = harmonic_json(out.lockin.second);
  r.summary["periods"] = out.lockin.periods;
  r.summary["bin_ticks"] = k;
  return out;
}

// ---------------------------------------------------------------------------

ExperimentResult run_bias_calibration(Client& client, const BiasCalibrationOptions& o) {
  if (o.temperatures_c.empty() || o.windows == 0) throw usage("need temperatures and at least one window");
  SapConfig sap;
  sap.pattern = Pattern::sequence;
  sap.trigger_source = TriggerSource::software;
  sap.window_ns = o.window_ns;
  sap.points = 1;
  sap.point_repeats = o.windows;
  sap.decimation = auto_stride(o.window_ns);

  ExperimentResult r;
  r.kind = "bias-calibration";
  r.x_label = "temperature_c";
  r.y_label = "bias_mv";
  const auto n = static_cast<Eigen::Index>(o.temperatures_c.size());
  r.x = to_vector(o.temperatures_c);
  r.y.resize(n);
  r.sigma.resize(n);
  Eigen::VectorXd corrected(n), table(n);

  client.stop();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double temp = o.temperatures_c[static_cast<std::size_t>(i)];
    client.set_env({{"env", {{"temperature_c", temp}}},
                    {"fm", {{"enabled", false}}},
                    {"pulses", {{"durations_ns", json::array()}}},
                    {"routing", {{"ai1", "ground"}}}});
    for (bool enabled : {false, true}) {
      const json echo = client.set_bias({{"enabled", enabled}, {"temperature_c", nullptr}});
      auto packets = acquire(client, sap, std::chrono::milliseconds(60'000), o.windows);
      std::vector<double> codes;
      for (const auto& p : packets) codes.push_back(p.ch1);
      const double m = mean_of(codes);
      if (!enabled) {
        r.y[i] = m / kCodesPerMillivolt;
        const double se = codes.size() > 1 ? stderr_of(codes, m) : 0.0;
        // Each packet carries a rounded window mean, so averaging packets cannot beat one code of quantization.
        r.sigma[i] = std::max(se, kQuantizationRms) / kCodesPerMillivolt;
        std::vector<BiasPoint> pts;
        for (const auto& row : echo.at("model").at("table")) pts.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
        table[i] = bias_at_temperature(BiasModel(pts, echo.at("model").at("reference_temperature_c").get<double>()), temp);
      } else {
        corrected[i] = m;
      }
      r.packets.insert(r.packets.end(), packets.begin(), packets.end());
    }
  }
  client.set_bias({{"enabled", false}});
  r.extra_columns.emplace_back("table_mv", table);
  r.extra_columns.emplace_back("corrected_code", corrected);
  r.summary["max_abs_corrected_code"] = corrected.cwiseAbs().maxCoeff();
  return r;
}

}  // namespace spindaq
