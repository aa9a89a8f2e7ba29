#include "spindaq/settings.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spindaq {

namespace {

void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
}

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (auto it = j.find(key); it != j.end()) into = it->get<T>();
}

std::vector<double> sweep_or_list(const json& j, const char* list_key, const char* start_key, const char* stop_key) {
  if (auto it = j.find(list_key); it != j.end()) return it->get<std::vector<double>>();
  if (auto it = j.find("sweep"); it != j.end()) {
    const json& s = *it;
    require_object(s, "sweep");
    return expand_sweep(s.at(start_key).get<double>(), s.at(stop_key).get<double>(), s.at("points").get<std::uint32_t>(),
                        s.value("repeat_each", std::uint32_t{1}));
  }
  throw std::invalid_argument(std::string("expected \"") + list_key + "\" or \"sweep\"");
}

int channel_of(const json& j) {
  const int ch = j.at("channel").get<int>();
  if (ch != 0 && ch != 1) throw std::invalid_argument("channel must be 0 or 1");
  return ch;
}

json model_to_json(const BiasModel& m) {
  json table = json::array();
  for (const auto& p : m.table()) table.push_back({p.temperature_c, p.bias_mv});
  return {{"table", table}, {"reference_temperature_c", m.reference_temperature()}};
}

BiasModel model_from_json(const json& j, const BiasModel& base) {
  require_object(j, "bias model");
  std::vector<BiasPoint> table = base.table();
  if (auto it = j.find("table"); it != j.end()) {
    table.clear();
    for (const auto& row : *it) table.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
  }
  return BiasModel(std::move(table), j.value("reference_temperature_c", base.reference_temperature()));
}

}  // namespace

std::string_view to_string(ChannelMode m) noexcept {
  switch (m) {
    case ChannelMode::off: return "off";
    case ChannelMode::dds: return "dds";
    case ChannelMode::pwm: return "pwm";
  }
  return "off";
}

std::string_view to_string(SignalRoute r) noexcept {
  switch (r) {
    case SignalRoute::pd: return "pd";
    case SignalRoute::ground: return "ground";
    case SignalRoute::msg0: return "msg0";
    case SignalRoute::msg1: return "msg1";
  }
  return "pd";
}

SignalRoute signal_route_from_string(std::string_view name) {
  for (auto r : {SignalRoute::pd, SignalRoute::ground, SignalRoute::msg0, SignalRoute::msg1})
    if (to_string(r) == name) return r;
  throw std::invalid_argument("unknown signal route: " + std::string(name));
}

std::vector<double> expand_sweep(double start, double stop, std::uint32_t points, std::uint32_t repeat_each) {
  if (points == 0 || repeat_each == 0) throw std::invalid_argument("sweep needs at least one point and repeat");
  std::vector<double> out;
  out.reserve(std::size_t{points} * repeat_each);
  for (std::uint32_t i = 0; i < points; ++i) {
    const double v = points == 1 ? start : start + (stop - start) * i / (points - 1);
    out.insert(out.end(), repeat_each, v);
  }
  return out;
}

json to_json(const SapConfig& c) {
  return {{"delay_ns", c.delay_ns},
          {"window_ns", c.window_ns},
          {"points", c.points},
          {"point_repeats", c.point_repeats},
          {"sweep_repeats", c.sweep_repeats},
          {"continuous_read_max", c.continuous_read_max},
          {"pattern", to_string(c.pattern)},
          {"trigger_source", to_string(c.trigger_source)},
          {"decimation", c.decimation},
          {"continuous_stop_after", c.continuous_stop_after}};
}

SapConfig sap_from_json(const json& j, SapConfig c) {
  require_object(j, "SAP settings");
  take(j, "delay_ns", c.delay_ns);
  take(j, "window_ns", c.window_ns);
  take(j, "points", c.points);
  take(j, "point_repeats", c.point_repeats);
  take(j, "sweep_repeats", c.sweep_repeats);
  take(j, "continuous_read_max", c.continuous_read_max);
  take(j, "decimation", c.decimation);
  take(j, "continuous_stop_after", c.continuous_stop_after);
  if (auto it = j.find("pattern"); it != j.end()) c.pattern = pattern_from_string(it->get<std::string>());
  if (auto it = j.find("trigger_source"); it != j.end())
    c.trigger_source = trigger_source_from_string(it->get<std::string>());
  validate(c);
  return c;
}

json dds_to_json(int channel, const DdsConfig& c) {
  return {{"channel", channel},
          {"frequency_word", c.frequency_word},
          {"fine_word", c.fine_word},
          {"frequency_hz", output_frequency(c)},
          {"amplitude_vpp", c.amplitude_vpp},
          {"phase_rad", c.phase_offset},
          {"waveform", to_string(c.waveform)}};
}

std::pair<int, DdsConfig> dds_from_json(const json& j) {
  require_object(j, "DDS settings");
  const int ch = channel_of(j);
  const double amp = j.at("amplitude_vpp").get<double>();
  const double phase = j.value("phase_rad", 0.0);
  const Waveform w = waveform_from_string(j.value("waveform", std::string("sine")));
  DdsConfig c;
  if (auto it = j.find("frequency_word"); it != j.end()) {
    c.frequency_word = it->get<std::uint32_t>();
    c.fine_word = j.value("fine_word", std::uint64_t{0});
    c.amplitude_vpp = amp;
    c.phase_offset = phase;
    c.waveform = w;
  } else {
    c = make_dds(j.at("frequency_hz").get<double>(), amp, phase, w);
  }
  validate(c);
  return {ch, c};
}

json pwm_to_json(int channel, const PwmConfig& c) {
  return {{"channel", channel}, {"period_ticks", c.period_ticks}, {"duty", c.duty}, {"rise_fall_ns", c.rise_fall_ns}};
}

std::pair<int, PwmConfig> pwm_from_json(const json& j, const std::array<MsgChannel, 2>& current) {
  require_object(j, "PWM settings");
  const int ch = channel_of(j);
  PwmConfig c = current[static_cast<std::size_t>(ch)].pwm;
  take(j, "period_ticks", c.period_ticks);
  if (auto it = j.find("period_ns"); it != j.end()) {
    const auto ns = it->get<std::uint64_t>();
    if (ns % kTickNs != 0) throw std::invalid_argument("PWM period must be a multiple of 8 ns");
    c.period_ticks = ns / kTickNs;
  }
  take(j, "duty", c.duty);
  take(j, "rise_fall_ns", c.rise_fall_ns);
  validate(c);
  return {ch, c};
}

json to_json(const BiasSettings& b) {
  return {{"enabled", b.enabled},
          {"model", model_to_json(b.model)},
          {"temperature_c", b.temperature_c ? json(*b.temperature_c) : json(nullptr)}};
}

BiasSettings bias_from_json(const json& j, BiasSettings b) {
  require_object(j, "bias settings");
  take(j, "enabled", b.enabled);
  if (auto it = j.find("model"); it != j.end()) b.model = model_from_json(*it, b.model);
  if (auto it = j.find("temperature_c"); it != j.end())
    b.temperature_c = it->is_null() ? std::nullopt : std::optional<double>(it->get<double>());
  return b;
}

json to_json(const NvEnvironment& e) {
  return {{"zero_field_splitting_mhz", e.zero_field_splitting_mhz},
          {"gyromagnetic_mhz_per_gauss", e.gyromagnetic_mhz_per_gauss},
          {"hyperfine_splitting_mhz", e.hyperfine_splitting_mhz},
          {"b_field_gauss", {e.b_field_gauss.x(), e.b_field_gauss.y(), e.b_field_gauss.z()}},
          {"linewidth_mhz", e.linewidth_mhz},
          {"contrast", e.contrast},
          {"baseline_photon_rate_hz", e.baseline_photon_rate_hz},
          {"baseline_pd_volts", e.baseline_pd_volts},
          {"pd_noise_rms_volts", e.pd_noise_rms_volts},
          {"adc_noise_rms_volts", e.adc_noise_rms_volts},
          {"temperature_c", e.temperature_c},
          {"channel_bias", model_to_json(e.channel_bias)},
          {"rabi_frequency_mhz", e.rabi_frequency_mhz},
          {"rabi_decay_ns", std::isinf(e.rabi_decay_ns) ? json(nullptr) : json(e.rabi_decay_ns)},
          {"rabi_contrast", e.rabi_contrast},
          {"target", e.target == SpinTarget::single ? "single" : "ensemble"},
          {"single_center_mhz", e.single_center_mhz},
          {"single_linewidth_mhz", e.single_linewidth_mhz},
          {"single_contrast", e.single_contrast}};
}

NvEnvironment env_from_json(const json& j, NvEnvironment e) {
  require_object(j, "environment");
  take(j, "zero_field_splitting_mhz", e.zero_field_splitting_mhz);
  take(j, "gyromagnetic_mhz_per_gauss", e.gyromagnetic_mhz_per_gauss);
  take(j, "hyperfine_splitting_mhz", e.hyperfine_splitting_mhz);
  if (auto it = j.find("b_field_gauss"); it != j.end()) {
    const auto v = it->get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument("b_field_gauss needs 3 components");
    e.b_field_gauss = {v[0], v[1], v[2]};
  }
  take(j, "linewidth_mhz", e.linewidth_mhz);
  take(j, "contrast", e.contrast);
  take(j, "baseline_photon_rate_hz", e.baseline_photon_rate_hz);
  take(j, "baseline_pd_volts", e.baseline_pd_volts);
  take(j, "pd_noise_rms_volts", e.pd_noise_rms_volts);
  take(j, "adc_noise_rms_volts", e.adc_noise_rms_volts);
  take(j, "temperature_c", e.temperature_c);
  if (auto it = j.find("channel_bias"); it != j.end()) e.channel_bias = model_from_json(*it, e.channel_bias);
  take(j, "rabi_frequency_mhz", e.rabi_frequency_mhz);
  if (auto it = j.find("rabi_decay_ns"); it != j.end())
    e.rabi_decay_ns = it->is_null() ? std::numeric_limits<double>::infinity() : it->get<double>();
  take(j, "rabi_contrast", e.rabi_contrast);
  if (auto it = j.find("target"); it != j.end()) {
    const auto t = it->get<std::string>();
    if (t == "single") e.target = SpinTarget::single;
    else if (t == "ensemble") e.target = SpinTarget::ensemble;
    else throw std::invalid_argument("target must be \"ensemble\" or \"single\"");
  }
  take(j, "single_center_mhz", e.single_center_mhz);
  take(j, "single_linewidth_mhz", e.single_linewidth_mhz);
  take(j, "single_contrast", e.single_contrast);
  validate(e);
  return e;
}

void apply_env_json(DeviceSettings& s, const json& j) {
  require_object(j, "SET_ENV body");
  DeviceSettings next = s;
  if (auto it = j.find("env"); it != j.end()) next.env = env_from_json(*it, next.env);
  if (auto it = j.find("mw"); it != j.end()) {
    require_object(*it, "mw");
    next.mw.frequency_list_mhz = sweep_or_list(*it, "frequencies_mhz", "start_mhz", "stop_mhz");
    if (next.mw.frequency_list_mhz.empty()) throw std::invalid_argument("MW list is empty");
    next.mw.cursor = 0;
  }
  if (auto it = j.find("fm"); it != j.end()) {
    require_object(*it, "fm");
    take(*it, "enabled", next.mw.fm_enabled);
    take(*it, "deviation_mhz", next.mw.fm_deviation_mhz);
    take(*it, "source_channel", next.mw.fm_source_channel);
    if (next.mw.fm_source_channel != 0 && next.mw.fm_source_channel != 1)
      throw std::invalid_argument("fm source_channel must be 0 or 1");
  }
  if (auto it = j.find("pulses"); it != j.end()) {
    require_object(*it, "pulses");
    next.pulse_durations_ns = sweep_or_list(*it, "durations_ns", "start_ns", "stop_ns");
    for (double d : next.pulse_durations_ns)
      if (!(d >= 0.0)) throw std::invalid_argument("pulse durations must be non-negative");
  }
  if (auto it = j.find("routing"); it != j.end()) {
    require_object(*it, "routing");
    if (auto r = it->find("ai1"); r != it->end()) next.routing.ai1 = signal_route_from_string(r->get<std::string>());
    if (auto r = it->find("ai2"); r != it->end()) next.routing.ai2 = signal_route_from_string(r->get<std::string>());
    take(*it, "trigger_pwm_channel", next.routing.trigger_pwm_channel);
    if (next.routing.trigger_pwm_channel != 0 && next.routing.trigger_pwm_channel != 1)
      throw std::invalid_argument("trigger_pwm_channel must be 0 or 1");
  }
  take(j, "external_trigger_period_ns", next.external_trigger_period_ns);
  if (next.external_trigger_period_ns < kTickNs) throw std::invalid_argument("external trigger period too short");
  take(j, "seed", next.seed);
  s = std::move(next);
}

namespace {

json list_summary(const std::vector<double>& v, const char* first, const char* last) {
  json j = {{"count", v.size()}};
  if (!v.empty()) {
    j[first] = v.front();
    j[last] = v.back();
  }
  return j;
}

}  // namespace

json environment_to_json(const DeviceSettings& s) {
  return {{"env", to_json(s.env)},
          {"mw", list_summary(s.mw.frequency_list_mhz, "first_mhz", "last_mhz")},
          {"fm",
           {{"enabled", s.mw.fm_enabled},
            {"deviation_mhz", s.mw.fm_deviation_mhz},
            {"source_channel", s.mw.fm_source_channel}}},
          {"pulses", list_summary(s.pulse_durations_ns, "first_ns", "last_ns")},
          {"routing",
           {{"ai1", to_string(s.routing.ai1)},
            {"ai2", to_string(s.routing.ai2)},
            {"trigger_pwm_channel", s.routing.trigger_pwm_channel}}},
          {"external_trigger_period_ns", s.external_trigger_period_ns},
          {"seed", s.seed}};
}

}  // namespace spindaq
