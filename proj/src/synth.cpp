#include "spindaq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spindaq {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr long double kTwo32 = 4294967296.0L;
constexpr long double kTwo64 = 18446744073709551616.0L;
}  // namespace

std::string_view to_string(Waveform w) noexcept {
  switch (w) {
    case Waveform::sine: return "sine";
    case Waveform::square: return "square";
    case Waveform::triangle: return "triangle";
    case Waveform::sawtooth: return "sawtooth";
  }
  return "sine";
}

Waveform waveform_from_string(std::string_view name) {
  if (name == "sine") return Waveform::sine;
  if (name == "square") return Waveform::square;
  if (name == "triangle") return Waveform::triangle;
  if (name == "sawtooth") return Waveform::sawtooth;
  throw std::invalid_argument("unknown waveform '" + std::string(name) + "'");
}

void validate(const DdsConfig& cfg) {
  if (!(cfg.amplitude_vpp >= 0.0 && cfg.amplitude_vpp <= kMaxAmplitudeVpp))
    throw std::invalid_argument("DDS amplitude must be within 0..2 Vpp");
  if (cfg.frequency_word >= (std::uint32_t{1} << 31))
    throw std::invalid_argument("DDS frequency word must stay below Nyquist (2^31)");
  if (!std::isfinite(cfg.phase_offset)) throw std::invalid_argument("DDS phase offset must be finite");
  if (cfg.fine_word != 0 && cfg.fine_word >= (std::uint64_t{1} << 63))
    throw std::invalid_argument("slow-tone word must stay below Nyquist");
}

void validate(const PwmConfig& cfg) {
  if (cfg.period_ticks < 2) throw std::invalid_argument("PWM period must be at least 2 ticks");
  if (!(cfg.duty >= 0.0 && cfg.duty <= 1.0)) throw std::invalid_argument("PWM duty must be within [0, 1]");
  if (!(cfg.rise_fall_ns >= 0.0)) throw std::invalid_argument("PWM edge time must be non-negative");
}

std::uint32_t compute_ftw(double hz) {
  if (!(hz >= 0.0 && hz <= kNyquistHz))
    throw std::invalid_argument("DDS frequency must be within 0..62.5 MHz");
  return static_cast<std::uint32_t>(std::llround(static_cast<long double>(hz) * kTwo32 / kClockHz));
}

std::uint64_t compute_fine_ftw(double hz) {
  if (!(hz >= 0.0 && hz <= kNyquistHz))
    throw std::invalid_argument("DDS frequency must be within 0..62.5 MHz");
  const long double word = std::round(static_cast<long double>(hz) * kTwo64 / kClockHz);
  return static_cast<std::uint64_t>(word);
}

DdsConfig make_dds(double hz, double amplitude_vpp, double phase_offset, Waveform waveform) {
  DdsConfig cfg;
  cfg.frequency_word = compute_ftw(hz);
  cfg.amplitude_vpp = amplitude_vpp;
  cfg.phase_offset = phase_offset;
  cfg.waveform = waveform;
  if (cfg.frequency_word < kSlowToneWordLimit) cfg.fine_word = compute_fine_ftw(hz);
  validate(cfg);
  return cfg;
}

bool uses_slow_tone(const DdsConfig& cfg) noexcept {
  return cfg.frequency_word < kSlowToneWordLimit && cfg.fine_word != 0;
}

double output_frequency(const DdsConfig& cfg) noexcept {
  if (uses_slow_tone(cfg)) return static_cast<double>(static_cast<long double>(cfg.fine_word) * kClockHz / kTwo64);
  return static_cast<double>(static_cast<long double>(cfg.frequency_word) * kClockHz / kTwo32);
}

double accumulator_phase(const DdsConfig& cfg, std::uint64_t tick) noexcept {
  if (uses_slow_tone(cfg)) {
    const std::uint64_t acc = cfg.fine_word * tick;  // wraps mod 2^64
    return static_cast<double>(static_cast<long double>(acc) / kTwo64) * kTwoPi;
  }
  const auto acc = static_cast<std::uint32_t>(static_cast<std::uint64_t>(cfg.frequency_word) * tick);
  return static_cast<double>(acc) / static_cast<double>(kTwo32) * kTwoPi;
}

double waveform_value(Waveform w, double phase) noexcept {
  double p = std::fmod(phase, kTwoPi);
  if (p < 0.0) p += kTwoPi;
  constexpr double pi = std::numbers::pi;
  switch (w) {
    case Waveform::sine: return std::sin(p);
    case Waveform::square: return p < pi ? 1.0 : -1.0;
    case Waveform::triangle:
      if (p < 0.5 * pi) return 2.0 * p / pi;
      if (p < 1.5 * pi) return 2.0 - 2.0 * p / pi;
      return 2.0 * p / pi - 4.0;
    case Waveform::sawtooth: return p < pi ? p / pi : p / pi - 2.0;
  }
  return 0.0;
}

double dds_peak_volts(const DdsConfig& cfg) noexcept {
  return 0.5 * cfg.amplitude_vpp * output_gain(output_frequency(cfg));
}

double dds_sample(const DdsConfig& cfg, std::uint64_t tick) noexcept {
  return dds_peak_volts(cfg) * waveform_value(cfg.waveform, accumulator_phase(cfg, tick) + cfg.phase_offset);
}

void dds_fill(const DdsConfig& cfg, std::uint64_t tick0, std::uint64_t tick_step, std::span<double> out) noexcept {
  const double peak = dds_peak_volts(cfg);
  if (cfg.waveform != Waveform::sine) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = peak * waveform_value(cfg.waveform, accumulator_phase(cfg, tick0 + i * tick_step) + cfg.phase_offset);
    return;
  }
  // Rotate by the per-sample phase step, re-anchoring on the exact
  // accumulator value every kAnchor samples to keep rounding drift ~1e-15.
  constexpr std::size_t kAnchor = 64;
  const double step = accumulator_phase(cfg, tick_step);
  const double cs = std::cos(step), sn = std::sin(step);
  for (std::size_t i = 0; i < out.size(); i += kAnchor) {
    const double theta = accumulator_phase(cfg, tick0 + i * tick_step) + cfg.phase_offset;
    double c = std::cos(theta), s = std::sin(theta);
    const std::size_t end = std::min(out.size(), i + kAnchor);
    for (std::size_t k = i; k < end; ++k) {
      out[k] = peak * s;
      const double c2 = c * cs - s * sn;
      s = s * cs + c * sn;
      c = c2;
    }
  }
}

double output_gain(double hz) noexcept {
  const double r = hz / kOutputCutoffHz;
  return 1.0 / std::sqrt(1.0 + r * r);
}

double output_power_dbm(double amplitude_vpp, double hz) {
  if (!(amplitude_vpp > 0.0)) throw std::invalid_argument("output power needs a positive amplitude");
  const double v = output_gain(hz) * amplitude_vpp;
  const double watts = v * v / (8.0 * kLoadOhms);
  return 10.0 * std::log10(watts / 1e-3);
}

std::uint64_t pwm_high_ticks(const PwmConfig& cfg) noexcept {
  return static_cast<std::uint64_t>(std::llround(cfg.duty * static_cast<double>(cfg.period_ticks)));
}

bool pwm_level(const PwmConfig& cfg, std::uint64_t tick) noexcept {
  return tick % cfg.period_ticks < pwm_high_ticks(cfg);
}

double pwm_analog(const PwmConfig& cfg, double t_ns, double high_volts) noexcept {
  const double period_ns = static_cast<double>(cfg.period_ticks * kTickNs);
  const double high_ns = static_cast<double>(pwm_high_ticks(cfg) * kTickNs);
  if (high_ns <= 0.0) return 0.0;
  double t = std::fmod(t_ns, period_ns);
  if (t < 0.0) t += period_ns;
  const double edge = cfg.rise_fall_ns;
  double level;
  if (high_ns >= period_ns) level = 1.0;
  else if (t < high_ns) level = edge > 0.0 ? std::min(1.0, t / edge) : 1.0;
  else level = edge > 0.0 ? std::max(0.0, 1.0 - (t - high_ns) / edge) : 0.0;
  return level * high_volts;
}

}  // namespace spindaq
