#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace spindaq {

inline constexpr double kClockHz = 125e6;
inline constexpr std::int64_t kTickNs = 8;
inline constexpr double kNyquistHz = kClockHz / 2.0;
inline constexpr double kMaxAmplitudeVpp = 2.0;
inline constexpr double kLoadOhms = 50.0;
/// -3 dB point of the output stage.
inline constexpr double kOutputCutoffHz = 49.57e6;
/// Below this tuning word the 64-bit slow-tone accumulator takes over.
inline constexpr std::uint32_t kSlowToneWordLimit = 1000;

enum class Waveform { sine, square, triangle, sawtooth };

std::string_view to_string(Waveform w) noexcept;
Waveform waveform_from_string(std::string_view name);

struct DdsConfig {
  std::uint32_t frequency_word = 0;
  double amplitude_vpp = 0.0;
  double phase_offset = 0.0;  // radians
  Waveform waveform = Waveform::sine;
  /// Increment of the 64-bit slow-tone accumulator; used only when
  /// frequency_word < kSlowToneWordLimit and this is nonzero.
  std::uint64_t fine_word = 0;
};

struct PwmConfig {
  std::uint64_t period_ticks = 2;
  double duty = 0.5;
  double rise_fall_ns = 10.0;
};

/// Throws std::invalid_argument on amplitude above 2 Vpp or a word at/above Nyquist.
void validate(const DdsConfig& cfg);
void validate(const PwmConfig& cfg);

/// round(f * 2^32 / 125 MHz); rejects f outside [0, 62.5 MHz].
std::uint32_t compute_ftw(double hz);
/// round(f * 2^64 / 125 MHz), the slow-tone increment.
std::uint64_t compute_fine_ftw(double hz);

/// Full channel setup for a tone, switching to the slow-tone path when the
/// 32-bit word would be too coarse.
DdsConfig make_dds(double hz, double amplitude_vpp, double phase_offset = 0.0, Waveform waveform = Waveform::sine);

bool uses_slow_tone(const DdsConfig& cfg) noexcept;
/// Frequency actually produced by the accumulator.
double output_frequency(const DdsConfig& cfg) noexcept;
/// Accumulator phase at a tick mapped to [0, 2pi), without the offset.
double accumulator_phase(const DdsConfig& cfg, std::uint64_t tick) noexcept;
/// Unit-amplitude waveform of a phase in radians (any real value).
double waveform_value(Waveform w, double phase) noexcept;
double dds_sample(const DdsConfig& cfg, std::uint64_t tick) noexcept;
/// out[i] = dds_sample(tick0 + i * tick_step) to within ~1e-14 V.
void dds_fill(const DdsConfig& cfg, std::uint64_t tick0, std::uint64_t tick_step, std::span<double> out) noexcept;
/// Peak output voltage after roll-off.
double dds_peak_volts(const DdsConfig& cfg) noexcept;

/// Single-pole roll-off 1/sqrt(1 + (f/fc)^2).
double output_gain(double hz) noexcept;
double output_power_dbm(double amplitude_vpp, double hz);

std::uint64_t pwm_high_ticks(const PwmConfig& cfg) noexcept;
bool pwm_level(const PwmConfig& cfg, std::uint64_t tick) noexcept;
/// Analog rendering with linear edges of rise_fall_ns, for scope loopback.
double pwm_analog(const PwmConfig& cfg, double t_ns, double high_volts) noexcept;

}  // namespace spindaq
