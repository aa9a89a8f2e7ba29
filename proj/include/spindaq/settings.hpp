#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spindaq/codec.hpp"
#include "spindaq/physics.hpp"
#include "spindaq/sap.hpp"
#include "spindaq/synth.hpp"

namespace spindaq {

using json = nlohmann::json;

enum class ChannelMode { off, dds, pwm };
/// What feeds an analog input.
enum class SignalRoute { pd, ground, msg0, msg1 };

std::string_view to_string(ChannelMode m) noexcept;
std::string_view to_string(SignalRoute r) noexcept;
SignalRoute signal_route_from_string(std::string_view name);

struct MsgChannel {
  ChannelMode mode = ChannelMode::off;
  DdsConfig dds;
  PwmConfig pwm;
};

struct BiasSettings {
  bool enabled = false;
  BiasModel model = BiasModel::bench_default();
  /// Correction temperature; empty tracks the sample temperature.
  std::optional<double> temperature_c;
};

struct Routing {
  SignalRoute ai1 = SignalRoute::pd;
  SignalRoute ai2 = SignalRoute::msg0;
  int trigger_pwm_channel = 1;
};

/// Everything the host can program, plus the emulated sample.
struct DeviceSettings {
  SapConfig sap;
  std::array<MsgChannel, 2> msg;
  BiasSettings bias;
  NvEnvironment env;
  MwState mw;
  /// MW pulse length per trigger edge; empty means CW.
  std::vector<double> pulse_durations_ns;
  std::int64_t external_trigger_period_ns = 1'000'000;
  Routing routing;
  std::uint64_t seed = 1;
};

/// start..stop in `points` steps, each value repeated `repeat_each` times.
std::vector<double> expand_sweep(double start, double stop, std::uint32_t points, std::uint32_t repeat_each = 1);

// JSON forms. The *_from_json functions apply only the keys present on top of
// `base` and throw std::invalid_argument (or a json exception) on bad input.
json to_json(const SapConfig& cfg);
SapConfig sap_from_json(const json& j, SapConfig base = {});

/// {"channel", "frequency_hz"|"frequency_word", "amplitude_vpp", "phase_rad", "waveform"}
json dds_to_json(int channel, const DdsConfig& cfg);
std::pair<int, DdsConfig> dds_from_json(const json& j);
/// {"channel", "period_ticks"|"period_ns", "duty", "rise_fall_ns"}
json pwm_to_json(int channel, const PwmConfig& cfg);
std::pair<int, PwmConfig> pwm_from_json(const json& j, const std::array<MsgChannel, 2>& current);

json to_json(const BiasSettings& b);
BiasSettings bias_from_json(const json& j, BiasSettings base = {});

json to_json(const NvEnvironment& env);
NvEnvironment env_from_json(const json& j, NvEnvironment base = {});

/// SET_ENV body: "env", "mw", "fm", "pulses", "routing", "external_trigger_period_ns".
void apply_env_json(DeviceSettings& s, const json& j);
/// MW and pulse lists appear as count, first and last so the echo fits one datagram.
json environment_to_json(const DeviceSettings& s);

}  // namespace spindaq
