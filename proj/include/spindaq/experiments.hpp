#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "spindaq/client.hpp"
#include "spindaq/lockin.hpp"
#include "spindaq/report.hpp"

namespace spindaq {

/// Samples per window the automatic stride aims for.
inline constexpr std::uint64_t kAutoStrideSamples = 20000;
std::uint32_t auto_stride(std::uint64_t window_ns);

struct CwOdmrOptions {
  double start_mhz = 2790.0;
  double stop_mhz = 2950.0;
  std::uint32_t points = 1000;
  std::uint32_t repeats = 1;
  std::uint32_t sweeps = 1;
  std::uint64_t period_ns = 20'000'000;
  double duty = 0.8;
  /// 0: the PWM high time.
  std::uint64_t window_ns = 0;
  /// 0: automatic.
  std::uint32_t stride = 0;
  /// Lorentzians to fit; 0 skips the fit.
  int fit_lines = 0;
  SpinTarget target = SpinTarget::ensemble;
  /// Use APD counts instead of the photodiode channel.
  bool photon_counting = false;
  std::chrono::milliseconds wait_limit{600'000};
};

/// Throws Error(usage) on an inverted range or fewer than two points.
ExperimentResult run_cw_odmr(Client& client, const CwOdmrOptions& opts);

/// Single-NV dip with photon counting, one Lorentzian fitted.
CwOdmrOptions pulsed_odmr_defaults();
ExperimentResult run_pulsed_odmr(Client& client, CwOdmrOptions opts);

/// Groups sorted line centers separated by less than max_gap; returns group means.
std::vector<double> cluster_centers(std::vector<double> centers, double max_gap_mhz);

struct RabiOptions {
  std::vector<double> durations_ns = expand_sweep(0.0, 4000.0, 201);
  std::uint32_t repeats = 1;
  std::uint32_t sweeps = 1;
  std::uint64_t window_ns = 1'000'000;
  /// Pulse-generator period; 0 picks window + 10 us.
  std::int64_t trigger_period_ns = 0;
  std::uint32_t stride = 0;
  bool fit = true;
  std::chrono::milliseconds wait_limit{600'000};
};

/// Counts per window against MW pulse length, fitted with a damped cosine.
ExperimentResult run_rabi(Client& client, const RabiOptions& opts);

struct LockinOptions {
  double f_mod_hz = 10.0;
  double amplitude_vpp = 1.72;
  double duration_s = 2.0;
  std::uint32_t packets = kRingCapacity;
  /// Peak FM deviation; 0 uses the single-NV linewidth.
  double deviation_mhz = 0.0;
  /// Carrier offset from the single-NV dip.
  double carrier_offset_mhz = 0.0;
  /// Below this reference amplitude (ADC codes) the run fails with ERR_NO_REFERENCE.
  double min_reference_codes = 50.0;
  std::chrono::milliseconds wait_limit{600'000};
};

struct LockinResult {
  ExperimentResult series;
  LockinOutput lockin;
  double reference_frequency_hz = 0.0;
  /// Frequency of a sinusoid fitted to the fluorescence trace.
  double fluorescence_frequency_hz = 0.0;
};

LockinResult run_lockin(Client& client, const LockinOptions& opts);

struct BiasCalibrationOptions {
  std::vector<double> temperatures_c{30, 35, 40, 45, 50, 55, 60};
  std::uint32_t windows = 8;
  std::uint64_t window_ns = 80'000;
};

/// Measures the grounded AI1 offset at each temperature, then the residual
/// with correction enabled. y is the measured bias in mV.
ExperimentResult run_bias_calibration(Client& client, const BiasCalibrationOptions& opts);

}  // namespace spindaq
