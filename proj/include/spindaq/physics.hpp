#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "spindaq/codec.hpp"
#include "spindaq/synth.hpp"

namespace spindaq {

struct ResonanceLine {
  double center_mhz = 0.0;
  double contrast = 0.0;
  double linewidth_mhz = 1.0;  // FWHM
};

enum class SpinTarget { ensemble, single };

/// Ground truth for the emulated sample and optics.
struct NvEnvironment {
  double zero_field_splitting_mhz = 2870.0;
  double gyromagnetic_mhz_per_gauss = 2.8024;
  double hyperfine_splitting_mhz = 2.16;
  Eigen::Vector3d b_field_gauss{6.0, 12.0, 24.0};
  // 1 entry (all lines), 4 (per orientation) or 24 (per line).
  std::vector<double> linewidth_mhz{0.6};
  std::vector<double> contrast{0.0045, 0.004, 0.005, 0.0035};

  double baseline_photon_rate_hz = 1e6;
  double baseline_pd_volts = 0.8;
  double pd_noise_rms_volts = 2e-3;
  double adc_noise_rms_volts = 0.5e-3;
  double temperature_c = 24.0;
  /// True offset of the analog inputs versus temperature.
  BiasModel channel_bias = BiasModel::bench_default();

  double rabi_frequency_mhz = 5.0;
  double rabi_decay_ns = 3000.0;
  double rabi_contrast = 0.1;

  SpinTarget target = SpinTarget::ensemble;
  // Single NV at ~52 mT with the nitrogen spin polarized: one line.
  double single_center_mhz = 2870.0 - 2.8024 * 520.0;
  double single_linewidth_mhz = 1.0;
  double single_contrast = 0.3;
};

/// Throws std::invalid_argument if contrasts/widths are out of range.
void validate(const NvEnvironment& env);

/// The four <111> bond directions, normalized.
const std::array<Eigen::Vector3d, 4>& nv_axes();

/// |B . n_k| for each NV orientation, gauss.
Eigen::Vector4d field_projections(const NvEnvironment& env);

/// Ensemble lines sorted by frequency: two electron transitions per
/// orientation, each split into a nitrogen hyperfine triplet. Lines that land
/// on the same frequency with the same width are merged.
std::vector<ResonanceLine> resonance_lines(const NvEnvironment& env);
ResonanceLine single_nv_line(const NvEnvironment& env);
/// Lines of whichever target the environment selects.
std::vector<ResonanceLine> active_lines(const NvEnvironment& env);

template <typename Scalar>
Scalar lorentzian(Scalar f, Scalar center, Scalar fwhm) {
  const Scalar hw = fwhm / Scalar(2);
  const Scalar d = f - center;
  return hw * hw / (d * d + hw * hw);
}

template <typename Derived>
auto lorentzian(const Eigen::ArrayBase<Derived>& f, typename Derived::Scalar center,
                typename Derived::Scalar fwhm) {
  using Scalar = typename Derived::Scalar;
  const Scalar hw2 = (fwhm / Scalar(2)) * (fwhm / Scalar(2));
  return hw2 / ((f - center).square() + hw2);
}

/// 1 - sum_l C_l L(f; f_l, Gamma_l).
template <typename Scalar>
Scalar cw_odmr_level(Scalar f_mhz, std::span<const ResonanceLine> lines) {
  Scalar level(1);
  for (const auto& l : lines)
    level -= Scalar(l.contrast) * lorentzian<Scalar>(f_mhz, Scalar(l.center_mhz), Scalar(l.linewidth_mhz));
  return level;
}

template <typename Derived>
Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1> cw_odmr_spectrum(const Eigen::ArrayBase<Derived>& f_mhz,
                                                                         std::span<const ResonanceLine> lines) {
  using Scalar = typename Derived::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> level = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(f_mhz.size());
  for (const auto& l : lines)
    level -= Scalar(l.contrast) * lorentzian(f_mhz, Scalar(l.center_mhz), Scalar(l.linewidth_mhz));
  return level;
}

double cw_odmr_level(double f_mhz, const NvEnvironment& env);

/// 1 - (C/2)(1 - cos(2 pi f_R t) exp(-t/tau)); decay_ns may be infinite.
double rabi_level(double t_mw_ns, double contrast, double rabi_freq_mhz, double decay_ns);
double rabi_level(double t_mw_ns, const NvEnvironment& env);

/// Emulated microwave generator in list mode.
struct MwState {
  std::vector<double> frequency_list_mhz{2870.0};
  std::size_t cursor = 0;
  bool fm_enabled = false;
  double fm_deviation_mhz = 0.0;
  int fm_source_channel = 0;
};

/// Cursor steps once per trigger edge and wraps at the end of the list.
MwState mw_on_trigger(MwState mw);
double mw_frequency(const MwState& mw);

/// Carrier plus deviation scaled by the live modulation voltage.
double fm_instantaneous_frequency(double t_ns, const MwState& mw, const DdsConfig& source);

/// Photon rate of the single NV under frequency modulation.
double fm_modulated_rate(double t_s, const NvEnvironment& env, const MwState& mw, const DdsConfig& source);

/// Poisson count for a time-varying rate by thinning a homogeneous process
/// of rate rate_bound_hz. rate_hz(t_ns) must stay within [0, rate_bound_hz].
template <typename RateFn, typename Rng>
std::uint64_t sample_photons(RateFn&& rate_hz, double rate_bound_hz, double t0_ns, double span_ns, Rng& rng) {
  if (!(rate_bound_hz > 0.0) || !(span_ns > 0.0)) return 0;
  std::exponential_distribution<double> gap(rate_bound_hz * 1e-9);
  std::uniform_real_distribution<double> accept(0.0, rate_bound_hz);
  const double t_end = t0_ns + span_ns;
  std::uint64_t n = 0;
  for (double t = t0_ns + gap(rng); t < t_end; t += gap(rng)) {
    if (accept(rng) < rate_hz(t)) ++n;
  }
  return n;
}

/// Constant-rate case; identical in law to thinning with a flat rate.
template <typename Rng>
std::uint64_t sample_photons(double rate_hz, double span_ns, Rng& rng) {
  const double mean = rate_hz * span_ns * 1e-9;
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(rng);
}

/// Photodetector output: scaled level, Gaussian noise, channel offset.
template <typename Rng>
double pd_voltage(double level, const NvEnvironment& env, Rng& rng) {
  double v = env.baseline_pd_volts * level;
  if (env.pd_noise_rms_volts > 0.0) v += std::normal_distribution<double>(0.0, env.pd_noise_rms_volts)(rng);
  return v + bias_at_temperature(env.channel_bias, env.temperature_c) * 1e-3;
}

}  // namespace spindaq
