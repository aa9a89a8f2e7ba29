#include "spindaq/physics.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace spindaq {

namespace {

double pick(const std::vector<double>& v, std::size_t orientation, std::size_t line) {
  if (v.size() == 1) return v[0];
  if (v.size() == 4) return v[orientation];
  return v[line];
}

void check_per_line(const std::vector<double>& v, const char* what) {
  if (v.size() != 1 && v.size() != 4 && v.size() != 24)
    throw std::invalid_argument(std::string(what) + " needs 1, 4 or 24 entries");
}

}  // namespace

void validate(const NvEnvironment& env) {
  check_per_line(env.contrast, "contrast");
  check_per_line(env.linewidth_mhz, "linewidth");
  for (double c : env.contrast)
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("line contrasts must lie in (0, 1)");
  for (double w : env.linewidth_mhz)
    if (!(w > 0.0)) throw std::invalid_argument("linewidths must be positive");
  double total = 0.0;
  for (std::size_t line = 0; line < 24; ++line) total += pick(env.contrast, line / 6, line);
  if (!(total < 1.0)) throw std::invalid_argument("summed dip depth must stay below 1");
  if (!(env.single_contrast > 0.0 && env.single_contrast < 1.0))
    throw std::invalid_argument("single-NV contrast must lie in (0, 1)");
  if (!(env.single_linewidth_mhz > 0.0)) throw std::invalid_argument("single-NV linewidth must be positive");
  if (!(env.rabi_contrast >= 0.0 && env.rabi_contrast < 1.0))
    throw std::invalid_argument("Rabi contrast must lie in [0, 1)");
  if (!(env.rabi_decay_ns > 0.0)) throw std::invalid_argument("Rabi decay time must be positive");
  if (!(env.baseline_photon_rate_hz >= 0.0)) throw std::invalid_argument("photon rate must be non-negative");
  if (!(env.pd_noise_rms_volts >= 0.0 && env.adc_noise_rms_volts >= 0.0))
    throw std::invalid_argument("noise levels must be non-negative");
}

const std::array<Eigen::Vector3d, 4>& nv_axes() {
  static const std::array<Eigen::Vector3d, 4> axes = [] {
    std::array<Eigen::Vector3d, 4> a{Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(-1, 1, 1), Eigen::Vector3d(1, -1, 1),
                                     Eigen::Vector3d(1, 1, -1)};
    for (auto& v : a) v.normalize();
    return a;
  }();
  return axes;
}

Eigen::Vector4d field_projections(const NvEnvironment& env) {
  Eigen::Vector4d b;
  for (int k = 0; k < 4; ++k) b[k] = std::abs(env.b_field_gauss.dot(nv_axes()[k]));
  return b;
}

std::vector<ResonanceLine> resonance_lines(const NvEnvironment& env) {
  const Eigen::Vector4d b = field_projections(env);
  const double hf[3] = {-env.hyperfine_splitting_mhz, 0.0, env.hyperfine_splitting_mhz};
  std::vector<ResonanceLine> raw;
  raw.reserve(24);
  for (std::size_t k = 0; k < 4; ++k) {
    for (int sign = 0; sign < 2; ++sign) {
      const double shift = env.gyromagnetic_mhz_per_gauss * b[static_cast<Eigen::Index>(k)];
      const double broad = env.zero_field_splitting_mhz + (sign == 0 ? -shift : shift);
      for (std::size_t h = 0; h < 3; ++h) {
        const std::size_t line = k * 6 + static_cast<std::size_t>(sign) * 3 + h;
        raw.push_back({broad + hf[h], pick(env.contrast, k, line), pick(env.linewidth_mhz, k, line)});
      }
    }
  }
  std::stable_sort(raw.begin(), raw.end(),
                   [](const ResonanceLine& a, const ResonanceLine& b) { return a.center_mhz < b.center_mhz; });
  std::vector<ResonanceLine> merged;
  for (const auto& l : raw) {
    if (!merged.empty() && std::abs(merged.back().center_mhz - l.center_mhz) < 1e-9 &&
        merged.back().linewidth_mhz == l.linewidth_mhz) {
      merged.back().contrast += l.contrast;
    } else {
      merged.push_back(l);
    }
  }
  return merged;
}

ResonanceLine single_nv_line(const NvEnvironment& env) {
  return {env.single_center_mhz, env.single_contrast, env.single_linewidth_mhz};
}

std::vector<ResonanceLine> active_lines(const NvEnvironment& env) {
  if (env.target == SpinTarget::single) return {single_nv_line(env)};
  return resonance_lines(env);
}

double cw_odmr_level(double f_mhz, const NvEnvironment& env) {
  const auto lines = active_lines(env);
  return cw_odmr_level<double>(f_mhz, lines);
}

double rabi_level(double t_mw_ns, double contrast, double rabi_freq_mhz, double decay_ns) {
  const double phase = 2.0 * std::numbers::pi * rabi_freq_mhz * 1e-3 * t_mw_ns;
  const double envelope = std::isinf(decay_ns) ? 1.0 : std::exp(-t_mw_ns / decay_ns);
  return 1.0 - 0.5 * contrast * (1.0 - std::cos(phase) * envelope);
}

double rabi_level(double t_mw_ns, const NvEnvironment& env) {
  return rabi_level(t_mw_ns, env.rabi_contrast, env.rabi_frequency_mhz, env.rabi_decay_ns);
}

MwState mw_on_trigger(MwState mw) {
  if (mw.frequency_list_mhz.empty()) throw std::invalid_argument("microwave list is empty");
  mw.cursor = (mw.cursor + 1) % mw.frequency_list_mhz.size();
  return mw;
}

double mw_frequency(const MwState& mw) {
  if (mw.frequency_list_mhz.empty()) throw std::invalid_argument("microwave list is empty");
  return mw.frequency_list_mhz[mw.cursor % mw.frequency_list_mhz.size()];
}

double fm_instantaneous_frequency(double t_ns, const MwState& mw, const DdsConfig& source) {
  const double carrier = mw_frequency(mw);
  if (!mw.fm_enabled) return carrier;
  const double vmax = dds_peak_volts(source);
  if (!(vmax > 0.0)) return carrier;
  const auto tick = static_cast<std::uint64_t>(std::max(0.0, t_ns) / static_cast<double>(kTickNs));
  return carrier + mw.fm_deviation_mhz * dds_sample(source, tick) / vmax;
}

double fm_modulated_rate(double t_s, const NvEnvironment& env, const MwState& mw, const DdsConfig& source) {
  const ResonanceLine line = single_nv_line(env);
  const double f = fm_instantaneous_frequency(t_s * 1e9, mw, source);
  return env.baseline_photon_rate_hz * cw_odmr_level<double>(f, std::span<const ResonanceLine>(&line, 1));
}

}  // namespace spindaq
