#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace spindaq {

/// Reference too weak or too short to recover its phase.
class NoReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reference phase per sample over the span between the first and last
/// rising zero crossings. Cosine convention: phase 0 at the reference peak,
/// so a rising crossing sits at -pi/2.
struct ReferencePhase {
  Eigen::Index begin = 0;  // first covered sample
  Eigen::Index end = 0;    // one past the last covered sample
  Eigen::ArrayXd phase;    // size end - begin
  double frequency = 0.0;  // cycles per sample
  double amplitude = 0.0;
  int periods = 0;
};

/// Default floor on the reference amplitude, in the units of the reference.
inline constexpr double kMinReferenceAmplitude = 1e-9;

/// Requires at least two whole reference periods.
inline ReferencePhase reconstruct_phase(const Eigen::ArrayXd& reference, double min_amplitude = kMinReferenceAmplitude) {
  const Eigen::Index n = reference.size();
  if (n < 4) throw NoReferenceError("reference has too few samples");
  const Eigen::ArrayXd r = reference - reference.mean();
  const double amplitude = std::sqrt(2.0 * r.square().mean());
  if (!(amplitude > min_amplitude)) throw NoReferenceError("reference amplitude too low to lock");
  // Hysteresis keeps noise near zero from producing extra crossings.
  const double arm_level = -0.1 * amplitude;
  std::vector<double> crossings;
  bool armed = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r[i] < arm_level) armed = true;
    if (armed && i > 0 && r[i - 1] < 0.0 && r[i] >= 0.0) {
      crossings.push_back(static_cast<double>(i - 1) + (-r[i - 1]) / (r[i] - r[i - 1]));
      armed = false;
    }
  }
  if (crossings.size() < 3) throw NoReferenceError("fewer than two reference periods recorded");

  ReferencePhase out;
  out.amplitude = amplitude;
  out.periods = static_cast<int>(crossings.size()) - 1;
  out.frequency = out.periods / (crossings.back() - crossings.front());
  out.begin = static_cast<Eigen::Index>(std::ceil(crossings.front()));
  out.end = static_cast<Eigen::Index>(std::ceil(crossings.back()));
  out.phase.resize(out.end - out.begin);
  std::size_t k = 0;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index i = out.begin; i < out.end; ++i) {
    const double t = static_cast<double>(i);
    while (k + 2 < crossings.size() && t >= crossings[k + 1]) ++k;
    const double frac = (t - crossings[k]) / (crossings[k + 1] - crossings[k]);
    out.phase[i - out.begin] = two_pi * (static_cast<double>(k) + frac) - std::numbers::pi / 2.0;
  }
  return out;
}

struct HarmonicOutput {
  int harmonic = 1;
  double x = 0.0;  // in-phase
  double y = 0.0;  // quadrature
  double r = 0.0;
  double phase = 0.0;  // atan2(y, x), radians
};

/// X = (2/T) sum x cos(n phi), Y = (2/T) sum x sin(n phi) over whole
/// reference periods, after removing the mean of x over the same span.
template <typename Derived>
HarmonicOutput demodulate(const Eigen::ArrayBase<Derived>& samples, const ReferencePhase& ref, int harmonic) {
  if (harmonic < 1) throw std::invalid_argument("harmonic must be >= 1");
  if (samples.size() < ref.end) throw std::invalid_argument("samples shorter than the reference span");
  const Eigen::ArrayXd seg = samples.segment(ref.begin, ref.end - ref.begin).template cast<double>();
  const Eigen::ArrayXd v = seg - seg.mean();
  const double scale = 2.0 / static_cast<double>(v.size());
  const Eigen::ArrayXd nphi = harmonic * ref.phase;
  HarmonicOutput h;
  h.harmonic = harmonic;
  h.x = scale * (v * nphi.cos()).sum();
  h.y = scale * (v * nphi.sin()).sum();
  h.r = std::hypot(h.x, h.y);
  h.phase = std::atan2(h.y, h.x);
  return h;
}

template <typename Derived, typename RefDerived>
HarmonicOutput demodulate(const Eigen::ArrayBase<Derived>& samples, const Eigen::ArrayBase<RefDerived>& reference,
                          int harmonic) {
  return demodulate(samples, reconstruct_phase(reference.template cast<double>()), harmonic);
}

struct LockinOutput {
  HarmonicOutput first;
  HarmonicOutput second;
  double reference_frequency = 0.0;  // cycles per sample
  double reference_amplitude = 0.0;
  int periods = 0;
};

template <typename Derived, typename RefDerived>
LockinOutput lock_in(const Eigen::ArrayBase<Derived>& samples, const Eigen::ArrayBase<RefDerived>& reference,
                     double min_reference_amplitude = kMinReferenceAmplitude) {
  const ReferencePhase ref = reconstruct_phase(reference.template cast<double>(), min_reference_amplitude);
  return {demodulate(samples, ref, 1), demodulate(samples, ref, 2), ref.frequency, ref.amplitude, ref.periods};
}

}  // namespace spindaq
