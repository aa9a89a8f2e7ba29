#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spindaq/lm.hpp"

namespace spindaq {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Reduced chi-square above which a fit is reported as poor.
inline constexpr double kPoorFitReducedChi2 = 5.0;

/// Fitted parameters with their 1-sigma errors.
template <typename Scalar>
struct FitSummary {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> params;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> errors;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance;
  Scalar chi2 = Scalar(0);
  Scalar reduced_chi2 = Scalar(0);
  int iterations = 0;
  bool converged = false;
  bool poor_fit = false;
  std::vector<Scalar> cost_history;
};

template <typename Scalar>
FitSummary<Scalar> summarize(const LmResult<Scalar>& r) {
  FitSummary<Scalar> s;
  s.params = r.params;
  s.covariance = r.covariance;
  s.errors = r.covariance.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();
  s.chi2 = r.chi2;
  s.reduced_chi2 = r.reduced_chi2;
  s.iterations = r.iterations;
  s.converged = r.converged;
  s.poor_fit = !r.converged || !(r.reduced_chi2 <= Scalar(kPoorFitReducedChi2));
  s.cost_history = r.cost_history;
  return s;
}

namespace detail {

template <typename Scalar>
void check_xy(const ArrayX<Scalar>& x, const ArrayX<Scalar>& y, const ArrayX<Scalar>& sigma, Eigen::Index params) {
  if (x.size() != y.size() || x.size() != sigma.size()) throw std::invalid_argument("x, y and sigma differ in length");
  if (x.size() <= params) throw std::invalid_argument("not enough points for the model");
  if (!(sigma > Scalar(0)).all()) throw std::invalid_argument("sigma must be positive");
}

template <typename Scalar>
Scalar median(ArrayX<Scalar> v) {
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-Lorentzian dips: y = b - sum_k d_k L(x; c_k, w_k).

template <typename Scalar>
struct LorentzianDip {
  Scalar center;
  Scalar fwhm;
  Scalar depth;
};

template <typename Scalar>
ArrayX<Scalar> multi_lorentzian(const ArrayX<Scalar>& x, Scalar baseline, const std::vector<LorentzianDip<Scalar>>& dips) {
  ArrayX<Scalar> y = ArrayX<Scalar>::Constant(x.size(), baseline);
  for (const auto& d : dips) {
    const Scalar h2 = d.fwhm * d.fwhm / Scalar(4);
    y -= d.depth * h2 / ((x - d.center).square() + h2);
  }
  return y;
}

/// Local minima of a lightly smoothed trace whose topographic prominence is at
/// least `min_fraction` of the largest one, most prominent first.
template <typename Scalar>
std::vector<Eigen::Index> find_dips(const ArrayX<Scalar>& y, Scalar min_fraction = Scalar(0.2),
                                    std::vector<Scalar>* prominence_out = nullptr) {
  const Eigen::Index n = y.size();
  ArrayX<Scalar> s = y;
  for (Eigen::Index i = 1; i + 1 < n; ++i) s[i] = (y[i - 1] + y[i] + y[i + 1]) / Scalar(3);
  std::vector<Eigen::Index> idx;
  std::vector<Scalar> prom;
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    if (!(s[i] < s[i - 1] && s[i] <= s[i + 1])) continue;
    Scalar left = s[i];
    for (Eigen::Index j = i - 1; j >= 0 && s[j] >= s[i]; --j) left = std::max(left, s[j]);
    Scalar right = s[i];
    for (Eigen::Index j = i + 1; j < n && s[j] >= s[i]; ++j) right = std::max(right, s[j]);
    idx.push_back(i);
    prom.push_back(std::min(left, right) - s[i]);
  }
  std::vector<std::size_t> order(idx.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prom[a] > prom[b]; });
  std::vector<Eigen::Index> out;
  if (prominence_out) prominence_out->clear();
  const Scalar floor = order.empty() ? Scalar(0) : min_fraction * prom[order.front()];
  for (std::size_t k : order) {
    if (prom[k] < floor) break;
    out.push_back(idx[k]);
    if (prominence_out) prominence_out->push_back(prom[k]);
  }
  return out;
}

template <typename Scalar>
struct MultiLorentzianFit {
  Scalar baseline = Scalar(0);
  std::vector<LorentzianDip<Scalar>> dips;  // sorted by center
  std::vector<LorentzianDip<Scalar>> errors;
  FitSummary<Scalar> summary;
};

/// Baseline plus n_lines dips. Parameters are [b, c1, w1, d1, c2, ...].
template <typename Scalar>
MultiLorentzianFit<Scalar> fit_lorentzian_multi(const ArrayX<Scalar>& x, const ArrayX<Scalar>& y,
                                                const ArrayX<Scalar>& sigma, int n_lines,
                                                const LmOptions<Scalar>& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (n_lines < 1) throw std::invalid_argument("need at least one line");
  const Eigen::Index np = 1 + 3 * n_lines;
  detail::check_xy(x, y, sigma, np);
  const Eigen::Index n = x.size();
  const Scalar dx = (x[n - 1] - x[0]) / Scalar(n - 1);

  // Initial guesses from the most prominent dips.
  const Scalar base = detail::median<Scalar>(y);
  std::vector<Scalar> prom;
  std::vector<Eigen::Index> picks = find_dips<Scalar>(y, Scalar(0.2), &prom);
  if (static_cast<int>(picks.size()) < n_lines) {
    std::vector<Scalar> all_prom;
    for (Eigen::Index i : find_dips<Scalar>(y, Scalar(0), &all_prom))
      if (static_cast<int>(picks.size()) < n_lines && std::find(picks.begin(), picks.end(), i) == picks.end())
        picks.push_back(i);
  }
  Eigen::Index deepest = 0;
  y.minCoeff(&deepest);
  for (int k = 0; static_cast<int>(picks.size()) < n_lines; ++k)
    picks.push_back(std::clamp<Eigen::Index>(deepest + (k + 1) * 3, 0, n - 1));
  picks.resize(static_cast<std::size_t>(n_lines));
  std::sort(picks.begin(), picks.end());

  Vector p0(np);
  p0[0] = base;
  for (int k = 0; k < n_lines; ++k) {
    const Eigen::Index i = picks[static_cast<std::size_t>(k)];
    const Scalar depth = std::max(base - y[i], Scalar(1e-12) * std::abs(base) + Scalar(1e-30));
    const Scalar half = y[i] + depth / Scalar(2);
    Eigen::Index lo = i;
    while (lo > 0 && y[lo] < half) --lo;
    Eigen::Index hi = i;
    while (hi + 1 < n && y[hi] < half) ++hi;
    const Scalar width = std::max(x[hi] - x[lo], Scalar(2) * std::abs(dx));
    p0[1 + 3 * k] = x[i];
    p0[2 + 3 * k] = width;
    p0[3 + 3 * k] = depth;
  }

  const ArrayX<Scalar> w = sigma.inverse();
  auto model = [&](const Vector& p, Vector& r, Matrix* J) {
    ArrayX<Scalar> f = ArrayX<Scalar>::Constant(n, p[0]);
    if (J) J->col(0) = -w.matrix();
    for (int k = 0; k < n_lines; ++k) {
      const Scalar c = p[1 + 3 * k];
      const Scalar h = p[2 + 3 * k] / Scalar(2);
      const Scalar d = p[3 + 3 * k];
      const ArrayX<Scalar> u = x - c;
      const ArrayX<Scalar> den = u.square() + h * h;
      const ArrayX<Scalar> L = h * h / den;
      f -= d * L;
      if (J) {
        const ArrayX<Scalar> den2 = den.square();
        // r = (y - f) / sigma, so dr/dp = -(df/dp) / sigma.
        J->col(1 + 3 * k) = (w * d * Scalar(2) * u * h * h / den2).matrix();
        J->col(2 + 3 * k) = (w * d * h * u.square() / den2).matrix();
        J->col(3 + 3 * k) = (w * L).matrix();
      }
    }
    r = ((y - f) * w).matrix();
  };
  const auto lm = levenberg_marquardt<Scalar>(model, n, p0, opts);

  MultiLorentzianFit<Scalar> out;
  out.summary = summarize(lm);
  out.baseline = lm.params[0];
  std::vector<std::pair<LorentzianDip<Scalar>, LorentzianDip<Scalar>>> lines;
  for (int k = 0; k < n_lines; ++k) {
    const auto b = 1 + 3 * k;
    lines.push_back({{lm.params[b], std::abs(lm.params[b + 1]), lm.params[b + 2]},
                     {out.summary.errors[b], out.summary.errors[b + 1], out.summary.errors[b + 2]}});
  }
  std::sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first.center < b.first.center; });
  for (const auto& [v, e] : lines) {
    out.dips.push_back(v);
    out.errors.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Periodic models.

/// Frequency of the strongest periodogram peak of uniformly spaced data,
/// searched on a grid four times finer than 1/span.
template <typename Scalar>
Scalar dominant_frequency(const ArrayX<Scalar>& x, const ArrayX<Scalar>& y) {
  const Eigen::Index n = x.size();
  if (n < 4) throw std::invalid_argument("too few samples for a frequency estimate");
  const Scalar span = x[n - 1] - x[0];
  const Scalar dx = span / Scalar(n - 1);
  const ArrayX<Scalar> v = y - y.mean();
  const Scalar df = Scalar(1) / (Scalar(4) * span);
  const Scalar nyquist = Scalar(0.5) / dx;
  Scalar best_f = df;
  Scalar best_p = Scalar(-1);
  for (Scalar f = df; f < nyquist; f += df) {
    const ArrayX<Scalar> ph = Scalar(2 * std::numbers::pi) * f * (x - x[0]);
    const Scalar c = (v * ph.cos()).sum();
    const Scalar s = (v * ph.sin()).sum();
    const Scalar p = c * c + s * s;
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

/// y = a - b cos(2 pi f x) exp(-gamma x). Parameters [a, b, f, gamma].
template <typename Scalar>
FitSummary<Scalar> fit_damped_cosine(const ArrayX<Scalar>& x, const ArrayX<Scalar>& y, const ArrayX<Scalar>& sigma,
                                     const LmOptions<Scalar>& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::check_xy(x, y, sigma, 4);
  const Eigen::Index n = x.size();
  constexpr Scalar two_pi = Scalar(2 * std::numbers::pi);
  const Scalar span = x[n - 1] - x[0];
  Vector p0(4);
  const Eigen::Index tail = std::max<Eigen::Index>(n / 4, 1);
  p0[0] = y.tail(tail).mean();
  p0[1] = p0[0] - y.head(std::max<Eigen::Index>(n / 50, 1)).mean();
  p0[2] = dominant_frequency<Scalar>(x, y);
  p0[3] = Scalar(1) / span;
  const ArrayX<Scalar> w = sigma.inverse();
  auto model = [&](const Vector& p, Vector& r, Matrix* J) {
    const ArrayX<Scalar> ph = two_pi * p[2] * x;
    const ArrayX<Scalar> e = (-p[3] * x).exp();
    const ArrayX<Scalar> c = ph.cos() * e;
    r = ((y - (p[0] - p[1] * c)) * w).matrix();
    if (J) {
      J->col(0) = -w.matrix();
      J->col(1) = (w * c).matrix();
      J->col(2) = (-w * p[1] * two_pi * x * ph.sin() * e).matrix();
      J->col(3) = (-w * p[1] * x * c).matrix();
    }
  };
  return summarize(levenberg_marquardt<Scalar>(model, n, p0, opts));
}

/// y = a + b cos(2 pi f x) + c sin(2 pi f x). Parameters [a, b, c, f].
template <typename Scalar>
FitSummary<Scalar> fit_sinusoid(const ArrayX<Scalar>& x, const ArrayX<Scalar>& y, const ArrayX<Scalar>& sigma,
                                const LmOptions<Scalar>& opts = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::check_xy(x, y, sigma, 4);
  const Eigen::Index n = x.size();
  constexpr Scalar two_pi = Scalar(2 * std::numbers::pi);
  const Scalar f0 = dominant_frequency<Scalar>(x, y);
  // Linear least squares for the amplitudes at the seed frequency.
  Matrix A(n, 3);
  const ArrayX<Scalar> ph0 = two_pi * f0 * x;
  A.col(0).setOnes();
  A.col(1) = ph0.cos().matrix();
  A.col(2) = ph0.sin().matrix();
  const Vector abc = A.colPivHouseholderQr().solve(y.matrix());
  Vector p0(4);
  p0 << abc[0], abc[1], abc[2], f0;
  const ArrayX<Scalar> w = sigma.inverse();
  auto model = [&](const Vector& p, Vector& r, Matrix* J) {
    const ArrayX<Scalar> ph = two_pi * p[3] * x;
    const ArrayX<Scalar> cs = ph.cos();
    const ArrayX<Scalar> sn = ph.sin();
    r = ((y - (p[0] + p[1] * cs + p[2] * sn)) * w).matrix();
    if (J) {
      J->col(0) = -w.matrix();
      J->col(1) = (-w * cs).matrix();
      J->col(2) = (-w * sn).matrix();
      J->col(3) = (-w * two_pi * x * (p[2] * cs - p[1] * sn)).matrix();
    }
  };
  return summarize(levenberg_marquardt<Scalar>(model, n, p0, opts));
}

// ---------------------------------------------------------------------------
// Photon statistics.

template <typename Scalar>
struct RatioWithError {
  ArrayX<Scalar> ratio;
  ArrayX<Scalar> sigma;
  /// Points whose reference count was zero; ratio and sigma are NaN there.
  std::vector<Eigen::Index> undefined;
};

/// sqrt(N) per bin.
template <typename Derived>
auto poisson_sigma(const Eigen::ArrayBase<Derived>& counts) {
  return counts.sqrt();
}

/// r = N_s / N_r with sigma_r = r sqrt(1/N_s + 1/N_r).
template <typename Scalar>
RatioWithError<Scalar> photon_ratio(const ArrayX<Scalar>& signal, const ArrayX<Scalar>& reference) {
  if (signal.size() != reference.size()) throw std::invalid_argument("count arrays differ in length");
  RatioWithError<Scalar> out;
  out.ratio.resize(signal.size());
  out.sigma.resize(signal.size());
  const Scalar nan = std::numeric_limits<Scalar>::quiet_NaN();
  for (Eigen::Index i = 0; i < signal.size(); ++i) {
    if (!(reference[i] > Scalar(0))) {
      out.ratio[i] = nan;
      out.sigma[i] = nan;
      out.undefined.push_back(i);
      continue;
    }
    const Scalar r = signal[i] / reference[i];
    out.ratio[i] = r;
    // Zero signal would give a zero error; quote the one-count step instead.
    out.sigma[i] = signal[i] > Scalar(0) ? r * std::sqrt(Scalar(1) / signal[i] + Scalar(1) / reference[i])
                                         : Scalar(1) / reference[i];
  }
  return out;
}

}  // namespace spindaq
