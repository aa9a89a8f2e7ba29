#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <stdexcept>

#include "spindaq/fit.hpp"
#include "spindaq/lockin.hpp"
#include "spindaq/report.hpp"

using namespace spindaq;

namespace {

constexpr double kPi = std::numbers::pi;

double lorentz_dip(double x, double c, double fwhm, double depth) {
  const double h = fwhm / 2;
  return depth * h * h / ((x - c) * (x - c) + h * h);
}

// Line centers for B = (6, 12, 24) G, D = 2870 MHz, 2.8024 MHz/G, 2.16 MHz hyperfine.
std::vector<double> ensemble_centers() {
  const double s3 = std::sqrt(3.0);
  const double proj[4] = {42 / s3, 30 / s3, 18 / s3, 6 / s3};
  std::vector<double> c;
  for (double b : proj)
    for (int sign : {-1, 1})
      for (double hf : {-2.16, 0.0, 2.16}) c.push_back(2870.0 + sign * 2.8024 * b + hf);
  std::sort(c.begin(), c.end());
  return c;
}

ArrayX<double> linspace(double a, double b, Eigen::Index n) { return ArrayX<double>::LinSpaced(n, a, b); }

}  // namespace

TEST_CASE("24-line spectrum: every fitted center within 0.01 MHz") {
  const auto truth = ensemble_centers();
  REQUIRE(truth.size() == 24);
  const ArrayX<double> x = linspace(2790, 2950, 1000);
  ArrayX<double> y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = 1.0;
    for (double c : truth) y[i] -= lorentz_dip(x[i], c, 0.6, 0.004);
  }
  const ArrayX<double> sigma = ArrayX<double>::Constant(x.size(), 1e-4);
  const auto fit = fit_lorentzian_multi<double>(x, y, sigma, 24);
  REQUIRE(fit.dips.size() == 24);
  for (std::size_t k = 0; k < 24; ++k) CHECK(std::abs(fit.dips[k].center - truth[k]) < 0.01);
  CHECK(fit.baseline == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(fit.summary.poor_fit);
}

TEST_CASE("a single exact line fits to machine precision") {
  const double c = 2870.0 - 2.8024 * 520.0;
  const ArrayX<double> x = linspace(c - 10, c + 10, 201);
  ArrayX<double> y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = 1.0 - lorentz_dip(x[i], c, 1.0, 0.3);
  const auto fit = fit_lorentzian_multi<double>(x, y, ArrayX<double>::Constant(x.size(), 1e-3), 1);
  CHECK(std::abs(fit.dips[0].center - c) < 1e-9);
  CHECK(std::abs(fit.dips[0].fwhm - 1.0) < 1e-9);
  CHECK(std::abs(fit.dips[0].depth - 0.3) < 1e-9);
  CHECK(fit.summary.chi2 < 1e-12);
  CHECK(fit.summary.converged);
  const auto& h = fit.summary.cost_history;
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);
}

TEST_CASE("too few lines for the data is flagged as a poor fit") {
  const ArrayX<double> x = linspace(2850, 2890, 400);
  ArrayX<double> y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    y[i] = 1.0 - lorentz_dip(x[i], 2860, 1.0, 0.1) - lorentz_dip(x[i], 2880, 1.0, 0.08);
  const auto one = fit_lorentzian_multi<double>(x, y, ArrayX<double>::Constant(x.size(), 1e-3), 1);
  CHECK(one.summary.poor_fit);
  const auto two = fit_lorentzian_multi<double>(x, y, ArrayX<double>::Constant(x.size(), 1e-3), 2);
  CHECK_FALSE(two.summary.poor_fit);
  CHECK_THROWS_AS(fit_lorentzian_multi<double>(x.head(4), y.head(4), ArrayX<double>::Ones(4), 2),
                  std::invalid_argument);
}

TEST_CASE("damped cosine and sinusoid recover their parameters") {
  const ArrayX<double> t = linspace(0, 4, 201);  // microseconds
  ArrayX<double> y = 1.0 - 0.1 * (2 * kPi * 5.0 * t).cos() * (-t / 3.0).exp();
  auto fit = fit_damped_cosine<double>(t, y, ArrayX<double>::Constant(t.size(), 1e-3));
  CHECK(fit.params[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(fit.params[1] == doctest::Approx(0.1).epsilon(1e-3));
  CHECK(fit.params[2] == doctest::Approx(5.0).epsilon(1e-3));
  CHECK(fit.params[3] == doctest::Approx(1 / 3.0).epsilon(1e-3));

  const ArrayX<double> s = linspace(0, 2, 4096);
  ArrayX<double> z = 3.0 + 0.4 * (2 * kPi * 20.0 * s).cos() - 0.7 * (2 * kPi * 20.0 * s).sin();
  auto sin_fit = fit_sinusoid<double>(s, z, ArrayX<double>::Constant(s.size(), 1e-2));
  CHECK(sin_fit.params[0] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(sin_fit.params[1] == doctest::Approx(0.4).epsilon(1e-3));
  CHECK(sin_fit.params[2] == doctest::Approx(-0.7).epsilon(1e-3));
  CHECK(sin_fit.params[3] == doctest::Approx(20.0).epsilon(1e-3));
}

TEST_CASE("noisy fits report errors that match the scatter") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  const ArrayX<double> x = linspace(-10, 10, 201);
  std::vector<double> centers;
  double reported = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ArrayX<double> y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = 1.0 - lorentz_dip(x[i], 0.0, 1.0, 0.3) + noise(rng);
    const auto f = fit_lorentzian_multi<double>(x, y, ArrayX<double>::Constant(x.size(), 0.01), 1);
    centers.push_back(f.dips[0].center);
    reported += f.errors[0].center / 200;
  }
  double m = 0, v = 0;
  for (double c : centers) m += c / centers.size();
  for (double c : centers) v += (c - m) * (c - m) / (centers.size() - 1);
  CHECK(std::sqrt(v) == doctest::Approx(reported).epsilon(0.2));
}

TEST_CASE("demodulation basics") {
  const Eigen::Index n = 20000;
  const double f = 10.0 / n * 7.3;  // 73 periods, not an integer number of samples each
  Eigen::ArrayXd phi(n);
  for (Eigen::Index i = 0; i < n; ++i) phi[i] = 2 * kPi * f * i;
  const Eigen::ArrayXd ref = phi.cos();

  SUBCASE("second harmonic in phase") {
    const Eigen::ArrayXd s = 0.8 * (2 * phi).cos();
    const auto h2 = demodulate(s, ref, 2);
    CHECK(h2.x == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(std::abs(h2.y) < 1e-3);
    const auto h1 = demodulate(s, ref, 1);
    CHECK(h1.r < 0.01 * h2.r);
  }
  SUBCASE("a constant gives nothing") {
    const Eigen::ArrayXd s = Eigen::ArrayXd::Constant(n, 5.0);
    const auto h = demodulate(s, ref, 1);
    CHECK(std::abs(h.x) < 1e-12);
    CHECK(std::abs(h.y) < 1e-12);
  }
  SUBCASE("linear in the input") {
    const Eigen::ArrayXd a = (phi + 0.3).cos() + 0.1 * (3 * phi).sin();
    const Eigen::ArrayXd b = 0.5 * (2 * phi - 1.0).cos();
    const auto ha = demodulate(a, ref, 1), hb = demodulate(b, ref, 1);
    const Eigen::ArrayXd c = 2.0 * a - 3.0 * b;
    const auto hc = demodulate(c, ref, 1);
    CHECK(hc.x == doctest::Approx(2 * ha.x - 3 * hb.x));
    CHECK(hc.y == doctest::Approx(2 * ha.y - 3 * hb.y));
  }
  SUBCASE("sine reference gives quadrature") {
    const Eigen::ArrayXd s = 0.5 * phi.sin();
    const auto h = demodulate(s, ref, 1);
    CHECK(std::abs(h.x) < 1e-3);
    CHECK(h.y == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(h.phase * 180 / kPi == doctest::Approx(90.0).epsilon(1e-3));
  }
  SUBCASE("reference frequency") {
    const auto out = lock_in(Eigen::ArrayXd(ref), ref);
    CHECK(out.reference_frequency == doctest::Approx(f).epsilon(1e-6));
    CHECK(out.reference_amplitude == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(out.periods == 72);
  }
}

TEST_CASE("demodulation of a mixed waveform matches numerical quadrature") {
  // Harmonic mix plus a smooth square-ish term.
  auto signal = [](double p) {
    return 0.3 * std::cos(p + 0.4) + 0.2 * std::cos(2 * p - 1.0) + 0.05 * std::cos(3 * p) +
           0.1 * std::tanh(4 * std::sin(p));
  };
  const Eigen::Index n = 50000;
  const double f = 40.0 / n;
  Eigen::ArrayXd ref(n), s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = 2 * kPi * f * i;
    ref[i] = std::cos(p);
    s[i] = signal(p);
  }
  for (int k : {1, 2}) {
    // (1/pi) integral over one period of s(phi) cos(k phi), Simpson's rule
    const int m = 20000;
    double ix = 0, iy = 0;
    for (int j = 0; j <= m; ++j) {
      const double p = 2 * kPi * j / m;
      const double w = (j == 0 || j == m) ? 1 : (j % 2 ? 4 : 2);
      ix += w * signal(p) * std::cos(k * p);
      iy += w * signal(p) * std::sin(k * p);
    }
    ix *= (2 * kPi / m) / 3 / kPi;
    iy *= (2 * kPi / m) / 3 / kPi;
    const auto h = demodulate(s, ref, k);
    CHECK(h.x == doctest::Approx(ix).epsilon(1e-3).scale(0.1));
    CHECK(h.y == doctest::Approx(iy).epsilon(1e-3).scale(0.1));
  }
}

TEST_CASE("a reference shorter than two periods is refused") {
  Eigen::ArrayXd ref(1000);
  for (Eigen::Index i = 0; i < ref.size(); ++i) ref[i] = std::cos(2 * kPi * 1.5 * i / 1000.0);
  CHECK_THROWS_AS(reconstruct_phase(ref), NoReferenceError);
  CHECK_THROWS_AS(reconstruct_phase(Eigen::ArrayXd::Constant(1000, 2.0)), NoReferenceError);
  CHECK_THROWS_AS(demodulate(ref, ref, 0), std::exception);
}

TEST_CASE("photon statistics") {
  ArrayX<double> counts(3);
  counts << 10000, 0, 2.25;
  const ArrayX<double> s = poisson_sigma(counts);
  CHECK(s[0] == 100.0);
  CHECK(s[1] == 0.0);
  CHECK(s[2] == 1.5);

  ArrayX<double> sig(3), ref(3);
  sig << 10000, 5000, 7;
  ref << 10000, 10000, 0;
  const auto r = photon_ratio<double>(sig, ref);
  CHECK(r.ratio[0] == 1.0);
  CHECK(r.sigma[0] == doctest::Approx(0.01414).epsilon(1e-3));
  CHECK(r.ratio[1] == 0.5);
  CHECK(r.sigma[1] == doctest::Approx(0.5 * std::sqrt(1 / 5000.0 + 1 / 10000.0)));
  REQUIRE(r.undefined.size() == 1);
  CHECK(r.undefined[0] == 2);
  CHECK(std::isnan(r.ratio[2]));
}

TEST_CASE("CSV round-trip is bit exact") {
  ExperimentResult res;
  res.kind = "demo";
  res.x_label = "freq_mhz";
  res.y_label = "level";
  res.x.resize(5);
  res.y.resize(5);
  res.sigma.resize(5);
  res.x << 0.1, 1.0 / 3.0, 2870.0 - 2.8024 * 520.0, -2.5e17, 5e-324;
  res.y << std::nextafter(1.0, 2.0), -0.0, 1e300, 7.0, std::numbers::pi;
  res.sigma << 0.0, 1e-17, 0.125, 3.0, 2.0 / 7.0;
  Eigen::VectorXd extra(5);
  extra << 1, 2, 3, 4, 5;
  res.extra_columns.push_back({"fit", extra});

  const std::string text = to_csv(res);
  CHECK(text.rfind("freq_mhz,level,sigma,fit\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
  const CsvTable t = parse_csv(text);
  REQUIRE(t.header == std::vector<std::string>{"freq_mhz", "level", "sigma", "fit"});
  REQUIRE(t.columns.size() == 4);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(std::memcmp(&t.columns[0][i], &res.x[i], sizeof(double)) == 0);
    CHECK(std::memcmp(&t.columns[1][i], &res.y[i], sizeof(double)) == 0);
    CHECK(std::memcmp(&t.columns[2][i], &res.sigma[i], sizeof(double)) == 0);
  }

  res.sigma[1] = -1;
  CHECK_THROWS_AS(to_csv(res), std::invalid_argument);
}

TEST_CASE("SVG plot") {
  ExperimentResult res;
  res.x_label = "t";
  res.y_label = "v";
  res.x = Eigen::VectorXd::LinSpaced(50, 0, 1);
  res.y = res.x.array().sin().matrix();
  res.sigma = Eigen::VectorXd::Zero(50);
  const std::string svg = to_svg(res);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}
