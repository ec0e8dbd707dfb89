#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "distill/emccd.hpp"
#include "distill/fitting.hpp"
#include "distill/schmidt.hpp"

using namespace distill;
using std::numbers::pi;

namespace {

NearFieldFit four_lobes(double d) {
  NearFieldFit t;
  const double w[4] = {1.0, 0.8, 0.9, 1.1};
  for (int k = 0; k < 4; ++k) t.comp[k] = {w[k], (k & 1) ? d : -d, (k & 2) ? d : -d, 18.0 + k, 22.0 - k};
  return t;
}

FarFieldFit ring(double c) {
  FarFieldFit f;
  f.a = 3.0;
  f.b = 50.0;
  f.c = c;
  f.x0 = 1.5;
  f.y0 = -2.0;
  return f;
}

}  // namespace

TEST_CASE("analytic Jacobians match central differences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  const auto nf = four_lobes(30.0).params();
  const auto ff = ring(pi / 900.0).params();
  for (int trial = 0; trial < 20; ++trial) {
    const double x = u(rng), y = u(rng);
    double g[kNearFieldParams];
    nearfield_model(nf.data(), x, y, g);
    for (std::size_t k = 0; k < kNearFieldParams; ++k) {
      Eigen::VectorXd a = nf, b = nf;
      const double h = 1e-6 * std::max(1.0, std::abs(nf[k]));
      a[k] += h;
      b[k] -= h;
      const double fd = (nearfield_model(a.data(), x, y, nullptr) - nearfield_model(b.data(), x, y, nullptr)) / (2 * h);
      CHECK(std::abs(g[k] - fd) <= 1e-5 * std::max(1e-3, std::abs(fd)));
    }
    double h5[kFarFieldParams];
    farfield_model(ff.data(), x, y, h5);
    for (std::size_t k = 0; k < kFarFieldParams; ++k) {
      Eigen::VectorXd a = ff, b = ff;
      const double h = 1e-6 * std::max(1e-3, std::abs(ff[k]));
      a[k] += h;
      b[k] -= h;
      const double fd = (farfield_model(a.data(), x, y, nullptr) - farfield_model(b.data(), x, y, nullptr)) / (2 * h);
      CHECK(std::abs(h5[k] - fd) <= 1e-5 * std::max(1e-3, std::abs(fd)));
    }
  }
}

TEST_CASE("far-field effective area") {
  // int sinc^2(c r^2) dA = pi^2 / 2c and int sinc^4(c r^2) dA = pi^2 / 3c.
  for (double c : {1e-3, 0.02})
    CHECK(farfield_effective_area(c) == doctest::Approx(3 * pi * pi / (4 * c)).epsilon(1e-8));
}

TEST_CASE("near-field integrals") {
  NearFieldFit t;
  t.comp[0] = {2.0, 0, 0, 3.0, 5.0};
  for (int k = 1; k < 4; ++k) t.comp[k] = {0.0, 100.0 * k, 0, 1.0, 1.0};
  // alpha exp(-x^2/delta^2 - y^2/eps^2): pi alpha delta eps and pi alpha^2 delta eps / 2.
  CHECK(nearfield_integral(t) == doctest::Approx(pi * 2 * 15));
  CHECK(nearfield_integral_sq(t) == doctest::Approx(pi * 4 * 15 / 2));
}

TEST_CASE("noiseless surfaces are recovered") {
  const Axis ax(256, 1.0);
  const auto nt = four_lobes(35.0);
  const auto img = render(nt, ax, Plane::NearField);
  FitOptions opt;
  opt.rel_tol = 1e-14;
  const auto fit = fit_nearfield(img, nullptr, std::nullopt, opt);
  const auto p = fit.params(), q = nt.params();
  for (std::size_t k = 0; k < kNearFieldParams; ++k)
    CHECK(std::abs(p[k] - q[k]) <= 1e-6 * std::max(1.0, std::abs(q[k])));

  const auto ft = ring(pi / 40.0 / 40.0);
  const auto fimg = render(ft, ax, Plane::FarField);
  const auto ffit = fit_farfield(fimg, nullptr, std::nullopt, opt);
  const auto r = ffit.params(), s = ft.params();
  for (std::size_t k = 0; k < kFarFieldParams; ++k) CHECK(std::abs(r[k] - s[k]) <= 1e-6 * std::abs(s[k]));
}

TEST_CASE("symmetric initializer converges to the same fit") {
  const Axis ax(256, 1.0);
  const auto img = render(four_lobes(35.0), ax, Plane::NearField);
  FitOptions a, b;
  b.symmetric_init = true;
  const auto fa = fit_nearfield(img, nullptr, std::nullopt, a);
  const auto fb = fit_nearfield(img, nullptr, std::nullopt, b);
  CHECK((fa.params() - fb.params()).norm() < 1e-5 * fa.params().norm());
}

TEST_CASE("finite-difference Jacobian option") {
  const Axis ax(128, 1.0);
  const auto img = render(ring(pi / 400.0), ax, Plane::FarField);
  FitOptions opt;
  opt.finite_difference = true;
  const auto f = fit_farfield(img, nullptr, std::nullopt, opt);
  CHECK(f.c == doctest::Approx(pi / 400.0).epsilon(1e-5));
}

TEST_CASE("fit failures") {
  const Axis ax(64, 1.0);
  RealField2D blank(ax, ax, Plane::NearField);
  CHECK_THROWS(fit_nearfield(blank));
  FitOptions opt;
  opt.max_iterations = 1;
  opt.rel_tol = 0.0;
  const auto img = render(four_lobes(12.0), ax, Plane::NearField);
  try {
    fit_nearfield(img, nullptr, std::nullopt, opt);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.best_params.size() == static_cast<Eigen::Index>(kNearFieldParams));
  }
}

TEST_CASE("K from fitted parameters matches the direct estimator") {
  const CameraSpec cam;
  const CameraMaps maps{cam.scale(Plane::NearField), cam.scale(Plane::FarField)};
  auto nt = four_lobes(40.0);
  for (auto& c : nt.comp) c.alpha = 1.0;
  FarFieldFit ft;
  ft.c = pi / (59.0 * 59.0);
  const Axis nax = cam.axis(Plane::NearField).refined(), fax = cam.axis(Plane::FarField).refined();
  // Render on a grid twice as wide as the sensor so the far-field tails are kept.
  const Axis nwide(2 * nax.size(), nax.pitch()), fwide(2 * fax.size(), fax.pitch());
  RealField2D nf(nwide, nwide, Plane::NearField), ff(fwide, fwide, Plane::FarField);
  for (std::size_t i = 0; i < nwide.size(); ++i)
    for (std::size_t j = 0; j < nwide.size(); ++j) {
      nf.at(i, j) = nt.eval(nwide.coord(i) / maps.nf_scale, nwide.coord(j) / maps.nf_scale);
      ff.at(i, j) = ft.eval(fwide.coord(i) / maps.ff_scale, fwide.coord(j) / maps.ff_scale);
    }
  const auto k = k_from_fits(nt, ft, maps);
  CHECK(k.k == doctest::Approx(k_from_marginals(nf, ff)).epsilon(0.01));
}

TEST_CASE("serialization round trip") {
  auto nt = four_lobes(20.0);
  nt.covariance = Eigen::MatrixXd::Identity(20, 20) * 0.04;
  nt.background = 1.25;
  const auto back = parse_nearfield(serialize(nt));
  CHECK((back.params() - nt.params()).norm() < 1e-9);
  CHECK(back.background == doctest::Approx(1.25));
  CHECK(std::sqrt(back.covariance(3, 3)) == doctest::Approx(0.2));

  const auto ft = ring(0.01);
  CHECK((parse_farfield(serialize(ft)).params() - ft.params()).norm() < 1e-9);
  CHECK_THROWS(parse_farfield("a 1 0\n"));
}
