#include <cmath>
#include <numbers>

#include <doctest.h>

#include "distill/physmodel.hpp"
#include "distill/schmidt.hpp"

using namespace distill;
using std::numbers::pi;

namespace {

RealField1D gauss1(const Axis& ax, double w, Plane plane) {
  RealField1D f(ax, plane);
  for (std::size_t i = 0; i < ax.size(); ++i) f[i] = std::exp(-ax.coord(i) * ax.coord(i) / (w * w));
  return f;
}

}  // namespace

TEST_CASE("gaussian marginals") {
  // I(x) = exp(-x^2/s^2), I(q) = exp(-q^2 t^2): K = R_x R_q / 2 pi = s / t.
  const double s = 40.0, t = 2.0;
  const RealField1D nf = gauss1(Axis::covering(10 * s, 512), s, Plane::NearField);
  const RealField1D ff = gauss1(Axis::covering(10 / t, 512), 1 / t, Plane::FarField);
  CHECK(k_axis_from_marginals(nf, ff) == doctest::Approx(s / t).epsilon(1e-10));

  RealField2D nf2(nf.axis, nf.axis, Plane::NearField), ff2(ff.axis, ff.axis, Plane::FarField);
  for (std::size_t i = 0; i < 512; ++i)
    for (std::size_t j = 0; j < 512; ++j) {
      nf2.at(i, j) = nf[i] * nf[j];
      ff2.at(i, j) = ff[i] * ff[j];
    }
  CHECK(k_from_marginals(nf2, ff2) == doctest::Approx((s / t) * (s / t)).epsilon(1e-10));
  CHECK_THROWS(k_from_marginals(ff2, nf2));
}

TEST_CASE("composition") {
  CHECK(k_compose_axes(3.0, 4.0) == 12.0);
  CHECK(k_compose_axes(1.0 - 1e-8, 2.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(k_compose_axes(0.9, 2.0), std::invalid_argument);
}

TEST_CASE("thin-crystal marginals reproduce the closed form") {
  const PhysicalParams p;
  const auto m = thin_crystal_marginals(p, 512);
  CHECK(k_from_marginals(m.near, m.far) == doctest::Approx(closed_form_schmidt(p)).epsilon(0.01));
}

TEST_CASE("distillation report") {
  const RealField1D nf0 = gauss1(Axis::covering(400, 256), 40, Plane::NearField);
  const RealField1D ff0 = gauss1(Axis::covering(5, 256), 0.5, Plane::FarField);
  const RealField1D nf = gauss1(Axis::covering(400, 256), 20, Plane::NearField);
  const auto r = distillation_report(nf, ff0, nf0, ff0, 0.25);
  // One axis: K = s / t with t = 1 / 0.5.
  CHECK(r.k0 == doctest::Approx(20.0 * 20.0).epsilon(1e-9));
  CHECK(r.k_estimate == doctest::Approx(10.0 * 10.0).epsilon(1e-9));
  CHECK(r.ratio == doctest::Approx(r.k_estimate / r.k0));
  CHECK(r.p_succ == 0.25);
}
