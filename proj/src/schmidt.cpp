#include "distill/schmidt.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace distill {

using std::numbers::pi;

namespace {

template <class Field>
void check_planes(const Field& nf, const Field& ff) {
  if (nf.plane != Plane::NearField) {
    throw GridError(fmt::format("near-field argument is tagged {}", to_string(nf.plane)));
  }
  if (ff.plane != Plane::FarField) {
    throw GridError(fmt::format("far-field argument is tagged {}", to_string(ff.plane)));
  }
}

SchmidtReport finish(double k, double k0, double p_succ) {
  if (!(k0 > 0.0) || !std::isfinite(k0)) throw GridError("blank-filter K0 could not be computed");
  SchmidtReport r;
  r.k_estimate = k;
  r.k0 = k0;
  r.ratio = k / k0;
  r.p_succ = p_succ;
  return r;
}

}  // namespace

double k_from_marginals(const RealField2D& nf, const RealField2D& ff) {
  check_planes(nf, ff);
  return effective_area(nf) * effective_area(ff) / (4.0 * pi * pi);
}

double k_axis_from_marginals(const RealField1D& nf, const RealField1D& ff) {
  check_planes(nf, ff);
  return effective_area(nf) * effective_area(ff) / (2.0 * pi);
}

double k_compose_axes(double kx, double ky) {
  const double floor = 1.0 - kSchmidtFloorTolerance;
  if (!(kx >= floor) || !(ky >= floor)) {
    throw std::invalid_argument(fmt::format("per-axis Schmidt numbers must be >= 1, got {} and {}", kx, ky));
  }
  return kx * ky;
}

SchmidtReport distillation_report(const RealField2D& nf, const RealField2D& ff, const RealField2D& nf0,
                                  const RealField2D& ff0, double p_succ) {
  return finish(k_from_marginals(nf, ff), k_from_marginals(nf0, ff0), p_succ);
}

SchmidtReport distillation_report(const RealField1D& nf, const RealField1D& ff, const RealField1D& nf0,
                                  const RealField1D& ff0, double p_succ) {
  const double k = k_axis_from_marginals(nf, ff);
  const double k0 = k_axis_from_marginals(nf0, ff0);
  return finish(k_compose_axes(k, k), k_compose_axes(k0, k0), p_succ);
}

}  // namespace distill
