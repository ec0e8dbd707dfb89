#include "distill/physmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace distill {

using std::numbers::pi;

double PhysicalParams::k3() const { return 2.0 * pi / lambda3; }

void PhysicalParams::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(sigma)) throw ParameterError(fmt::format("pump waist must be positive, got {}", sigma));
  if (!positive(L)) throw ParameterError(fmt::format("crystal length must be positive, got {}", L));
  if (!positive(lambda3)) throw ParameterError(fmt::format("pump wavelength must be positive, got {}", lambda3));
  if (!(dsigma >= 0.0) || !(dL >= 0.0)) throw ParameterError("uncertainties must be nonnegative");
  if (dsigma >= sigma || dL >= L) throw ParameterError("uncertainties must be smaller than the nominal values");
}

double closed_form_schmidt(const PhysicalParams& params) {
  params.validate();
  return 3.0 * pi * pi * params.sigma * params.sigma / (8.0 * params.lambda3 * params.L);
}

double pump_angular(double sigma, double q_sq) { return std::exp(-0.25 * sigma * sigma * q_sq); }

double pump_near(double sigma, double x_sq) { return std::exp(-x_sq / (sigma * sigma)); }

double sinc(double u) {
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    return 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
  }
  return std::sin(u) / u;
}

const char* to_string(PhaseMatchingKind kind) {
  return kind == PhaseMatchingKind::ExactSinc ? "sinc" : "gauss";
}

namespace {

// Composite Simpson on [0, T] of f(t), with t^2 = u folding the u^{-1/2}
// endpoint behaviour into a smooth integrand.
template <class F>
double simpson(F&& f, double upper, std::size_t intervals) {
  const double h = upper / static_cast<double>(intervals);
  double s = f(0.0) + f(upper);
  for (std::size_t k = 1; k < intervals; ++k) {
    s += f(static_cast<double>(k) * h) * ((k & 1U) ? 4.0 : 2.0);
  }
  return s * h / 3.0;
}

double compute_width_match() {
  constexpr double T = 40.0;
  constexpr std::size_t N = 200000;
  // int_0^inf u^{1/2} sinc^2(u) du = int_0^inf 2 sin^2(t^2)/t^2 dt
  const double half = simpson([](double t) {
    const double s = sinc(t * t);
    return 2.0 * t * t * s * s;
  }, T, N) + 1.0 / T + std::sin(2.0 * T * T) / (4.0 * T * T * T);
  // int_0^inf u^{-1/2} sinc^2(u) du = int_0^inf 2 sin^2(t^2)/t^4 dt
  const double neg_half = simpson([](double t) {
    const double s = sinc(t * t);
    return 2.0 * s * s;
  }, T, N) + 1.0 / (3.0 * T * T * T);
  // <q^2> of sinc^2(b q^2) along a cut is (1/b) I_{1/2} / I_{-1/2};
  // for exp(-2 alpha b q^2) it is 1 / (4 alpha b).
  return neg_half / (4.0 * half);
}

double bracket(double x, double a, double d) {
  const double inv = 1.0 / (4.0 * a * a);
  return std::exp(-(x - d) * (x - d) * inv) + std::exp(-(x + d) * (x + d) * inv);
}

double mask_peak(const CustomMask& m) { return *std::max_element(m.values.begin(), m.values.end()); }

double mask_sample(const CustomMask& m, double x, double y) {
  const double fx = x / m.pitch + 0.5 * static_cast<double>(m.nx - 1);
  const double fy = y / m.pitch + 0.5 * static_cast<double>(m.ny - 1);
  const double last_x = static_cast<double>(m.nx - 1);
  const double last_y = static_cast<double>(m.ny - 1);
  if (fx < 0.0 || fy < 0.0 || fx > last_x || fy > last_y) return 0.0;
  const auto i0 = std::min(static_cast<std::size_t>(fx), m.nx - 2);
  const auto j0 = std::min(static_cast<std::size_t>(fy), m.ny - 2);
  const double tx = fx - static_cast<double>(i0);
  const double ty = fy - static_cast<double>(j0);
  auto at = [&](std::size_t i, std::size_t j) { return m.values[i * m.ny + j]; };
  return (1 - tx) * (1 - ty) * at(i0, j0) + tx * (1 - ty) * at(i0 + 1, j0) +
         (1 - tx) * ty * at(i0, j0 + 1) + tx * ty * at(i0 + 1, j0 + 1);
}

std::pair<std::size_t, std::size_t> mask_argmax(const CustomMask& m) {
  const auto it = std::max_element(m.values.begin(), m.values.end());
  const auto k = static_cast<std::size_t>(it - m.values.begin());
  return {k / m.ny, k % m.ny};
}

}  // namespace

double gaussian_width_match() {
  static const double alpha = compute_width_match();
  return alpha;
}

PhaseMatchingModel PhaseMatchingModel::make(PhaseMatchingKind kind, const PhysicalParams& params) {
  params.validate();
  PhaseMatchingModel m;
  m.kind = kind;
  m.b = params.L / (4.0 * params.k3());
  m.alpha = kind == PhaseMatchingKind::GaussianApprox ? gaussian_width_match() : 1.0;
  return m;
}

double PhaseMatchingModel::eval(double q_sq) const {
  if (kind == PhaseMatchingKind::ExactSinc) return sinc(b * q_sq);
  return std::exp(-alpha * b * q_sq);
}

// ---------------------------------------------------------------------------
// Filters

FilterSpec FilterSpec::blank() { return FilterSpec{}; }

FilterSpec FilterSpec::double_gaussian(double a_um, double d_um, FilterNormalization norm,
                                       FilterResponse response) {
  FilterSpec f;
  f.kind = FilterKind::DoubleGaussian;
  f.a = a_um;
  f.d = d_um;
  f.normalization = norm;
  f.response = response;
  f.validate();
  return f;
}

FilterSpec FilterSpec::double_gaussian_px(double a_px, double d_px, FilterNormalization norm,
                                          FilterResponse response, double slm_pixel) {
  FilterSpec f = double_gaussian(a_px * slm_pixel, d_px * slm_pixel, norm, response);
  f.slm_pixel = slm_pixel;
  return f;
}

FilterSpec FilterSpec::custom(CustomMask mask, FilterNormalization norm, FilterResponse response) {
  FilterSpec f;
  f.kind = FilterKind::CustomSampled;
  f.normalization = norm;
  f.response = response;
  f.slm_pixel = mask.pitch;
  f.mask = std::make_shared<const CustomMask>(std::move(mask));
  f.validate();
  return f;
}

void FilterSpec::validate() const {
  if (!(gain >= 0.0) || !std::isfinite(gain)) throw ParameterError("filter gain must be finite and nonnegative");
  if (!(slm_pixel > 0.0)) throw ParameterError("SLM pixel pitch must be positive");
  switch (kind) {
    case FilterKind::Blank:
      return;
    case FilterKind::DoubleGaussian:
      if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError(fmt::format("filter width a must be positive, got {}", a));
      if (!(d >= 0.0) || !std::isfinite(d)) throw ParameterError(fmt::format("filter offset d must be nonnegative, got {}", d));
      return;
    case FilterKind::CustomSampled: {
      if (!mask) throw ParameterError("custom filter has no mask");
      const auto& m = *mask;
      if (m.nx < 2 || m.ny < 2) throw ParameterError("custom mask needs at least 2x2 samples");
      if (m.values.size() != m.nx * m.ny) throw ParameterError("custom mask size mismatch");
      if (!(m.pitch > 0.0)) throw ParameterError("custom mask pitch must be positive");
      for (double v : m.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("custom mask values must be finite and nonnegative");
      }
      if (!(mask_peak(m) > 0.0)) throw ParameterError("custom mask is fully opaque");
      return;
    }
  }
}

double filter_eval(const FilterSpec& spec, double x, double y) {
  switch (spec.kind) {
    case FilterKind::Blank:
      return 1.0;
    case FilterKind::DoubleGaussian: {
      const double raw = bracket(x, spec.a, spec.d) * bracket(y, spec.a, spec.d);
      return spec.normalization == FilterNormalization::PeakOne ? 0.25 * raw : raw;
    }
    case FilterKind::CustomSampled: {
      const double raw = mask_sample(*spec.mask, x, y);
      return spec.normalization == FilterNormalization::PeakOne ? raw / mask_peak(*spec.mask) : raw;
    }
  }
  return 0.0;
}

bool FilterSpec::separable() const {
  if (kind != FilterKind::CustomSampled) return true;
  const auto& m = *mask;
  const auto [i0, j0] = mask_argmax(m);
  const double peak = m.values[i0 * m.ny + j0];
  double worst = 0.0;
  for (std::size_t i = 0; i < m.nx; ++i) {
    for (std::size_t j = 0; j < m.ny; ++j) {
      const double lhs = m.values[i * m.ny + j] * peak;
      const double rhs = m.values[i * m.ny + j0] * m.values[i0 * m.ny + j];
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst <= 1e-9 * peak * peak;
}

double FilterSpec::amplitude(double x, double y) const {
  const double f = filter_eval(*this, x, y);
  return gain * (response == FilterResponse::Intensity ? std::sqrt(f) : f);
}

double FilterSpec::amplitude_axis(double coord, AxisId axis) const {
  double f = 1.0;
  switch (kind) {
    case FilterKind::Blank:
      break;
    case FilterKind::DoubleGaussian:
      f = bracket(coord, a, d);
      if (normalization == FilterNormalization::PeakOne) f *= 0.5;
      break;
    case FilterKind::CustomSampled: {
      if (!separable()) throw ParameterError("custom filter is not separable across axes");
      const auto& m = *mask;
      const auto [i0, j0] = mask_argmax(m);
      const double peak = m.values[i0 * m.ny + j0];
      f = axis == AxisId::X ? mask_sample(m, coord, m.y(j0)) : mask_sample(m, m.x(i0), coord);
      f /= std::sqrt(peak);
      if (normalization == FilterNormalization::PeakOne) f /= std::sqrt(peak);
      break;
    }
  }
  return std::sqrt(gain) * (response == FilterResponse::Intensity ? std::sqrt(f) : f);
}

// ---------------------------------------------------------------------------
// Sampled profiles

PumpProfiles pump_profiles(const PhysicalParams& params, const Axis& position_axis) {
  params.validate();
  const double samples_across = 2.0 * params.sigma / position_axis.pitch();
  if (samples_across < 8.0) {
    throw GridError(fmt::format("grid too coarse for the pump: {:.3g} samples across 2 sigma (need 8)",
                                samples_across));
  }
  const Axis q_axis = position_axis.dual();
  ComplexField1D v(q_axis, Plane::FarField);
  for (std::size_t i = 0; i < q_axis.size(); ++i) {
    const double q = q_axis.coord(i);
    v[i] = pump_angular(params.sigma, q * q);
  }
  const ComplexField1D w = transform(v, Direction::ToPosition);
  PumpProfiles out{RealField1D(q_axis, Plane::FarField), RealField1D(w.axis, Plane::NearField)};
  double peak = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) peak = std::max(peak, w[i].real());
  for (std::size_t i = 0; i < q_axis.size(); ++i) {
    out.v[i] = v[i].real();
    out.W[i] = w[i].real() / peak;
  }
  return out;
}

double phase_matching_edge_energy(const PhaseMatchingModel& model, const Axis& position_axis, bool two_d) {
  const Axis q_axis = position_axis.dual();
  const double q_edge = 0.9 * q_axis.half_extent();
  double total = 0.0;
  double edge = 0.0;
  if (!two_d) {
    for (std::size_t i = 0; i < q_axis.size(); ++i) {
      const double q = q_axis.coord(i);
      const double g = model.eval(q * q);
      total += g * g;
      if (std::abs(q) > q_edge) edge += g * g;
    }
  } else {
    for (std::size_t i = 0; i < q_axis.size(); ++i) {
      const double qx = q_axis.coord(i);
      for (std::size_t j = 0; j < q_axis.size(); ++j) {
        const double qy = q_axis.coord(j);
        const double g = model.eval(qx * qx + qy * qy);
        total += g * g;
        if (std::max(std::abs(qx), std::abs(qy)) > q_edge) edge += g * g;
      }
    }
  }
  return edge / total;
}

namespace {

void check_phase_matching_grid(const PhaseMatchingModel& model, const Axis& position_axis, bool two_d) {
  if (!(model.b > 0.0)) throw ParameterError("phase-matching model has nonpositive b");
  const double q_max = position_axis.dual().half_extent();
  if (model.kind == PhaseMatchingKind::ExactSinc) {
    const double lobes = model.b * q_max * q_max / pi;
    if (lobes < 6.0) {
      throw GridError(fmt::format("momentum grid covers {:.2f} sinc lobes, need at least 6", lobes));
    }
  }
  const double edge = phase_matching_edge_energy(model, position_axis, two_d);
  if (edge > kAliasingLimit) {
    throw GridError(fmt::format("phase-matching aliasing check failed: {:.3g} of |g|^2 in the outer 10% "
                                "of the momentum grid (limit {:.0e})",
                                edge, kAliasingLimit));
  }
}

}  // namespace

PhaseMatchingProfiles phase_matching_profiles(const PhaseMatchingModel& model, const Axis& position_axis) {
  check_phase_matching_grid(model, position_axis, false);
  const Axis q_axis = position_axis.dual();
  ComplexField1D g(q_axis, Plane::FarField);
  for (std::size_t i = 0; i < q_axis.size(); ++i) {
    const double q = q_axis.coord(i);
    g[i] = model.eval(q * q);
  }
  const ComplexField1D G = transform(g, Direction::ToPosition);
  PhaseMatchingProfiles out{RealField1D(q_axis, Plane::FarField), RealField1D(G.axis, Plane::NearField)};
  const double peak = G[G.axis.center()].real();
  for (std::size_t i = 0; i < q_axis.size(); ++i) {
    out.g[i] = g[i].real();
    out.G[i] = G[i].real() / peak;
  }
  return out;
}

PhaseMatchingProfiles2D phase_matching_profiles_2d(const PhaseMatchingModel& model, const Axis& position_axis) {
  check_phase_matching_grid(model, position_axis, true);
  const Axis q_axis = position_axis.dual();
  ComplexField2D g(q_axis, q_axis, Plane::FarField);
  for (std::size_t i = 0; i < q_axis.size(); ++i) {
    const double qx = q_axis.coord(i);
    for (std::size_t j = 0; j < q_axis.size(); ++j) {
      const double qy = q_axis.coord(j);
      g.at(i, j) = model.eval(qx * qx + qy * qy);
    }
  }
  const ComplexField2D G = transform(g, Direction::ToPosition);
  PhaseMatchingProfiles2D out{RealField2D(q_axis, q_axis, Plane::FarField),
                              RealField2D(G.x_axis, G.y_axis, Plane::NearField)};
  const double peak = G.at(G.x_axis.center(), G.y_axis.center()).real();
  for (std::size_t k = 0; k < g.values.size(); ++k) {
    out.g.values[k] = g.values[k].real();
    out.G.values[k] = G.values[k].real() / peak;
  }
  return out;
}

ReferenceMarginals thin_crystal_marginals(const PhysicalParams& params, std::size_t n) {
  params.validate();
  const Axis near_axis = Axis::covering(4.0 * params.sigma, n);
  const double c = params.L / params.k3();
  // Zero spacing of sinc^2(c r^2) at radius R is pi / (2 c R); keep it >= 4 dq
  // with dq = 2R / n.
  const double r_max = std::sqrt(pi * static_cast<double>(n) / (16.0 * c));
  const Axis far_axis = Axis::covering(r_max, n);

  ReferenceMarginals out{RealField2D(near_axis, near_axis, Plane::NearField),
                         RealField2D(far_axis, far_axis, Plane::FarField)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = near_axis.coord(i);
      const double y = near_axis.coord(j);
      out.near.at(i, j) = std::exp(-2.0 * (x * x + y * y) / (params.sigma * params.sigma));
      const double qx = far_axis.coord(i);
      const double qy = far_axis.coord(j);
      const double s = sinc(c * (qx * qx + qy * qy));
      out.far.at(i, j) = s * s;
    }
  }
  normalize(out.near);
  normalize(out.far);
  return out;
}

}  // namespace distill
