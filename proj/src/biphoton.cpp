#include "distill/biphoton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fmt/format.h>

namespace distill {

using std::numbers::pi;

namespace {

// G is evaluated on a momentum grid this many times wider than the joint
// grid's own and then subsampled, so truncation of g does not ring into G.
constexpr std::size_t kOversample = 4;

std::mutex& oracle_gate() {
  static std::mutex m;
  return m;
}

Axis half_pitch(const Axis& axis) { return Axis(2 * axis.size(), 0.5 * axis.pitch()); }

void check_joint_grid(const PhaseMatchingModel& pm, const Axis& axis) {
  if (pm.kind != PhaseMatchingKind::ExactSinc) return;
  // The far-field marginal is |g(2q)|^2; count its lobes on the dual grid.
  const double q_max = axis.dual().half_extent();
  const double lobes = 4.0 * pm.b * q_max * q_max / pi;
  if (lobes < 6.0) {
    throw GridError(fmt::format("joint grid resolves {:.2f} far-field sinc lobes, need at least 6", lobes));
  }
  const double edge = phase_matching_edge_energy(pm, half_pitch(axis), false);
  if (edge > kAliasingLimit) {
    throw GridError(fmt::format("joint grid aliases the phase matching: edge energy {:.3g}", edge));
  }
}

std::vector<double> phase_matching_half(const PhaseMatchingModel& pm, const Axis& axis) {
  const Axis half = half_pitch(axis);
  const Axis fine(half.size() * kOversample, half.pitch() / static_cast<double>(kOversample));
  const auto prof = phase_matching_profiles(pm, fine);
  std::vector<double> out(half.size());
  for (std::size_t k = 0; k < half.size(); ++k) out[k] = prof.G[k * kOversample];
  return out;
}

RealField2D phase_matching_half_2d(const PhaseMatchingModel& pm, const Axis& axis) {
  const Axis half = half_pitch(axis);
  const Axis fine(half.size() * kOversample, half.pitch() / static_cast<double>(kOversample));
  const auto prof = phase_matching_profiles_2d(pm, fine);
  RealField2D out(half, half, Plane::NearField);
  for (std::size_t k = 0; k < half.size(); ++k) {
    for (std::size_t l = 0; l < half.size(); ++l) {
      out.at(k, l) = prof.G.at(k * kOversample, l * kOversample);
    }
  }
  return out;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void check_photon_marginals(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  const double scale = max_abs(a);
  if (diff > 1e-9 * scale) {
    throw NumericalError(fmt::format("photon marginals differ by {:.3g} (relative)", diff / scale));
  }
}

double schmidt_from_singular_values(const Eigen::VectorXd& s) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) total += s[k] * s[k];
  if (!(total > 0.0)) throw NumericalError("SVD of a zero amplitude");
  double purity = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double l = s[k] * s[k] / total;
    purity += l * l;
  }
  return 1.0 / purity;
}

double singular_schmidt(const Eigen::Ref<const CMatrix>& m) {
  Eigen::BDCSVD<CMatrix> svd(m);
  if (svd.info() != Eigen::Success) throw NumericalError("SVD did not converge");
  return schmidt_from_singular_values(svd.singularValues());
}

}  // namespace

JointAmplitude1D JointAmplitude1D::from_function(const Axis& axis,
                                                 const std::function<cplx(double, double)>& f) {
  const std::size_t n = axis.size();
  JointAmplitude1D j{CMatrix(n, n), axis};
  double norm = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const cplx v = f(axis.coord(a), axis.coord(b));
      j.psi(a, b) = v;
      norm += std::norm(v);
    }
  }
  norm *= axis.pitch() * axis.pitch();
  if (!(norm > 1e-300)) throw NumericalError("amplitude has zero norm");
  j.raw_norm_sq = norm;
  j.psi /= std::sqrt(norm);
  const double peak = j.psi.cwiseAbs().maxCoeff();
  j.exchange_asymmetry = (j.psi - j.psi.transpose()).cwiseAbs().maxCoeff() / peak;
  return j;
}

Axis joint_axis(const PhysicalParams& params, std::size_t n, double extent_sigmas) {
  params.validate();
  return Axis::covering(extent_sigmas * params.sigma, n);
}

JointAmplitude1D build_joint_1d(const PhysicalParams& params, const PhaseMatchingModel& pm,
                                const FilterSpec& filter, const Axis& axis, FilterSpec::AxisId which) {
  filter.validate();
  check_joint_grid(pm, axis);
  const std::size_t n = axis.size();
  const Axis half = half_pitch(axis);
  const auto pump = pump_profiles(params, half);
  const auto G = phase_matching_half(pm, axis);

  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = filter.amplitude_axis(axis.coord(i), which);

  JointAmplitude1D j{CMatrix(n, n), axis};
  double norm = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      // (x1 + x2)/2 and (x1 - x2)/2 land on the half-pitch grid at a+b and a-b+n.
      const double v = pump.W[a + b] * t[a] * t[b] * G[a + n - b];
      j.psi(a, b) = v;
      norm += v * v;
    }
  }
  norm *= axis.pitch() * axis.pitch();
  if (!(norm >= 1e-300)) throw ParameterError("filter opaque: the filtered amplitude has zero norm");
  j.raw_norm_sq = norm;
  j.psi /= std::sqrt(norm);
  const double peak = j.psi.cwiseAbs().maxCoeff();
  j.exchange_asymmetry = (j.psi - j.psi.transpose()).cwiseAbs().maxCoeff() / peak;
  return j;
}

JointAmplitude4D build_joint_4d(const PhysicalParams& params, const PhaseMatchingModel& pm,
                                const FilterSpec& filter, const Axis& axis) {
  const std::size_t n = axis.size();
  if (n > kMax4DAxis) {
    const double mib = std::pow(static_cast<double>(n), 4) * sizeof(cplx) / (1024.0 * 1024.0);
    throw GridError(fmt::format("4D oracle axis of {} samples needs {:.0f} MiB; limit is {} samples", n,
                                mib, kMax4DAxis));
  }
  filter.validate();
  check_joint_grid(pm, axis);
  std::lock_guard lock(oracle_gate());

  const Axis half = half_pitch(axis);
  const auto pump = pump_profiles(params, half);
  const auto G = phase_matching_half_2d(pm, axis);

  std::vector<double> amp(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) amp[i * n + k] = filter.amplitude(axis.coord(i), axis.coord(k));
  }

  JointAmplitude4D j{std::vector<cplx>(n * n * n * n), axis};
  double norm = 0.0;
  for (std::size_t x1 = 0; x1 < n; ++x1) {
    for (std::size_t y1 = 0; y1 < n; ++y1) {
      const double a1 = amp[x1 * n + y1];
      for (std::size_t x2 = 0; x2 < n; ++x2) {
        const double wx = pump.W[x1 + x2];
        for (std::size_t y2 = 0; y2 < n; ++y2) {
          const double v = wx * pump.W[y1 + y2] * a1 * amp[x2 * n + y2] * G.at(x1 + n - x2, y1 + n - y2);
          j.psi[j.index(x1, y1, x2, y2)] = v;
          norm += v * v;
        }
      }
    }
  }
  norm *= std::pow(axis.pitch(), 4);
  if (!(norm >= 1e-300)) throw ParameterError("filter opaque: the filtered amplitude has zero norm");
  j.raw_norm_sq = norm;
  const double s = 1.0 / std::sqrt(norm);
  double peak = 0.0;
  for (auto& v : j.psi) {
    v *= s;
    peak = std::max(peak, std::abs(v));
  }
  double asym = 0.0;
  for (std::size_t x1 = 0; x1 < n; ++x1)
    for (std::size_t y1 = 0; y1 < n; ++y1)
      for (std::size_t x2 = 0; x2 < n; ++x2)
        for (std::size_t y2 = 0; y2 < n; ++y2)
          asym = std::max(asym, std::abs(j.psi[j.index(x1, y1, x2, y2)] - j.psi[j.index(x2, y2, x1, y1)]));
  j.exchange_asymmetry = asym / peak;
  return j;
}

RealField1D nearfield_marginal(const JointAmplitude1D& joint) {
  const std::size_t n = joint.axis.size();
  std::vector<double> p1(n, 0.0), p2(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double v = std::norm(joint.psi(a, b));
      p1[a] += v;
      p2[b] += v;
    }
  }
  check_photon_marginals(p1, p2);
  RealField1D out(std::move(p1), joint.axis, Plane::NearField);
  normalize(out);
  return out;
}

RealField1D farfield_marginal(const JointAmplitude1D& joint) {
  const std::size_t n = joint.axis.size();
  std::vector<cplx> buf(joint.psi.data(), joint.psi.data() + n * n);
  const std::array<Axis, 2> axes{joint.axis, joint.axis};
  unitary_transform(buf, axes, Direction::ToMomentum);
  std::vector<double> p1(n, 0.0), p2(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double v = std::norm(buf[a * n + b]);
      p1[a] += v;
      p2[b] += v;
    }
  }
  check_photon_marginals(p1, p2);
  RealField1D out(std::move(p1), joint.axis.dual(), Plane::FarField);
  normalize(out);
  return out;
}

namespace {

RealField2D marginal_4d(const std::vector<cplx>& psi, const Axis& axis, Plane plane) {
  const std::size_t n = axis.size();
  const std::size_t n2 = n * n;
  std::vector<double> p1(n2, 0.0), p2(n2, 0.0);
  for (std::size_t r = 0; r < n2; ++r) {
    for (std::size_t c = 0; c < n2; ++c) {
      const double v = std::norm(psi[r * n2 + c]);
      p1[r] += v;
      p2[c] += v;
    }
  }
  check_photon_marginals(p1, p2);
  RealField2D out(std::move(p1), axis, axis, plane);
  normalize(out);
  return out;
}

}  // namespace

RealField2D nearfield_marginal(const JointAmplitude4D& joint) {
  return marginal_4d(joint.psi, joint.axis, Plane::NearField);
}

RealField2D farfield_marginal(const JointAmplitude4D& joint) {
  std::vector<cplx> buf = joint.psi;
  const std::array<Axis, 4> axes{joint.axis, joint.axis, joint.axis, joint.axis};
  unitary_transform(buf, axes, Direction::ToMomentum);
  return marginal_4d(buf, joint.axis.dual(), Plane::FarField);
}

double success_probability(const PhysicalParams& params, const PhaseMatchingModel& pm,
                           const FilterSpec& filter, const Axis& axis) {
  const double blank = build_joint_1d(params, pm, FilterSpec::blank(), axis).raw_norm_sq;
  const double px = build_joint_1d(params, pm, filter, axis, FilterSpec::AxisId::X).raw_norm_sq / blank;
  if (filter.kind != FilterKind::CustomSampled) return px * px;
  const double py = build_joint_1d(params, pm, filter, axis, FilterSpec::AxisId::Y).raw_norm_sq / blank;
  return px * py;
}

double svd_schmidt(const JointAmplitude1D& joint) { return singular_schmidt(joint.psi); }

double svd_schmidt(const JointAmplitude4D& joint) {
  std::lock_guard lock(oracle_gate());
  const auto n2 = static_cast<Eigen::Index>(joint.n() * joint.n());
  Eigen::Map<const CMatrix> m(joint.psi.data(), n2, n2);
  return singular_schmidt(m);
}

RealField2D nearfield_image(const RealField1D& ix, const RealField1D& iy) {
  if (ix.plane != Plane::NearField || iy.plane != Plane::NearField) {
    throw GridError("nearfield_image expects near-field marginals");
  }
  RealField2D out(ix.axis, iy.axis, Plane::NearField);
  for (std::size_t i = 0; i < ix.size(); ++i) {
    for (std::size_t j = 0; j < iy.size(); ++j) out.at(i, j) = ix[i] * iy[j];
  }
  normalize(out);
  return out;
}

namespace {

// |V~(k dp)|^2 for V = W t^2 on one axis, k in [-K, K], by direct summation.
std::vector<double> envelope_spectrum(const std::vector<double>& V, const Axis& axis, double dp,
                                      std::ptrdiff_t K) {
  std::vector<double> out(static_cast<std::size_t>(2 * K + 1));
  const double scale = axis.pitch() / std::sqrt(2.0 * pi);
  for (std::ptrdiff_t k = -K; k <= K; ++k) {
    const double s = static_cast<double>(k) * dp;
    cplx acc = 0.0;
    for (std::size_t i = 0; i < V.size(); ++i) acc += V[i] * std::polar(1.0, -s * axis.coord(i));
    out[static_cast<std::size_t>(k + K)] = std::norm(acc * scale);
  }
  return out;
}

std::ptrdiff_t envelope_support(const std::vector<double>& V, const Axis& axis, double dp) {
  ComplexField1D f(axis, Plane::NearField);
  for (std::size_t i = 0; i < V.size(); ++i) f[i] = V[i];
  const auto spec = transform(f, Direction::ToMomentum);
  double peak = 0.0;
  for (const auto& v : spec.values) peak = std::max(peak, std::norm(v));
  double s_max = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (std::norm(spec[i]) > 1e-14 * peak) s_max = std::max(s_max, std::abs(spec.axis.coord(i)));
  }
  return static_cast<std::ptrdiff_t>(std::ceil(s_max / dp)) + 2;
}

}  // namespace

RealField2D farfield_image(const PhysicalParams& params, const PhaseMatchingModel& pm,
                           const FilterSpec& filter, const Axis& position_axis, const Axis& out_axis) {
  filter.validate();
  if (!filter.separable()) throw ParameterError("farfield_image needs a separable filter");
  const std::size_t n = position_axis.size();
  const auto pump = pump_profiles(params, position_axis);
  std::vector<double> vx(n), vy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = position_axis.coord(i);
    const double tx = filter.amplitude_axis(x, FilterSpec::AxisId::X);
    const double ty = filter.amplitude_axis(x, FilterSpec::AxisId::Y);
    vx[i] = pump.W[i] * tx * tx;
    vy[i] = pump.W[i] * ty * ty;
  }
  if (max_abs(vx) == 0.0 || max_abs(vy) == 0.0) throw ParameterError("filter opaque: no transmitted envelope");

  // I(q) = (P * h)(2q) with P = |V~_x|^2 |V~_y|^2 and h = |g|^2, evaluated by
  // FFT on a grid of pitch dp = 2 dq_out that is twice as wide as the output.
  const double dp = 2.0 * out_axis.pitch();
  const std::size_t M = 2 * out_axis.size();
  const auto K = std::max(envelope_support(vx, position_axis, dp), envelope_support(vy, position_axis, dp));
  if (static_cast<std::size_t>(2 * K) >= M / 2) {
    throw GridError("far-field output grid is too coarse for the pump-filter envelope");
  }
  const auto px = envelope_spectrum(vx, position_axis, dp, K);
  const auto py = envelope_spectrum(vy, position_axis, dp, K);

  const Axis conv_axis(M, dp);
  std::vector<cplx> P(M * M, 0.0), H(M * M);
  const auto c = static_cast<std::ptrdiff_t>(M / 2);
  for (std::ptrdiff_t i = -K; i <= K; ++i) {
    for (std::ptrdiff_t k = -K; k <= K; ++k) {
      P[static_cast<std::size_t>(i + c) * M + static_cast<std::size_t>(k + c)] =
          px[static_cast<std::size_t>(i + K)] * py[static_cast<std::size_t>(k + K)];
    }
  }
  for (std::size_t i = 0; i < M; ++i) {
    const double p1 = conv_axis.coord(i);
    for (std::size_t k = 0; k < M; ++k) {
      const double p2 = conv_axis.coord(k);
      const double g = pm.eval(p1 * p1 + p2 * p2);
      H[i * M + k] = g * g;
    }
  }
  const std::array<Axis, 2> fwd{conv_axis, conv_axis};
  const std::array<Axis, 2> inv{conv_axis.dual(), conv_axis.dual()};
  unitary_transform(P, fwd, Direction::ToMomentum);
  unitary_transform(H, fwd, Direction::ToMomentum);
  for (std::size_t k = 0; k < P.size(); ++k) P[k] *= H[k];
  unitary_transform(P, inv, Direction::ToPosition);

  const std::size_t m = out_axis.size();
  RealField2D out(out_axis, out_axis, Plane::FarField);
  const std::size_t off = M / 2 - m / 2;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      out.at(i, k) = std::max(0.0, P[(i + off) * M + (k + off)].real());
    }
  }
  normalize(out);
  return out;
}

}  // namespace distill
