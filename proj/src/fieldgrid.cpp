#include "distill/fieldgrid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fmt/format.h>

namespace distill {

namespace {

// FFTW's planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
void check_intensity(std::span<const T> values) {
  for (double v : values) {
    if (std::isnan(v)) throw GridError("intensity field contains NaN");
    if (v < 0.0) throw GridError(fmt::format("intensity field has negative sample {}", v));
  }
}

double sum_checked(std::span<const double> v) {
  check_intensity(v);
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double sum_sq_checked(std::span<const double> v) {
  check_intensity(v);
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

const char* to_string(Plane plane) {
  return plane == Plane::NearField ? "near-field" : "far-field";
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Axis::Axis(std::size_t n, double dx) : n_(n), dx_(dx) {
  if (!is_power_of_two(n)) throw GridError(fmt::format("axis size {} is not a power of two", n));
  if (n < 16) throw GridError(fmt::format("axis size {} is below the minimum of 16", n));
  if (!(dx > 0.0) || !std::isfinite(dx)) throw GridError("axis pitch must be positive and finite");
}

Axis Axis::covering(double half_extent, std::size_t n) {
  return Axis(n, 2.0 * half_extent / static_cast<double>(n));
}

double Axis::dual_pitch() const {
  return 2.0 * std::numbers::pi / (static_cast<double>(n_) * dx_);
}

void unitary_transform(std::span<cplx> data, std::span<const Axis> axes, Direction direction) {
  const std::size_t rank = axes.size();
  if (rank < 1 || rank > 4) throw GridError("unitary_transform supports rank 1..4");
  std::array<int, 4> dims{};
  std::size_t total = 1;
  double scale = 1.0;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t n = axes[d].size();
    if (!is_power_of_two(n) || n % 4 != 0) {
      throw GridError(fmt::format("transform axis of size {} is not a power of two >= 4", n));
    }
    dims[d] = static_cast<int>(n);
    total *= n;
    scale *= axes[d].pitch() / std::sqrt(2.0 * std::numbers::pi);
  }
  if (data.size() != total) throw GridError("transform data size does not match axes");

  // Centred grids: e^{-i q_k x_j} = (-1)^{j+k} e^{-2 pi i jk/n} when 4 | n, so a
  // checkerboard sign before and after the plain DFT recentres both domains.
  auto checkerboard = [&](double extra) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t parity = 0;
      for (std::size_t d = 0; d < rank; ++d) parity += idx[d];
      data[flat] *= (parity & 1U) ? -extra : extra;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < static_cast<std::size_t>(dims[d])) break;
        idx[d] = 0;
      }
    }
  };

  checkerboard(1.0);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  const int sign = direction == Direction::ToMomentum ? FFTW_FORWARD : FFTW_BACKWARD;
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft(static_cast<int>(rank), dims.data(), buf, buf, sign, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw GridError("FFTW failed to create a plan");
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  checkerboard(scale);
}

ComplexField1D transform(const ComplexField1D& field, Direction direction) {
  ComplexField1D out(field.values, field.axis.dual(), dual_plane(field.plane));
  const std::array<Axis, 1> axes{field.axis};
  unitary_transform(out.values, axes, direction);
  return out;
}

ComplexField2D transform(const ComplexField2D& field, Direction direction) {
  ComplexField2D out(field.values, field.x_axis.dual(), field.y_axis.dual(), dual_plane(field.plane));
  const std::array<Axis, 2> axes{field.x_axis, field.y_axis};
  unitary_transform(out.values, axes, direction);
  return out;
}

double integrate(const RealField1D& field) { return sum_checked(field.values) * field.cell(); }
double integrate(const RealField2D& field) { return sum_checked(field.values) * field.cell(); }
double integrate_sq(const RealField1D& field) { return sum_sq_checked(field.values) * field.cell(); }
double integrate_sq(const RealField2D& field) { return sum_sq_checked(field.values) * field.cell(); }

double effective_area(const RealField1D& field) {
  const double s = integrate(field);
  const double s2 = integrate_sq(field);
  if (!(s2 > 0.0)) throw GridError("effective_area of an all-zero field");
  return s * s / s2;
}

double effective_area(const RealField2D& field) {
  const double s = integrate(field);
  const double s2 = integrate_sq(field);
  if (!(s2 > 0.0)) throw GridError("effective_area of an all-zero field");
  return s * s / s2;
}

void normalize(RealField1D& field) {
  const double s = integrate(field);
  if (!(s > 0.0)) throw GridError("cannot normalize an all-zero field");
  for (double& v : field.values) v /= s;
}

void normalize(RealField2D& field) {
  const double s = integrate(field);
  if (!(s > 0.0)) throw GridError("cannot normalize an all-zero field");
  for (double& v : field.values) v /= s;
}

double sample_bilinear(const RealField2D& field, double x, double y) {
  const double fx = x / field.x_axis.pitch() + static_cast<double>(field.x_axis.center());
  const double fy = y / field.y_axis.pitch() + static_cast<double>(field.y_axis.center());
  if (fx < 0.0 || fy < 0.0) return 0.0;
  const auto i0 = static_cast<std::size_t>(fx);
  const auto j0 = static_cast<std::size_t>(fy);
  if (i0 + 1 >= field.nx() || j0 + 1 >= field.ny()) return 0.0;
  const double tx = fx - static_cast<double>(i0);
  const double ty = fy - static_cast<double>(j0);
  return (1 - tx) * (1 - ty) * field.at(i0, j0) + tx * (1 - ty) * field.at(i0 + 1, j0) +
         (1 - tx) * ty * field.at(i0, j0 + 1) + tx * ty * field.at(i0 + 1, j0 + 1);
}

double radial_asymmetry(const RealField2D& field) {
  const std::size_t nx = field.nx();
  const std::size_t ny = field.ny();
  // Mirror and transpose mismatch (index 0 has no mirror partner on a centred grid).
  double mirror_num = 0.0;
  double mirror_den = 0.0;
  for (std::size_t i = 1; i < nx; ++i) {
    for (std::size_t j = 1; j < ny; ++j) {
      const double f = field.at(i, j);
      const double fm = field.at(nx - i, ny - j);
      const double ft = (nx == ny) ? field.at(j, i) : f;
      mirror_num += (f - fm) * (f - fm) + (f - ft) * (f - ft);
      mirror_den += 2.0 * f * f;
    }
  }
  double rot_num = 0.0;
  double rot_den = 0.0;
  const double c = std::numbers::sqrt2 / 2.0;
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const double x = field.x_axis.coord(i);
      const double y = field.y_axis.coord(j);
      const double xr = c * (x - y);
      const double yr = c * (x + y);
      if (std::abs(xr) >= field.x_axis.half_extent() - field.x_axis.pitch() ||
          std::abs(yr) >= field.y_axis.half_extent() - field.y_axis.pitch()) {
        continue;
      }
      const double f = field.at(i, j);
      const double d = f - sample_bilinear(field, xr, yr);
      rot_num += d * d;
      rot_den += f * f;
    }
  }
  const double mirror = mirror_den > 0 ? std::sqrt(mirror_num / mirror_den) : 0.0;
  const double rot = rot_den > 0 ? std::sqrt(rot_num / rot_den) : 0.0;
  return std::max(mirror, rot);
}

RadialProfile radial_profile(const RealField2D& field, double max_asymmetry) {
  const double dx = field.x_axis.pitch();
  if (std::abs(field.y_axis.pitch() - dx) > 1e-12 * dx) {
    throw GridError("radial_profile requires equal x and y pitch");
  }
  check_intensity(std::span<const double>(field.values));
  RadialProfile prof;
  prof.asymmetry = radial_asymmetry(field);
  if (prof.asymmetry > max_asymmetry) {
    throw GridError(fmt::format("field is not radially symmetric: asymmetry {:.4g} exceeds {:.4g}",
                                prof.asymmetry, max_asymmetry));
  }
  prof.bin_width = dx;
  const double r_max = std::min(field.x_axis.half_extent(), field.y_axis.half_extent());
  const auto nbins = static_cast<std::size_t>(r_max / dx);
  std::vector<double> sum(nbins, 0.0), rsum(nbins, 0.0);
  std::vector<std::size_t> count(nbins, 0);
  for (std::size_t i = 0; i < field.nx(); ++i) {
    for (std::size_t j = 0; j < field.ny(); ++j) {
      const double r = std::hypot(field.x_axis.coord(i), field.y_axis.coord(j));
      const auto b = static_cast<std::size_t>(r / dx);
      if (b >= nbins) continue;
      sum[b] += field.at(i, j);
      rsum[b] += r;
      ++count[b];
    }
  }
  for (std::size_t b = 0; b < nbins; ++b) {
    if (count[b] == 0) continue;
    prof.radius.push_back(rsum[b] / static_cast<double>(count[b]));
    prof.value.push_back(sum[b] / static_cast<double>(count[b]));
    prof.count.push_back(count[b]);
  }
  return prof;
}

RealField1D intensity(const ComplexField1D& field) {
  RealField1D out(field.axis, field.plane);
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = std::norm(field[i]);
  return out;
}

RealField2D intensity(const ComplexField2D& field) {
  RealField2D out(field.x_axis, field.y_axis, field.plane);
  for (std::size_t k = 0; k < field.values.size(); ++k) out.values[k] = std::norm(field.values[k]);
  return out;
}

}  // namespace distill
