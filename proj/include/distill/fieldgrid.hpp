#pragma once

// Uniform, origin-centred sampling grids, the unitary transform between the
// position and momentum domains, and midpoint quadrature.
//
// Units: lengths in um, transverse momenta in rad/um.

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace distill {

using cplx = std::complex<double>;

/// Thrown when a grid cannot represent the requested field.
class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Plane { NearField, FarField };

const char* to_string(Plane plane);

/// One sampled axis. Sample i sits at (i - n/2) * dx, so index n/2 is the
/// origin. The dual (momentum) axis has pitch 2*pi / (n * dx).
class Axis {
 public:
  Axis(std::size_t n, double dx);

  /// Axis of n samples spanning [-half_extent, half_extent).
  static Axis covering(double half_extent, std::size_t n);

  std::size_t size() const { return n_; }
  double pitch() const { return dx_; }
  double dual_pitch() const;
  double extent() const { return static_cast<double>(n_) * dx_; }
  double half_extent() const { return 0.5 * extent(); }
  std::size_t center() const { return n_ / 2; }

  double coord(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(n_ / 2)) * dx_;
  }

  /// Momentum-domain partner of this axis (same n, pitch 2*pi/(n dx)).
  Axis dual() const { return Axis(n_, dual_pitch()); }

  /// Same extent with twice the samples at half the pitch.
  Axis refined() const { return Axis(2 * n_, 0.5 * dx_); }

  bool operator==(const Axis& other) const = default;

 private:
  std::size_t n_;
  double dx_;
};

inline Plane dual_plane(Plane p) {
  return p == Plane::NearField ? Plane::FarField : Plane::NearField;
}

template <class T>
struct Field1D {
  std::vector<T> values;
  Axis axis;
  Plane plane = Plane::NearField;

  Field1D(Axis ax, Plane pl) : values(ax.size()), axis(ax), plane(pl) {}
  Field1D(std::vector<T> v, Axis ax, Plane pl)
      : values(std::move(v)), axis(ax), plane(pl) {
    if (values.size() != axis.size()) {
      throw GridError("Field1D: value count does not match axis");
    }
  }

  std::size_t size() const { return values.size(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  double cell() const { return axis.pitch(); }
};

/// Row-major 2D field: element (i, j) has x = x_axis.coord(i), y = y_axis.coord(j).
template <class T>
struct Field2D {
  std::vector<T> values;
  Axis x_axis;
  Axis y_axis;
  Plane plane = Plane::NearField;

  Field2D(Axis x, Axis y, Plane pl)
      : values(x.size() * y.size()), x_axis(x), y_axis(y), plane(pl) {}
  Field2D(std::vector<T> v, Axis x, Axis y, Plane pl)
      : values(std::move(v)), x_axis(x), y_axis(y), plane(pl) {
    if (values.size() != x_axis.size() * y_axis.size()) {
      throw GridError("Field2D: value count does not match axes");
    }
  }

  std::size_t nx() const { return x_axis.size(); }
  std::size_t ny() const { return y_axis.size(); }
  T& at(std::size_t i, std::size_t j) { return values[i * ny() + j]; }
  const T& at(std::size_t i, std::size_t j) const { return values[i * ny() + j]; }
  double cell() const { return x_axis.pitch() * y_axis.pitch(); }
};

using RealField1D = Field1D<double>;
using RealField2D = Field2D<double>;
using ComplexField1D = Field1D<cplx>;
using ComplexField2D = Field2D<cplx>;

enum class Direction { ToMomentum, ToPosition };

/// In-place unitary transform of a row-major array of rank 1..4.
///
/// ToMomentum evaluates f~(q) = (2 pi)^(-d/2) sum_x f(x) e^{-i q.x} dx^d on the
/// dual grid; ToPosition is its exact inverse. `axes` are the axes of the
/// *input* domain, one per dimension, each a power of two.
void unitary_transform(std::span<cplx> data, std::span<const Axis> axes,
                       Direction direction);

ComplexField1D transform(const ComplexField1D& field, Direction direction);
ComplexField2D transform(const ComplexField2D& field, Direction direction);

// Midpoint quadrature over nonnegative intensities. NaN or negative samples
// raise GridError.
double integrate(const RealField1D& field);
double integrate(const RealField2D& field);
double integrate_sq(const RealField1D& field);
double integrate_sq(const RealField2D& field);

/// [integral I]^2 / integral I^2, the effective support of an intensity.
double effective_area(const RealField1D& field);
double effective_area(const RealField2D& field);

/// Scale a field so its midpoint integral is one.
void normalize(RealField1D& field);
void normalize(RealField2D& field);

struct RadialProfile {
  double bin_width = 0.0;
  std::vector<double> radius;  ///< mean radius of the samples in each bin
  std::vector<double> value;   ///< azimuthal mean
  std::vector<std::size_t> count;
  double asymmetry = 0.0;      ///< diagnostic that was checked on input
};

/// Relative L2 mismatch between a field and its copy rotated by 45 degrees
/// about the origin (bilinear resampling), combined with the mirror/transpose
/// mismatch. Zero for exactly radial fields up to interpolation error.
double radial_asymmetry(const RealField2D& field);

/// Azimuthal average in bins of width dx. Requires dx == dy and an asymmetry
/// diagnostic below `max_asymmetry`.
RadialProfile radial_profile(const RealField2D& field, double max_asymmetry = 0.05);

/// Bilinear interpolation between sample points; zero outside the sampled
/// support.
double sample_bilinear(const RealField2D& field, double x, double y);

/// Squared modulus of a complex field.
RealField1D intensity(const ComplexField1D& field);
RealField2D intensity(const ComplexField2D& field);

bool is_power_of_two(std::size_t n);

}  // namespace distill
