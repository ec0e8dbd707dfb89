#pragma once

// Filtered two-photon transverse amplitudes, their single-photon marginals,
// success probability and an SVD Schmidt oracle.

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "distill/fieldgrid.hpp"
#include "distill/physmodel.hpp"

namespace distill {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One transverse axis of the biphoton: psi(i, j) at (x1_i, x2_j).
struct JointAmplitude1D {
  CMatrix psi;
  Axis axis;
  double raw_norm_sq = 0.0;         ///< sum |psi|^2 dx^2 before normalization
  double exchange_asymmetry = 0.0;  ///< max |psi - psi^T| / max |psi|

  /// Sample an arbitrary amplitude on axis x axis and normalize it.
  static JointAmplitude1D from_function(const Axis& axis,
                                        const std::function<cplx(double, double)>& f);
};

/// Default joint axis for a pump of waist sigma: n samples over +-extent_sigmas.
Axis joint_axis(const PhysicalParams& params, std::size_t n, double extent_sigmas = 4.0);

/// psi(x1, x2) = W((x1+x2)/2) t(x1) t(x2) G((x1-x2)/2), normalized.
///
/// With ExactSinc the one-axis phase matching is sinc(b q^2) along the axis,
/// an approximation to the radial sinc; GaussianApprox is exact per axis.
/// Throws ParameterError("filter opaque") when the filtered norm vanishes.
JointAmplitude1D build_joint_1d(const PhysicalParams& params, const PhaseMatchingModel& pm,
                                const FilterSpec& filter, const Axis& axis,
                                FilterSpec::AxisId which = FilterSpec::AxisId::X);

/// Full transverse amplitude psi(x1, y1, x2, y2), row-major with photon 1 first.
struct JointAmplitude4D {
  std::vector<cplx> psi;
  Axis axis;  ///< shared by all four dimensions
  double raw_norm_sq = 0.0;
  double exchange_asymmetry = 0.0;

  std::size_t n() const { return axis.size(); }
  std::size_t index(std::size_t ix1, std::size_t iy1, std::size_t ix2, std::size_t iy2) const {
    const std::size_t m = n();
    return ((ix1 * m + iy1) * m + ix2) * m + iy2;
  }
};

inline constexpr std::size_t kMax4DAxis = 32;

/// Coarse non-separable oracle with the radial phase matching g(|q|^2).
/// Builds run one at a time; axes above kMax4DAxis are rejected before any
/// allocation.
JointAmplitude4D build_joint_4d(const PhysicalParams& params, const PhaseMatchingModel& pm,
                                const FilterSpec& filter, const Axis& axis);

// Single-photon marginals, normalized to unit integral. Photon 1 and photon 2
// marginals are compared and a mismatch above 1e-9 raises NumericalError.
RealField1D nearfield_marginal(const JointAmplitude1D& joint);
RealField1D farfield_marginal(const JointAmplitude1D& joint);
RealField2D nearfield_marginal(const JointAmplitude4D& joint);
RealField2D farfield_marginal(const JointAmplitude4D& joint);

/// Transmitted fraction of the pair amplitude norm through the filter on both
/// transverse axes. Raw-normalized filters may exceed 1.
double success_probability(const PhysicalParams& params, const PhaseMatchingModel& pm,
                           const FilterSpec& filter, const Axis& axis);

/// 1 / sum lambda_i^2 over the normalized squared singular values.
double svd_schmidt(const JointAmplitude1D& joint);
double svd_schmidt(const JointAmplitude4D& joint);

/// 2D far-field single-photon image of the separable state in the
/// short-correlation limit: with V = W t^2 per axis,
///   I(q) = int |V~_x(s_x)|^2 |V~_y(s_y)|^2 |g(2q - s)|^2 ds
/// using the radial g of `pm`. Sampled on out_axis x out_axis and normalized.
RealField2D farfield_image(const PhysicalParams& params, const PhaseMatchingModel& pm,
                           const FilterSpec& filter, const Axis& position_axis,
                           const Axis& out_axis);

/// Near-field 2D image I_x(x) I_y(y) of the separable state, normalized.
RealField2D nearfield_image(const RealField1D& ix, const RealField1D& iy);

}  // namespace distill
