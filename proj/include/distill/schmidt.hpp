#pragma once

// Schmidt number from the near- and far-field single-photon intensities,
// and the filtered-versus-blank distillation summary.

#include <optional>

#include "distill/fieldgrid.hpp"

namespace distill {

/// Slack allowed below K = 1 from quadrature error.
inline constexpr double kSchmidtFloorTolerance = 1e-6;

/// K = (1/4 pi^2) [int I(x)]^2/int I(x)^2 * [int I(q)]^2/int I(q)^2 over 2D images.
double k_from_marginals(const RealField2D& nf, const RealField2D& ff);

/// One-axis version, K = (1/2 pi) R_x R_q.
double k_axis_from_marginals(const RealField1D& nf, const RealField1D& ff);

/// K_x K_y for independent transverse axes.
double k_compose_axes(double kx, double ky);

struct SchmidtReport {
  double k_estimate = 0.0;
  std::optional<double> k_svd;
  double k0 = 0.0;
  double ratio = 0.0;
  double p_succ = 0.0;
  std::optional<double> dk;
};

/// Ratio against K0 recomputed from blank-filter marginals on the same grids.
SchmidtReport distillation_report(const RealField2D& nf, const RealField2D& ff, const RealField2D& nf0,
                                  const RealField2D& ff0, double p_succ);

/// Separable path: both axes share the given one-axis marginals.
SchmidtReport distillation_report(const RealField1D& nf, const RealField1D& ff, const RealField1D& nf0,
                                  const RealField1D& ff0, double p_succ);

}  // namespace distill
