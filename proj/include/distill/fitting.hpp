#pragma once

// Damped least-squares fits of the four-Gaussian near-field surface and the
// offset sinc^2 far-field surface, and K from the fitted parameters.
//
// Fits work in pixel coordinates relative to the image centre index
// (x = i - n/2, y = j - n/2); CameraMaps convert to plane units.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distill/fieldgrid.hpp"

namespace distill {

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, Eigen::VectorXd best, double gradient_norm)
      : std::runtime_error(what), best_params(std::move(best)), grad_norm(gradient_norm) {}
  Eigen::VectorXd best_params;
  double grad_norm;
};

/// EMCCD noise used to predict per-pixel variance 2 g m + r^2 from the model m.
struct NoiseModel {
  double em_gain = 100.0;
  double read_noise = 2.0;
  double floor = 1.0;
};

struct FitOptions {
  int max_iterations = 200;
  double rel_tol = 1e-8;
  bool finite_difference = false;  ///< replace analytic Jacobians by central differences
  bool symmetric_init = false;     ///< near field: seed centres at (+-d', +-d')
  bool subtract_background = true; ///< near field: remove the border level first
  /// Without explicit weights: fit unweighted, then refit with weights from
  /// the variance predicted by the first-pass model.
  std::optional<NoiseModel> noise;
};

struct NfComponent {
  double alpha = 0.0;
  double beta = 0.0;     ///< x centre [px]
  double gamma = 0.0;    ///< y centre [px]
  double delta = 1.0;    ///< x width [px]
  double epsilon = 1.0;  ///< y width [px]
};

struct NearFieldFit {
  std::array<NfComponent, 4> comp{};
  double background = 0.0;  ///< level subtracted before fitting
  double residual_rms = 0.0;
  int iterations = 0;
  Eigen::MatrixXd covariance;  ///< 20x20, ordering (alpha, beta, gamma, delta, epsilon) per component

  Eigen::VectorXd params() const;
  static NearFieldFit from_params(const Eigen::VectorXd& p);
  double eval(double x, double y) const;
};

struct FarFieldFit {
  double a = 0.0;
  double b = 1.0;
  double c = 1.0;  ///< [1/px^2]
  double x0 = 0.0;
  double y0 = 0.0;
  double residual_rms = 0.0;
  int iterations = 0;
  Eigen::MatrixXd covariance;  ///< 5x5, ordering (a, b, c, x0, y0)

  Eigen::VectorXd params() const;
  static FarFieldFit from_params(const Eigen::VectorXd& p);
  double eval(double x, double y) const;
};

inline constexpr std::size_t kNearFieldParams = 20;
inline constexpr std::size_t kFarFieldParams = 5;

// Model values and analytic gradients at pixel coordinates (x, y).
double nearfield_model(const double* p, double x, double y, double* grad);
double farfield_model(const double* p, double x, double y, double* grad);

/// Background from the image border: median of 8x8 block means along the
/// outer 8-pixel frame.
double border_level(const RealField2D& image);

/// Weights 1 / max(2 g m + r^2, floor) for expected counts m. Feeding observed
/// sparse counts as m biases the fit low; pass a model or smoothed image.
RealField2D emccd_weights(const RealField2D& expected, const NoiseModel& noise);
/// Weights 1 / max(variance, floor) from an accumulated stack.
RealField2D variance_weights(const RealField2D& variance, double floor = 1.0);

NearFieldFit initial_nearfield(const RealField2D& image, bool symmetric);
FarFieldFit initial_farfield(const RealField2D& image);

NearFieldFit fit_nearfield(const RealField2D& image, const RealField2D* weights = nullptr,
                           const std::optional<NearFieldFit>& init = std::nullopt, const FitOptions& opt = {});
FarFieldFit fit_farfield(const RealField2D& image, const RealField2D* weights = nullptr,
                         const std::optional<FarFieldFit>& init = std::nullopt, const FitOptions& opt = {});

/// Render a fitted surface on an n x n pixel grid whose axis is `axis`.
RealField2D render(const NearFieldFit& fit, const Axis& axis, Plane plane = Plane::NearField);
RealField2D render(const FarFieldFit& fit, const Axis& axis, Plane plane = Plane::FarField);

struct CameraMaps {
  double nf_scale = 16.0;   ///< um per px
  double ff_scale = 1.0;    ///< rad/um per px
};

// Fitted-model integrals over the plane, in px units.
double nearfield_integral(const NearFieldFit& fit);
double nearfield_integral_sq(const NearFieldFit& fit);
/// [int I]^2 / int I^2 of b sinc^2(c r^2) (offset excluded) in px^2.
double farfield_effective_area(double c);

struct FitSchmidt {
  double k = 0.0;
  double dk = 0.0;
};

FitSchmidt k_from_fits(const NearFieldFit& nf, const FarFieldFit& ff, const CameraMaps& maps);

// Flat "name value stderr" records, one parameter per line.
std::string serialize(const NearFieldFit& fit);
std::string serialize(const FarFieldFit& fit);
NearFieldFit parse_nearfield(const std::string& text);
FarFieldFit parse_farfield(const std::string& text);

}  // namespace distill
