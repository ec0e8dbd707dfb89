#pragma once

// Physical constants of the source, pump and phase-matching envelopes, the
// double-Gaussian SLM filter family, and closed-form Schmidt results.

#include <memory>
#include <stdexcept>
#include <vector>

#include "distill/fieldgrid.hpp"

namespace distill {

/// Raised when physical parameters or a filter description are invalid.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kSlmPixelUm = 32.0;

struct PhysicalParams {
  double sigma = 600.0;    ///< pump beam waist [um]
  double L = 4500.0;       ///< crystal length [um]
  double lambda3 = 0.355;  ///< pump wavelength [um]
  double dsigma = 13.0;    ///< uncertainty of sigma [um]
  double dL = 300.0;       ///< uncertainty of L [um]

  /// Pump wavenumber 2 pi / lambda3 [rad/um].
  double k3() const;
  void validate() const;

  /// Nominal experimental values: 600 um waist, 4.5 mm BBO, 355 nm pump.
  static PhysicalParams nominal() { return {}; }
};

/// K = 3 pi^2 sigma^2 / (8 lambda3 L), the thin-crystal, wide-pump result.
double closed_form_schmidt(const PhysicalParams& params);

// Pump envelopes. v(q) ~ exp(-sigma^2 q^2 / 4) and its transform
// W(x) ~ exp(-x^2 / sigma^2); both take squared radii.
double pump_angular(double sigma, double q_sq);
double pump_near(double sigma, double x_sq);

/// Unnormalized sinc: sin(u)/u with sinc(0) = 1.
double sinc(double u);

enum class PhaseMatchingKind { ExactSinc, GaussianApprox };

const char* to_string(PhaseMatchingKind kind);

/// Width factor alpha for which exp(-2 alpha b q^2) and sinc^2(b q^2) share the
/// same second moment along a radial cut. Computed once by quadrature.
double gaussian_width_match();

struct PhaseMatchingModel {
  PhaseMatchingKind kind = PhaseMatchingKind::ExactSinc;
  double b = 0.0;      ///< L / (4 k3) [um^2]
  double alpha = 1.0;  ///< used by GaussianApprox only

  static PhaseMatchingModel make(PhaseMatchingKind kind, const PhysicalParams& params);

  /// g at squared momentum |q|^2, peak one.
  double eval(double q_sq) const;
};

enum class FilterKind { Blank, DoubleGaussian, CustomSampled };
enum class FilterNormalization { PeakOne, Raw };

/// How the programmed transmission acts on the two-photon field.
///  Intensity: the value of F is a power transmittance; the field picks up sqrt(F).
///  Amplitude: the value of F multiplies the field directly.
enum class FilterResponse { Intensity, Amplitude };

/// Sampled mask on a centred rectangular grid with a common pitch.
struct CustomMask {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double pitch = kSlmPixelUm;
  std::vector<double> values;  ///< row-major, element (i, j) at x_i, y_j

  double x(std::size_t i) const { return (static_cast<double>(i) - 0.5 * static_cast<double>(nx - 1)) * pitch; }
  double y(std::size_t j) const { return (static_cast<double>(j) - 0.5 * static_cast<double>(ny - 1)) * pitch; }
};

struct FilterSpec {
  FilterKind kind = FilterKind::Blank;
  double a = 0.0;  ///< Gaussian width parameter [um]
  double d = 0.0;  ///< lobe offset [um]
  double slm_pixel = kSlmPixelUm;
  FilterNormalization normalization = FilterNormalization::PeakOne;
  FilterResponse response = FilterResponse::Intensity;
  double gain = 1.0;  ///< global factor on the field transmission
  std::shared_ptr<const CustomMask> mask;

  static FilterSpec blank();
  static FilterSpec double_gaussian(double a_um, double d_um,
                                    FilterNormalization norm = FilterNormalization::PeakOne,
                                    FilterResponse response = FilterResponse::Intensity);
  /// Widths and offsets counted in SLM pixels.
  static FilterSpec double_gaussian_px(double a_px, double d_px,
                                       FilterNormalization norm = FilterNormalization::PeakOne,
                                       FilterResponse response = FilterResponse::Intensity,
                                       double slm_pixel = kSlmPixelUm);
  static FilterSpec custom(CustomMask mask,
                           FilterNormalization norm = FilterNormalization::PeakOne,
                           FilterResponse response = FilterResponse::Intensity);

  void validate() const;

  /// True when F(x, y) = u(x) u'(y) so that each axis can be treated alone.
  bool separable() const;

  /// Field transmission factor entering the two-photon amplitude at (x, y).
  double amplitude(double x, double y) const;

  enum class AxisId { X, Y };
  /// One-axis field factor t_axis with amplitude(x, y) = t_X(x) t_Y(y).
  /// Requires separable().
  double amplitude_axis(double coord, AxisId axis = AxisId::X) const;
};

/// Programmed transmission F(x, y) after normalization. PeakOne divides the
/// double-Gaussian form by its family maximum 4 (the d = 0 value at the
/// origin) and a custom mask by its largest sample. Blank returns 1;
/// custom masks return 0 outside the sampled support.
double filter_eval(const FilterSpec& spec, double x, double y);

struct PumpProfiles {
  RealField1D v;  ///< angular spectrum on the dual of the requested axis
  RealField1D W;  ///< near field, the discrete transform of v
};

/// Sampled v and W, each peak-normalized. The grid must carry at least 8
/// samples across the 1/e^2 intensity width 2 sigma.
PumpProfiles pump_profiles(const PhysicalParams& params, const Axis& position_axis);

struct PhaseMatchingProfiles {
  RealField1D g;  ///< on the dual of the requested axis
  RealField1D G;  ///< discrete transform of g on the position axis
};

struct PhaseMatchingProfiles2D {
  RealField2D g;
  RealField2D G;
};

/// Fraction of |g|^2 energy in the outermost 10% of a momentum grid above which
/// the sampled phase-matching function is rejected as aliased.
inline constexpr double kAliasingLimit = 1e-3;

/// Sampled g and its transform G, peak-normalized. For ExactSinc the momentum
/// grid must cover at least 6 sinc lobes and pass the aliasing check.
PhaseMatchingProfiles phase_matching_profiles(const PhaseMatchingModel& model,
                                              const Axis& position_axis);

/// Radially exact 2D version (sinc(b |q|^2) does not factor across axes).
PhaseMatchingProfiles2D phase_matching_profiles_2d(const PhaseMatchingModel& model,
                                                   const Axis& position_axis);

/// Energy fraction of |g|^2 in the outer 10% of the momentum grid dual to
/// `position_axis` (1D cut, or 2D square band when `two_d`).
double phase_matching_edge_energy(const PhaseMatchingModel& model, const Axis& position_axis,
                                  bool two_d);

/// Thin-crystal marginals I(x) ~ exp(-2|x|^2/sigma^2) and
/// I(q) ~ sinc^2((L/k3)|q|^2), sampled as normalized 2D images. The
/// near-field grid spans +-4 sigma; the far-field extent is set so the
/// outermost sinc lobe still spans four samples.
struct ReferenceMarginals {
  RealField2D near;
  RealField2D far;
};
ReferenceMarginals thin_crystal_marginals(const PhysicalParams& params, std::size_t n);

}  // namespace distill
