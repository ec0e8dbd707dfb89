#pragma once

// EMCCD frame synthesis: photon shot noise, gamma-distributed EM gain, read
// noise, dark background and 16-bit clamping; PGM import and export.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "distill/fieldgrid.hpp"

namespace distill {

class CameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CameraSpec {
  std::size_t n_px = 512;
  double px = 16.0;             ///< pixel pitch [um]
  double em_gain = 100.0;       ///< mean EM register gain
  double read_noise = 2.0;      ///< rms [counts]
  double dark = 0.05;           ///< mean background [e- per px per frame]
  double magnification = 1.0;   ///< near-field imaging
  double focal_length = 150000.0;  ///< far-field lens [um]
  double wavelength = 0.355;    ///< wavelength used by the far-field mapping [um]

  void validate() const;

  /// Plane coordinate covered by one pixel: um for the near field,
  /// rad/um for the far field (x_cam = f lambda q / 2 pi).
  double scale(Plane plane) const;

  /// Pixel-centred axis in plane coordinates; pixel n/2 sits on the optical axis.
  Axis axis(Plane plane) const;
};

inline constexpr std::uint16_t kSaturation = 65535;

struct EmccdFrame {
  std::size_t n_px = 0;
  std::vector<std::uint16_t> counts;  ///< row-major, row = first plane coordinate
  double exposure_photons = 0.0;
  std::uint64_t seed = 0;
  Plane plane = Plane::NearField;

  std::uint16_t at(std::size_t r, std::size_t c) const { return counts[r * n_px + c]; }
};

/// Probability of each camera pixel, by 4x4 supersampled bilinear integration
/// of `marginal`. Throws CameraError when more than 1% falls off the sensor
/// or the marginal spans fewer than 8 pixels.
RealField2D pixel_probabilities(const RealField2D& marginal, const CameraSpec& cam);

EmccdFrame synth_frame(const RealField2D& marginal, const CameraSpec& cam, double budget,
                       std::uint64_t seed);

enum class StripeOrientation { Vertical, Horizontal };

/// Adds amplitude * (1 + cos(2 pi k / period)) / 2 counts along columns
/// (Vertical) or rows (Horizontal), then rounds and clamps.
EmccdFrame add_diffraction_artifact(const EmccdFrame& frame, double amplitude, double period_px,
                                    StripeOrientation orientation = StripeOrientation::Vertical);

struct FrameStack {
  RealField2D mean;
  RealField2D variance;  ///< unbiased; zero for a single frame
  std::size_t count = 0;
};

FrameStack accumulate(std::span<const EmccdFrame> frames, const CameraSpec& cam);

/// Counts as a real image on the camera axis of the frame's plane.
RealField2D frame_image(const EmccdFrame& frame, const CameraSpec& cam);

/// splitmix64 step, used to derive independent per-frame seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Binary 16-bit PGM (P5), big-endian samples.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint16_t> samples);
void write_pgm(const std::filesystem::path& path, const EmccdFrame& frame);
EmccdFrame read_pgm(const std::filesystem::path& path);

}  // namespace distill
