#pragma once

// Run configuration: a flat "key = value" document with [sections], parsed
// strictly (unknown sections or keys are errors).

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "distill/emccd.hpp"
#include "distill/physmodel.hpp"

namespace distill {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { VaryA, VaryD, Grid2D };

const char* to_string(Scenario s);

struct GridPreset {
  std::string name = "default";
  std::size_t n = 512;
  double extent_sigmas = 4.0;  ///< joint axis spans +- extent_sigmas * sigma
};

/// "default" (n = 512) or "fine" (n = 1024), both over +-4 sigma.
GridPreset grid_preset(const std::string& name);

struct SweepConfig {
  PhysicalParams params;
  Scenario scenario = Scenario::VaryA;
  std::vector<double> a_values{4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 18, 20, 22};  ///< SLM px
  std::vector<double> d_values{20};                                                    ///< SLM px
  double slm_pixel = kSlmPixelUm;
  FilterNormalization normalization = FilterNormalization::PeakOne;
  FilterResponse response = FilterResponse::Intensity;
  PhaseMatchingKind phase_matching = PhaseMatchingKind::ExactSinc;
  GridPreset grid;
  bool with_svd = false;
  std::uint64_t seed = 1;
  std::size_t mc_samples = 500;
  bool mc_band = false;  ///< attach a Monte Carlo band to every sweep row
  std::size_t threads = 0;  ///< 0: hardware concurrency

  CameraSpec camera;
  double budget = 1e6;        ///< photons per frame
  std::size_t frames = 1;     ///< frames accumulated per plane
  double artifact_amplitude = 0.0;  ///< counts
  double artifact_period = 12.0;    ///< px

  void validate() const;

  /// Filter settings of the scenario, in sweep order.
  std::vector<std::pair<double, double>> points() const;
};

SweepConfig parse_config(std::istream& is, const std::string& source = "<config>");
SweepConfig load_config(const std::filesystem::path& path);

/// The full configuration as "section.key = value" lines.
std::vector<std::string> describe(const SweepConfig& cfg);

PhaseMatchingKind parse_phase_matching(const std::string& s);

}  // namespace distill
