#pragma once

// Filter sweeps, (a, d) heatmaps, Monte Carlo bands and frame-and-fit runs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "distill/biphoton.hpp"
#include "distill/config.hpp"
#include "distill/fitting.hpp"
#include "distill/schmidt.hpp"

namespace distill {

/// Run `task(i)` for i in [0, n) on a pool of worker threads. Exceptions stay
/// with their task: the returned vector holds the message of each failure.
std::vector<std::optional<std::string>> parallel_for(std::size_t n, std::size_t threads,
                                                     const std::function<void(std::size_t)>& task);

FilterSpec make_filter(const SweepConfig& cfg, double a_px, double d_px);

/// Engine evaluation of one filter against a precomputed blank reference.
struct EngineContext {
  PhysicalParams params;
  PhaseMatchingModel pm;
  Axis axis;
  double blank_norm = 0.0;
  double k0 = 0.0;
  std::optional<double> k0_svd;
  RealField1D nf0, ff0;

  static EngineContext make(const PhysicalParams& params, PhaseMatchingKind kind, const GridPreset& grid,
                            bool with_svd);
  SchmidtReport evaluate(const FilterSpec& filter, bool with_svd) const;
};

struct SweepRow {
  double a_px = 0.0, d_px = 0.0, a_um = 0.0, d_um = 0.0;
  double k = 0.0, k0 = 0.0, ratio = 0.0, p_succ = 0.0;
  std::optional<double> k_svd, band_lo, band_hi;
  std::optional<double> k_image, k_fit, dk_fit, k0_fit, ratio_fit;  // end-to-end only
  std::string status = "ok";
  bool ok() const { return status == "ok"; }
};

std::vector<SweepRow> run_sweep(const SweepConfig& cfg);

struct McBand {
  double lo = 0.0;
  double hi = 0.0;
  double nominal = 0.0;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
};

/// sigma and L drawn uniformly from sigma +- dsigma and L +- dL; K per draw
/// from the engine on the nominal grid; band = [min, max] over n draws.
/// Failed draws are redrawn, up to 10 n attempts in total.
McBand mc_band(const PhysicalParams& params, PhaseMatchingKind kind, const GridPreset& grid,
               const FilterSpec& filter, std::size_t n, std::uint64_t seed, std::size_t threads = 0);

struct Heatmap {
  std::vector<double> a_px, d_px;
  std::vector<std::vector<double>> ratio, p_succ;  ///< [a][d]; NaN for failed cells
  double blank_ratio = 1.0, blank_p_succ = 1.0;
  std::vector<std::string> errors;
};

Heatmap heatmap(const SweepConfig& cfg);

/// Engine marginals -> EMCCD frames -> fits -> K, for every sweep point and
/// the blank filter (which supplies K0 for the fit-based ratio).
std::vector<SweepRow> end_to_end(const SweepConfig& cfg);

/// Camera-plane images of the separable state for one filter.
struct PlaneImages {
  RealField2D nf;
  RealField2D ff;
};
PlaneImages camera_marginals(const SweepConfig& cfg, const FilterSpec& filter);

struct FrameSet {
  std::vector<EmccdFrame> nf;
  std::vector<EmccdFrame> ff;
};
/// cfg.frames frames per plane for sweep task `task`. The stripe artifact, when
/// configured, goes on the far-field frames.
FrameSet synth_frames(const SweepConfig& cfg, const PlaneImages& images, std::size_t task);

struct FitOutcome {
  NearFieldFit nf;
  FarFieldFit ff;
  FitSchmidt k;
};
FitOutcome fit_frames(std::span<const EmccdFrame> nf_frames, std::span<const EmccdFrame> ff_frames,
                      const CameraSpec& cam, const FitOptions& opt = {});

// Output
void write_sweep_csv(std::ostream& os, const SweepConfig& cfg, const std::vector<SweepRow>& rows,
                     const std::string& title);
void write_heatmap(const std::filesystem::path& dir, const SweepConfig& cfg, const Heatmap& hm);
void write_band_csv(std::ostream& os, const SweepConfig& cfg, const std::vector<SweepRow>& rows);

/// 16-bit PGM of a matrix scaled linearly from its finite min (0) to max (65535);
/// returns (min, max). Non-finite cells render as 0.
std::pair<double, double> write_scaled_pgm(const std::filesystem::path& path,
                                           const std::vector<std::vector<double>>& m);

}  // namespace distill
