// distill: command-line driver for sweeps, heatmaps, bands, frames and fits.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "distill/sweep.hpp"

namespace fs = std::filesystem;
using namespace distill;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> grid;
  std::optional<std::string> phase_matching;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--grid", c.grid, "grid preset (default, fine)");
  app->add_option("--phase-matching", c.phase_matching, "sinc or gauss");
}

SweepConfig resolve(const Common& c) {
  SweepConfig cfg = c.config.empty() ? SweepConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.grid) cfg.grid = grid_preset(*c.grid);
  if (c.phase_matching) cfg.phase_matching = parse_phase_matching(*c.phase_matching);
  cfg.validate();
  return cfg;
}

fs::path prepare(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

int row_status(const std::vector<SweepRow>& rows) {
  int bad = 0;
  for (const auto& r : rows)
    if (!r.ok()) {
      std::cerr << fmt::format("a={} d={}: {}\n", r.a_px, r.d_px, r.status);
      ++bad;
    }
  return bad ? 2 : 0;
}

std::string tag(double a, double d) {
  if (std::isinf(a)) return "blank";
  return fmt::format("a{}_d{}", a, d);
}

int cmd_k0(const Common& c) {
  auto cfg = resolve(c);
  const auto dir = prepare(c);
  const auto ctx = EngineContext::make(cfg.params, cfg.phase_matching, cfg.grid, cfg.with_svd);
  std::ofstream os(dir / "k0.csv");
  os << "# distill k0\n";
  for (const auto& l : describe(cfg)) os << "# " << l << "\n";
  os << "K_closed,K0,K0_svd\n";
  const std::string svd = ctx.k0_svd ? fmt::format("{:.12g}", *ctx.k0_svd) : "";
  os << fmt::format("{:.12g},{:.12g},{}\n", closed_form_schmidt(cfg.params), ctx.k0, svd);
  std::cout << fmt::format("K closed form = {:.6f}\nK0 engine     = {:.6f}\n", closed_form_schmidt(cfg.params),
                           ctx.k0);
  if (ctx.k0_svd) std::cout << fmt::format("K0 svd        = {:.6f}\n", *ctx.k0_svd);
  return 0;
}

int cmd_sweep(const Common& c) {
  auto cfg = resolve(c);
  const auto dir = prepare(c);
  const auto rows = run_sweep(cfg);
  std::ofstream os(dir / "sweep.csv");
  write_sweep_csv(os, cfg, rows, "sweep");
  return row_status(rows);
}

int cmd_heatmap(const Common& c) {
  auto cfg = resolve(c);
  cfg.scenario = Scenario::Grid2D;
  const auto dir = prepare(c);
  const auto hm = heatmap(cfg);
  write_heatmap(dir, cfg, hm);
  for (const auto& e : hm.errors) std::cerr << e << "\n";
  return hm.errors.empty() ? 0 : 2;
}

int cmd_mc_band(const Common& c, bool blank) {
  auto cfg = resolve(c);
  const auto dir = prepare(c);
  std::vector<SweepRow> rows;
  if (blank) {
    SweepRow r;
    r.a_px = r.a_um = std::numeric_limits<double>::infinity();
    try {
      const auto band = mc_band(cfg.params, cfg.phase_matching, cfg.grid, FilterSpec::blank(), cfg.mc_samples,
                                cfg.seed, cfg.threads);
      r.k = band.nominal;
      r.band_lo = band.lo;
      r.band_hi = band.hi;
    } catch (const std::exception& e) {
      r.status = std::string("error: ") + e.what();
    }
    rows.push_back(r);
  } else {
    cfg.mc_band = true;
    rows = run_sweep(cfg);
  }
  std::ofstream os(dir / "mc_band.csv");
  write_band_csv(os, cfg, rows);
  return row_status(rows);
}

int cmd_frames(const Common& c) {
  auto cfg = resolve(c);
  const auto dir = prepare(c) / "frames";
  fs::create_directories(dir);
  auto pts = cfg.points();
  pts.emplace_back(std::numeric_limits<double>::infinity(), 0.0);
  const auto errors = parallel_for(pts.size(), cfg.threads, [&](std::size_t i) {
    const auto [a, d] = pts[i];
    const auto filter = std::isinf(a) ? FilterSpec::blank() : make_filter(cfg, a, d);
    const auto frames = synth_frames(cfg, camera_marginals(cfg, filter), i);
    for (std::size_t f = 0; f < frames.nf.size(); ++f) {
      write_pgm(dir / fmt::format("nf_{}_f{}.pgm", tag(a, d), f), frames.nf[f]);
      write_pgm(dir / fmt::format("ff_{}_f{}.pgm", tag(a, d), f), frames.ff[f]);
    }
  });
  int rc = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (errors[i]) {
      std::cerr << fmt::format("{}: {}\n", tag(pts[i].first, pts[i].second), *errors[i]);
      rc = 2;
    }
  return rc;
}

int cmd_fit(const Common& c, const std::vector<std::string>& nf_paths, const std::vector<std::string>& ff_paths) {
  auto cfg = resolve(c);
  const auto dir = prepare(c);
  auto load = [](const std::vector<std::string>& paths, Plane plane) {
    std::vector<EmccdFrame> v;
    for (const auto& p : paths) {
      v.push_back(read_pgm(p));
      v.back().plane = plane;
    }
    return v;
  };
  const auto nf = load(nf_paths, Plane::NearField);
  const auto ff = load(ff_paths, Plane::FarField);
  FitOutcome fit;
  try {
    fit = fit_frames(nf, ff, cfg.camera);
  } catch (const FitError& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return 2;
  }
  std::ofstream(dir / "fit_nf.txt") << serialize(fit.nf);
  std::ofstream(dir / "fit_ff.txt") << serialize(fit.ff);
  std::ofstream os(dir / "fit.csv");
  os << "# distill fit\n";
  for (const auto& l : describe(cfg)) os << "# " << l << "\n";
  os << "K_fit,dK_fit\n" << fmt::format("{:.12g},{:.12g}\n", fit.k.k, fit.k.dk);
  std::cout << fmt::format("K_fit = {:.4f} +- {:.4f}\n", fit.k.k, fit.k.dk);
  return 0;
}

int cmd_end_to_end(const Common& c) {
  auto cfg = resolve(c);
  const auto dir = prepare(c);
  const auto rows = end_to_end(cfg);
  std::ofstream os(dir / "end_to_end.csv");
  write_sweep_csv(os, cfg, rows, "end-to-end");
  return row_status(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distill: simulate and estimate spatial entanglement distillation"};
  app.require_subcommand(1);
  Common common;

  auto* k0 = app.add_subcommand("k0", "closed-form and engine K0");
  auto* sweep = app.add_subcommand("sweep", "filter sweep (vary_a or vary_d)");
  auto* heat = app.add_subcommand("heatmap", "K/K0 and p_succ over an (a, d) grid");
  auto* band = app.add_subcommand("mc-band", "Monte Carlo band over sigma and L");
  auto* frames = app.add_subcommand("frames", "synthetic EMCCD frames as PGM");
  auto* fit = app.add_subcommand("fit", "fit PGM frames and estimate K");
  auto* e2e = app.add_subcommand("end-to-end", "engine, frames, fits and K for every sweep point");
  for (auto* s : {k0, sweep, heat, band, frames, fit, e2e}) add_common(s, common);

  bool blank = false;
  band->add_flag("--blank", blank, "band for the blank filter only");
  std::vector<std::string> nf_paths, ff_paths;
  fit->add_option("--nf", nf_paths, "near-field frames")->required()->check(CLI::ExistingFile);
  fit->add_option("--ff", ff_paths, "far-field frames")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*k0) return cmd_k0(common);
    if (*sweep) return cmd_sweep(common);
    if (*heat) return cmd_heatmap(common);
    if (*band) return cmd_mc_band(common, blank);
    if (*frames) return cmd_frames(common);
    if (*fit) return cmd_fit(common, nf_paths, ff_paths);
    if (*e2e) return cmd_end_to_end(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
