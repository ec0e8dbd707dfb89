#include "distill/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include <fmt/format.h>

namespace distill {

std::vector<std::optional<std::string>> parallel_for(std::size_t n, std::size_t threads,
                                                     const std::function<void(std::size_t)>& task) {
  std::vector<std::optional<std::string>> errors(n);
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  return errors;
}

FilterSpec make_filter(const SweepConfig& cfg, double a_px, double d_px) {
  return FilterSpec::double_gaussian_px(a_px, d_px, cfg.normalization, cfg.response, cfg.slm_pixel);
}

// ---------------------------------------------------------------------------
// Engine

EngineContext EngineContext::make(const PhysicalParams& params, PhaseMatchingKind kind, const GridPreset& grid,
                                  bool with_svd) {
  const Axis axis = joint_axis(params, grid.n, grid.extent_sigmas);
  const auto pm = PhaseMatchingModel::make(kind, params);
  const auto blank = build_joint_1d(params, pm, FilterSpec::blank(), axis);
  EngineContext c{params, pm, axis, blank.raw_norm_sq, 0.0, std::nullopt, nearfield_marginal(blank),
                  farfield_marginal(blank)};
  const double kx = k_axis_from_marginals(c.nf0, c.ff0);
  c.k0 = k_compose_axes(kx, kx);
  if (with_svd) {
    const double s = svd_schmidt(blank);
    c.k0_svd = s * s;
  }
  return c;
}

SchmidtReport EngineContext::evaluate(const FilterSpec& filter, bool with_svd) const {
  const auto jx = build_joint_1d(params, pm, filter, axis, FilterSpec::AxisId::X);
  const auto nfx = nearfield_marginal(jx);
  const auto ffx = farfield_marginal(jx);
  const double px = jx.raw_norm_sq / blank_norm;
  double kx = k_axis_from_marginals(nfx, ffx);
  double ky = kx, py = px;
  std::optional<double> sx, sy;
  if (with_svd) sx = sy = svd_schmidt(jx);
  if (filter.kind == FilterKind::CustomSampled) {
    const auto jy = build_joint_1d(params, pm, filter, axis, FilterSpec::AxisId::Y);
    ky = k_axis_from_marginals(nearfield_marginal(jy), farfield_marginal(jy));
    py = jy.raw_norm_sq / blank_norm;
    if (with_svd) sy = svd_schmidt(jy);
  }
  SchmidtReport r;
  r.k_estimate = k_compose_axes(kx, ky);
  r.k0 = k0;
  r.ratio = r.k_estimate / k0;
  r.p_succ = px * py;
  if (with_svd) r.k_svd = *sx * *sy;
  return r;
}

namespace {

std::string row_error(const std::string& msg) {
  std::string s = "error: " + msg;
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

SweepRow base_row(const SweepConfig& cfg, double a, double d) {
  SweepRow r;
  r.a_px = a;
  r.d_px = d;
  r.a_um = a * cfg.slm_pixel;
  r.d_um = d * cfg.slm_pixel;
  return r;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const auto ctx = EngineContext::make(cfg.params, cfg.phase_matching, cfg.grid, cfg.with_svd);
  const auto pts = cfg.points();
  std::vector<SweepRow> rows(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) rows[i] = base_row(cfg, pts[i].first, pts[i].second);
  const auto errors = parallel_for(pts.size(), cfg.threads, [&](std::size_t i) {
    const auto rep = ctx.evaluate(make_filter(cfg, pts[i].first, pts[i].second), cfg.with_svd);
    rows[i].k = rep.k_estimate;
    rows[i].k0 = rep.k0;
    rows[i].ratio = rep.ratio;
    rows[i].p_succ = rep.p_succ;
    rows[i].k_svd = rep.k_svd;
  });
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (errors[i]) rows[i].status = row_error(*errors[i]);
  if (cfg.mc_band) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!rows[i].ok()) continue;
      try {
        const auto band = mc_band(cfg.params, cfg.phase_matching, cfg.grid, make_filter(cfg, pts[i].first, pts[i].second),
                                  cfg.mc_samples, derive_seed(cfg.seed, i), cfg.threads);
        rows[i].band_lo = band.lo;
        rows[i].band_hi = band.hi;
      } catch (const std::exception& e) {
        rows[i].status = row_error(e.what());
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Monte Carlo band

McBand mc_band(const PhysicalParams& params, PhaseMatchingKind kind, const GridPreset& grid, const FilterSpec& filter,
               std::size_t n, std::uint64_t seed, std::size_t threads) {
  params.validate();
  if (n < 100) throw std::invalid_argument("mc_band needs at least 100 draws");
  const Axis axis = joint_axis(params, grid.n, grid.extent_sigmas);

  auto k_of = [&](const PhysicalParams& p) {
    const auto pm = PhaseMatchingModel::make(kind, p);
    const auto j = build_joint_1d(p, pm, filter, axis);
    const double kx = k_axis_from_marginals(nearfield_marginal(j), farfield_marginal(j));
    return kx * kx;
  };

  McBand band;
  band.nominal = k_of(params);
  band.lo = std::numeric_limits<double>::infinity();
  band.hi = -std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(derive_seed(seed, 0x6d63));
  auto draw = [&](double centre, double half) {
    if (half == 0.0) return centre;
    return std::uniform_real_distribution<double>(centre - half, centre + half)(rng);
  };
  const std::size_t cap = 10 * n;
  while (band.accepted < n && band.attempts < cap) {
    const std::size_t batch = std::min(n - band.accepted, cap - band.attempts);
    std::vector<PhysicalParams> ps(batch, params);
    for (auto& p : ps) {
      p.sigma = draw(params.sigma, params.dsigma);
      p.L = draw(params.L, params.dL);
    }
    std::vector<double> ks(batch, 0.0);
    const auto errors = parallel_for(batch, threads, [&](std::size_t i) { ks[i] = k_of(ps[i]); });
    band.attempts += batch;
    for (std::size_t i = 0; i < batch; ++i) {
      if (errors[i]) continue;
      band.lo = std::min(band.lo, ks[i]);
      band.hi = std::max(band.hi, ks[i]);
      ++band.accepted;
    }
  }
  if (band.accepted < n) {
    throw std::runtime_error(fmt::format("Monte Carlo band: only {} of {} draws succeeded in {} attempts",
                                         band.accepted, n, band.attempts));
  }
  return band;
}

// ---------------------------------------------------------------------------
// Heatmap

Heatmap heatmap(const SweepConfig& cfg) {
  cfg.validate();
  if (cfg.scenario != Scenario::Grid2D) throw ConfigError("heatmap needs scenario = grid2d");
  const auto ctx = EngineContext::make(cfg.params, cfg.phase_matching, cfg.grid, false);
  Heatmap hm;
  hm.a_px = cfg.a_values;
  hm.d_px = cfg.d_values;
  std::sort(hm.a_px.begin(), hm.a_px.end());
  std::sort(hm.d_px.begin(), hm.d_px.end());
  const std::size_t na = hm.a_px.size(), nd = hm.d_px.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  hm.ratio.assign(na, std::vector<double>(nd, nan));
  hm.p_succ.assign(na, std::vector<double>(nd, nan));
  const auto errors = parallel_for(na * nd, cfg.threads, [&](std::size_t k) {
    const std::size_t i = k / nd, j = k % nd;
    const auto rep = ctx.evaluate(make_filter(cfg, hm.a_px[i], hm.d_px[j]), false);
    hm.ratio[i][j] = rep.ratio;
    hm.p_succ[i][j] = rep.p_succ;
  });
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k]) hm.errors.push_back(fmt::format("a={} d={}: {}", hm.a_px[k / nd], hm.d_px[k % nd], *errors[k]));
  }
  const auto blank = ctx.evaluate(FilterSpec::blank(), false);
  hm.blank_ratio = blank.ratio;
  hm.blank_p_succ = blank.p_succ;
  return hm;
}

// ---------------------------------------------------------------------------
// Frames and fits

PlaneImages camera_marginals(const SweepConfig& cfg, const FilterSpec& filter) {
  const Axis axis = joint_axis(cfg.params, cfg.grid.n, cfg.grid.extent_sigmas);
  const auto pm = PhaseMatchingModel::make(cfg.phase_matching, cfg.params);
  const auto jx = build_joint_1d(cfg.params, pm, filter, axis, FilterSpec::AxisId::X);
  const auto ix = nearfield_marginal(jx);
  const auto iy = filter.kind == FilterKind::CustomSampled
                      ? nearfield_marginal(build_joint_1d(cfg.params, pm, filter, axis, FilterSpec::AxisId::Y))
                      : ix;
  const double s = cfg.camera.scale(Plane::FarField);
  const Axis out(2 * cfg.camera.n_px, 0.5 * s);
  return {nearfield_image(ix, iy), farfield_image(cfg.params, pm, filter, axis, out)};
}

FrameSet synth_frames(const SweepConfig& cfg, const PlaneImages& images, std::size_t task) {
  FrameSet out;
  for (std::size_t f = 0; f < cfg.frames; ++f) {
    const std::uint64_t stream = 2 * (task * cfg.frames + f);
    auto a = synth_frame(images.nf, cfg.camera, cfg.budget, derive_seed(cfg.seed, stream));
    auto b = synth_frame(images.ff, cfg.camera, cfg.budget, derive_seed(cfg.seed, stream + 1));
    if (cfg.artifact_amplitude > 0.0) b = add_diffraction_artifact(b, cfg.artifact_amplitude, cfg.artifact_period);
    out.nf.push_back(std::move(a));
    out.ff.push_back(std::move(b));
  }
  return out;
}

FitOutcome fit_frames(std::span<const EmccdFrame> nf_frames, std::span<const EmccdFrame> ff_frames,
                      const CameraSpec& cam, const FitOptions& opt_in) {
  FitOptions opt = opt_in;
  if (!opt.noise) opt.noise = NoiseModel{cam.em_gain, cam.read_noise, 1.0};
  const auto nf = accumulate(nf_frames, cam);
  const auto ff = accumulate(ff_frames, cam);
  FitOutcome out;
  out.nf = fit_nearfield(nf.mean, nullptr, std::nullopt, opt);
  out.ff = fit_farfield(ff.mean, nullptr, std::nullopt, opt);
  out.k = k_from_fits(out.nf, out.ff, {cam.scale(Plane::NearField), cam.scale(Plane::FarField)});
  return out;
}

std::vector<SweepRow> end_to_end(const SweepConfig& cfg) {
  cfg.validate();
  const auto ctx = EngineContext::make(cfg.params, cfg.phase_matching, cfg.grid, cfg.with_svd);
  auto pts = cfg.points();
  const std::size_t n = pts.size();
  // The last task is the blank filter; it provides K0 for the fit-based ratio.
  std::vector<SweepRow> rows(n + 1);
  for (std::size_t i = 0; i < n; ++i) rows[i] = base_row(cfg, pts[i].first, pts[i].second);
  rows[n] = base_row(cfg, std::numeric_limits<double>::infinity(), 0.0);

  const auto errors = parallel_for(n + 1, cfg.threads, [&](std::size_t i) {
    const FilterSpec filter = i < n ? make_filter(cfg, pts[i].first, pts[i].second) : FilterSpec::blank();
    const auto rep = ctx.evaluate(filter, cfg.with_svd);
    SweepRow& r = rows[i];
    r.k = rep.k_estimate;
    r.k0 = rep.k0;
    r.ratio = rep.ratio;
    r.p_succ = rep.p_succ;
    r.k_svd = rep.k_svd;
    if (!(cfg.budget > 0.0)) throw std::runtime_error("zero photon budget: frames hold no signal to fit");
    const auto img = camera_marginals(cfg, filter);
    r.k_image = k_from_marginals(img.nf, img.ff);
    const auto frames = synth_frames(cfg, img, i);
    const auto fit = fit_frames(frames.nf, frames.ff, cfg.camera);
    r.k_fit = fit.k.k;
    r.dk_fit = fit.k.dk;
  });
  for (std::size_t i = 0; i <= n; ++i)
    if (errors[i]) rows[i].status = row_error(*errors[i]);
  if (rows[n].ok() && rows[n].k_fit) {
    for (auto& r : rows) {
      if (!r.ok() || !r.k_fit) continue;
      r.k0_fit = rows[n].k_fit;
      r.ratio_fit = *r.k_fit / *rows[n].k_fit;
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.12g}", v);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void header(std::ostream& os, const SweepConfig& cfg, const std::string& title) {
  os << "# distill " << title << "\n";
  for (const auto& l : describe(cfg)) os << "# " << l << "\n";
}

}  // namespace

void write_sweep_csv(std::ostream& os, const SweepConfig& cfg, const std::vector<SweepRow>& rows,
                     const std::string& title) {
  header(os, cfg, title);
  const bool e2e = title == "end-to-end";
  os << "a_px,d_px,a_um,d_um,K,K0,ratio,p_succ,K_svd,band_lo,band_hi";
  if (e2e) os << ",K_image,K_fit,dK_fit,K0_fit,ratio_fit";
  os << ",status\n";
  for (const auto& r : rows) {
    const bool has = r.k0 > 0.0;
    os << num(r.a_px) << ',' << num(r.d_px) << ',' << num(r.a_um) << ',' << num(r.d_um) << ','
       << (has ? num(r.k) : "") << ',' << (has ? num(r.k0) : "") << ',' << (has ? num(r.ratio) : "") << ','
       << (has ? num(r.p_succ) : "") << ',' << opt(r.k_svd) << ',' << opt(r.band_lo) << ',' << opt(r.band_hi);
    if (e2e) {
      os << ',' << opt(r.k_image) << ',' << opt(r.k_fit) << ',' << opt(r.dk_fit) << ',' << opt(r.k0_fit) << ','
         << opt(r.ratio_fit);
    }
    os << ',' << r.status << '\n';
  }
}

void write_band_csv(std::ostream& os, const SweepConfig& cfg, const std::vector<SweepRow>& rows) {
  header(os, cfg, "mc-band");
  os << "a_px,d_px,K,band_lo,band_hi,half_width,status\n";
  for (const auto& r : rows) {
    const std::string hw = (r.band_lo && r.band_hi) ? num(0.5 * (*r.band_hi - *r.band_lo)) : "";
    os << num(r.a_px) << ',' << num(r.d_px) << ',' << (r.ok() ? num(r.k) : "") << ',' << opt(r.band_lo) << ','
       << opt(r.band_hi) << ',' << hw << ',' << r.status << '\n';
  }
}

std::pair<double, double> write_scaled_pgm(const std::filesystem::path& path,
                                           const std::vector<std::vector<double>>& m) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : m)
    for (double v : row)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  const std::size_t h = m.size(), w = h ? m.front().size() : 0;
  std::vector<std::uint16_t> px(w * h, 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double v = m[i][j];
      if (std::isfinite(v)) px[i * w + j] = static_cast<std::uint16_t>(std::lround((v - lo) / span * 65535.0));
    }
  write_pgm(path, w, h, px);
  return {lo, hi};
}

void write_heatmap(const std::filesystem::path& dir, const SweepConfig& cfg, const Heatmap& hm) {
  std::filesystem::create_directories(dir);
  auto matrix = [&](const std::string& name, const std::vector<std::vector<double>>& m, double blank) {
    std::ofstream os(dir / (name + ".csv"));
    header(os, cfg, "heatmap " + name);
    os << "# rows: a [SLM px]; columns: d [SLM px]; last row: blank filter (a -> inf)\n";
    os << "a_px\\d_px";
    for (double d : hm.d_px) os << ',' << num(d);
    os << '\n';
    for (std::size_t i = 0; i < hm.a_px.size(); ++i) {
      os << num(hm.a_px[i]);
      for (double v : m[i]) os << ',' << num(v);
      os << '\n';
    }
    os << "inf";
    for (std::size_t j = 0; j < hm.d_px.size(); ++j) os << ',' << num(blank);
    os << '\n';
    const auto [lo, hi] = write_scaled_pgm(dir / (name + ".pgm"), m);
    std::ofstream side(dir / (name + ".pgm.txt"));
    side << "image = " << name << ".pgm\n"
         << "rows = a_px " << num(hm.a_px.front()) << " .. " << num(hm.a_px.back()) << "\n"
         << "columns = d_px " << num(hm.d_px.front()) << " .. " << num(hm.d_px.back()) << "\n"
         << "min = " << num(lo) << "  (pixel 0)\n"
         << "max = " << num(hi) << "  (pixel 65535)\n";
  };
  matrix("ratio", hm.ratio, hm.blank_ratio);
  matrix("p_succ", hm.p_succ, hm.blank_p_succ);
}

}  // namespace distill
