#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "distill/sweep.hpp"

using namespace distill;

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    out.push_back(cells);
  }
  return out;
}

SweepConfig small_sweep() {
  SweepConfig c;
  c.grid = grid_preset("default");
  c.a_values = {6, 8, 12};
  c.threads = 2;
  return c;
}

}  // namespace

TEST_CASE("parallel_for keeps failures with their task") {
  std::vector<int> seen(50, 0);
  const auto err = parallel_for(50, 4, [&](std::size_t i) {
    if (i == 13) throw std::runtime_error("thirteen");
    seen[i] = static_cast<int>(i);
  });
  CHECK(err[13] == std::optional<std::string>("thirteen"));
  CHECK(!err[12]);
  CHECK(seen[49] == 49);
}

TEST_CASE("sweep rows and CSV") {
  const auto cfg = small_sweep();
  const auto rows = run_sweep(cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.ok());
    CHECK(r.ratio == doctest::Approx(r.k / r.k0));
    CHECK(r.a_um == doctest::Approx(r.a_px * kSlmPixelUm));
  }
  std::ostringstream os;
  write_sweep_csv(os, cfg, rows, "sweep");
  const auto text = os.str();
  CHECK(text.find("# sweep.a_values = 6, 8, 12") != std::string::npos);
  const auto t = csv_rows(text);
  REQUIRE(t.size() == 4);
  CHECK(t[0][4] == "K");
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double k = std::stod(t[i][4]), k0 = std::stod(t[i][5]), ratio = std::stod(t[i][6]);
    CHECK(std::abs(ratio - k / k0) < 1e-9 * ratio);
    CHECK(t[i].back() == "ok");
  }
  std::ostringstream again;
  write_sweep_csv(again, cfg, run_sweep(cfg), "sweep");
  CHECK(again.str() == text);
}

TEST_CASE("row errors do not abort the sweep") {
  auto cfg = small_sweep();
  cfg.a_values = {0.001, 8};
  cfg.d_values = {1000};
  const auto rows = run_sweep(cfg);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].ok());
  CHECK(rows[0].status.rfind("error:", 0) == 0);
  CHECK(rows[0].status.find(',') == std::string::npos);
}

TEST_CASE("Monte Carlo band") {
  PhysicalParams p;
  p.dsigma = 0;
  p.dL = 0;
  const GridPreset g{"custom", 256, 4.0};
  const auto kind = PhaseMatchingKind::GaussianApprox;
  const auto z = mc_band(p, kind, g, FilterSpec::blank(), 100, 3, 2);
  CHECK(z.lo == z.nominal);
  CHECK(z.hi == z.nominal);

  PhysicalParams q;
  const auto b = mc_band(q, kind, g, FilterSpec::blank(), 100, 3, 2);
  CHECK(b.lo < b.nominal);
  CHECK(b.hi > b.nominal);
  CHECK(b.accepted == 100);
  const auto c = mc_band(q, kind, g, FilterSpec::blank(), 100, 3, 1);
  CHECK(c.lo == b.lo);
  CHECK(c.hi == b.hi);
  CHECK_THROWS(mc_band(q, kind, g, FilterSpec::blank(), 10, 3));
}

TEST_CASE("heatmap output") {
  auto cfg = small_sweep();
  cfg.scenario = Scenario::Grid2D;
  cfg.a_values = {6, 10};
  cfg.d_values = {0, 20};
  const auto hm = heatmap(cfg);
  CHECK(hm.errors.empty());
  CHECK(hm.blank_ratio == doctest::Approx(1.0));
  CHECK(hm.blank_p_succ == doctest::Approx(1.0));
  CHECK(hm.p_succ[0][1] < hm.p_succ[0][0]);
  const auto dir = std::filesystem::temp_directory_path() / "distill_test_heatmap";
  std::filesystem::remove_all(dir);
  write_heatmap(dir, cfg, hm);
  CHECK(std::filesystem::exists(dir / "ratio.csv"));
  CHECK(std::filesystem::exists(dir / "ratio.pgm"));
  CHECK(std::filesystem::exists(dir / "p_succ.pgm.txt"));
  const auto img = read_pgm(dir / "ratio.pgm");
  CHECK(img.n_px == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero-budget end-to-end rows fail individually") {
  auto cfg = small_sweep();
  cfg.a_values = {8};
  cfg.budget = 0.0;
  const auto rows = end_to_end(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK_FALSE(r.ok());
    CHECK(r.k > 0.0);
  }
}
