#include "distill/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>

namespace distill {

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::VaryA:
      return "vary_a";
    case Scenario::VaryD:
      return "vary_d";
    case Scenario::Grid2D:
      return "grid2d";
  }
  return "?";
}

GridPreset grid_preset(const std::string& name) {
  if (name == "default") return {"default", 512, 4.0};
  if (name == "fine") return {"fine", 1024, 4.0};
  throw ConfigError(fmt::format("unknown grid preset '{}' (expected default or fine)", name));
}

PhaseMatchingKind parse_phase_matching(const std::string& s) {
  if (s == "sinc") return PhaseMatchingKind::ExactSinc;
  if (s == "gauss") return PhaseMatchingKind::GaussianApprox;
  throw ConfigError(fmt::format("phase_matching must be sinc or gauss, got '{}'", s));
}

void SweepConfig::validate() const {
  try {
    params.validate();
    camera.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (a_values.empty() || d_values.empty()) throw ConfigError("a_values and d_values must be nonempty");
  for (double a : a_values)
    if (!(a > 0.0)) throw ConfigError(fmt::format("a values must be positive, got {}", a));
  for (double d : d_values)
    if (!(d >= 0.0)) throw ConfigError(fmt::format("d values must be nonnegative, got {}", d));
  if (scenario == Scenario::VaryA && d_values.size() != 1) throw ConfigError("vary_a takes exactly one d value");
  if (scenario == Scenario::VaryD && a_values.size() != 1) throw ConfigError("vary_d takes exactly one a value");
  if (!(slm_pixel > 0.0)) throw ConfigError("slm_pixel must be positive");
  if (mc_samples < 100) throw ConfigError("mc_samples must be at least 100");
  if (!(budget >= 0.0)) throw ConfigError("budget must be nonnegative");
  if (frames == 0) throw ConfigError("frames must be at least 1");
  if (!(artifact_amplitude >= 0.0) || !(artifact_period > 0.0)) throw ConfigError("invalid artifact settings");
  if (!is_power_of_two(grid.n) || grid.n < 16 || !(grid.extent_sigmas > 0.0)) throw ConfigError("invalid grid");
}

std::vector<std::pair<double, double>> SweepConfig::points() const {
  std::vector<double> a = a_values, d = d_values;
  std::sort(a.begin(), a.end());
  std::sort(d.begin(), d.end());
  std::vector<std::pair<double, double>> out;
  switch (scenario) {
    case Scenario::VaryA:
      for (double v : a) out.emplace_back(v, d.front());
      break;
    case Scenario::VaryD:
      for (double v : d) out.emplace_back(a.front(), v);
      break;
    case Scenario::Grid2D:
      for (double av : a)
        for (double dv : d) out.emplace_back(av, dv);
      break;
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError(fmt::format("'{}' is not a number", s));
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(fmt::format("'{}' is not a nonnegative integer", s));
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError(fmt::format("'{}' is not a boolean", s));
}

// Comma-separated items, each a number or an inclusive range "lo:hi" / "lo:hi:step".
void parse_range(const std::string& item, std::vector<double>& out) {
  std::vector<double> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = item.find(':', pos);
    parts.push_back(parse_double(trim(item.substr(pos, next == std::string::npos ? std::string::npos : next - pos))));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) throw ConfigError(fmt::format("bad range '{}'", item));
  const double step = parts.size() == 3 ? parts[2] : 1.0;
  if (!(step > 0.0) || parts[1] < parts[0]) throw ConfigError(fmt::format("bad range '{}'", item));
  const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / step + 1e-9)) + 1;
  if (out.size() + count > 100000) throw ConfigError("range too long");
  for (std::size_t k = 0; k < count; ++k) out.push_back(parts[0] + static_cast<double>(k) * step);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(',', pos);
    const auto item = trim(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (item.empty()) throw ConfigError(fmt::format("empty entry in list '{}'", s));
    if (item.find(':') != std::string::npos) {
      parse_range(item, out);
    } else {
      out.push_back(parse_double(item));
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt::format("{:.12g}", v[k]);
  return s;
}

using Setter = std::function<void(SweepConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"physics.sigma", [](SweepConfig& c, const std::string& v) { c.params.sigma = parse_double(v); }},
      {"physics.L", [](SweepConfig& c, const std::string& v) { c.params.L = parse_double(v); }},
      {"physics.lambda3", [](SweepConfig& c, const std::string& v) { c.params.lambda3 = parse_double(v); }},
      {"physics.dsigma", [](SweepConfig& c, const std::string& v) { c.params.dsigma = parse_double(v); }},
      {"physics.dL", [](SweepConfig& c, const std::string& v) { c.params.dL = parse_double(v); }},
      {"filter.slm_pixel", [](SweepConfig& c, const std::string& v) { c.slm_pixel = parse_double(v); }},
      {"filter.normalization",
       [](SweepConfig& c, const std::string& v) {
         if (v == "peak") c.normalization = FilterNormalization::PeakOne;
         else if (v == "raw") c.normalization = FilterNormalization::Raw;
         else throw ConfigError(fmt::format("normalization must be peak or raw, got '{}'", v));
       }},
      {"filter.response",
       [](SweepConfig& c, const std::string& v) {
         if (v == "intensity") c.response = FilterResponse::Intensity;
         else if (v == "amplitude") c.response = FilterResponse::Amplitude;
         else throw ConfigError(fmt::format("response must be intensity or amplitude, got '{}'", v));
       }},
      {"sweep.scenario",
       [](SweepConfig& c, const std::string& v) {
         if (v == "vary_a") c.scenario = Scenario::VaryA;
         else if (v == "vary_d") c.scenario = Scenario::VaryD;
         else if (v == "grid2d") c.scenario = Scenario::Grid2D;
         else throw ConfigError(fmt::format("scenario must be vary_a, vary_d or grid2d, got '{}'", v));
       }},
      {"sweep.a_values", [](SweepConfig& c, const std::string& v) { c.a_values = parse_list(v); }},
      {"sweep.d_values", [](SweepConfig& c, const std::string& v) { c.d_values = parse_list(v); }},
      {"grid.preset", [](SweepConfig& c, const std::string& v) { c.grid = grid_preset(v); }},
      {"grid.n", [](SweepConfig& c, const std::string& v) {
         c.grid.n = parse_u64(v);
         c.grid.name = "custom";
       }},
      {"grid.extent_sigmas", [](SweepConfig& c, const std::string& v) {
         c.grid.extent_sigmas = parse_double(v);
         c.grid.name = "custom";
       }},
      {"model.phase_matching", [](SweepConfig& c, const std::string& v) { c.phase_matching = parse_phase_matching(v); }},
      {"model.svd", [](SweepConfig& c, const std::string& v) { c.with_svd = parse_bool(v); }},
      {"camera.n_px", [](SweepConfig& c, const std::string& v) { c.camera.n_px = parse_u64(v); }},
      {"camera.px", [](SweepConfig& c, const std::string& v) { c.camera.px = parse_double(v); }},
      {"camera.em_gain", [](SweepConfig& c, const std::string& v) { c.camera.em_gain = parse_double(v); }},
      {"camera.read_noise", [](SweepConfig& c, const std::string& v) { c.camera.read_noise = parse_double(v); }},
      {"camera.dark", [](SweepConfig& c, const std::string& v) { c.camera.dark = parse_double(v); }},
      {"camera.magnification", [](SweepConfig& c, const std::string& v) { c.camera.magnification = parse_double(v); }},
      {"camera.focal_length", [](SweepConfig& c, const std::string& v) { c.camera.focal_length = parse_double(v); }},
      {"camera.wavelength", [](SweepConfig& c, const std::string& v) { c.camera.wavelength = parse_double(v); }},
      {"run.seed", [](SweepConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
      {"run.mc_samples", [](SweepConfig& c, const std::string& v) { c.mc_samples = parse_u64(v); }},
      {"run.mc_band", [](SweepConfig& c, const std::string& v) { c.mc_band = parse_bool(v); }},
      {"run.threads", [](SweepConfig& c, const std::string& v) { c.threads = parse_u64(v); }},
      {"run.budget", [](SweepConfig& c, const std::string& v) { c.budget = parse_double(v); }},
      {"run.frames", [](SweepConfig& c, const std::string& v) { c.frames = parse_u64(v); }},
      {"run.artifact_amplitude", [](SweepConfig& c, const std::string& v) { c.artifact_amplitude = parse_double(v); }},
      {"run.artifact_period", [](SweepConfig& c, const std::string& v) { c.artifact_period = parse_double(v); }},
  };
  return m;
}

}  // namespace

SweepConfig parse_config(std::istream& is, const std::string& source) {
  SweepConfig cfg;
  std::string section;
  std::string raw;
  int lineno = 0;
  const auto& table = setters();
  std::map<std::string, int> seen;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find_first_of("#;");
    const std::string ln = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (ln.empty()) continue;
    auto where = [&] { return fmt::format("{}:{}", source, lineno); };
    if (ln.front() == '[') {
      if (ln.back() != ']') throw ConfigError(fmt::format("{}: malformed section header", where()));
      section = trim(ln.substr(1, ln.size() - 2));
      static const char* known[] = {"physics", "filter", "sweep", "grid", "model", "camera", "run"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
        throw ConfigError(fmt::format("{}: unknown section [{}]", where(), section));
      }
      continue;
    }
    const auto eq = ln.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}: expected key = value", where()));
    if (section.empty()) throw ConfigError(fmt::format("{}: key outside any section", where()));
    const std::string key = section + "." + trim(ln.substr(0, eq));
    const std::string value = trim(ln.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(fmt::format("{}: unknown key '{}'", where(), key));
    if (seen.count(key)) throw ConfigError(fmt::format("{}: duplicate key '{}' (first at line {})", where(), key, seen[key]));
    seen[key] = lineno;
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", where(), e.what()));
    }
  }
  cfg.validate();
  return cfg;
}

SweepConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  return parse_config(is, path.string());
}

std::vector<std::string> describe(const SweepConfig& c) {
  const auto g = [](double v) { return fmt::format("{:.12g}", v); };
  std::vector<std::string> out{
      "physics.sigma = " + g(c.params.sigma),
      "physics.L = " + g(c.params.L),
      "physics.lambda3 = " + g(c.params.lambda3),
      "physics.dsigma = " + g(c.params.dsigma),
      "physics.dL = " + g(c.params.dL),
      "filter.slm_pixel = " + g(c.slm_pixel),
      std::string("filter.normalization = ") + (c.normalization == FilterNormalization::PeakOne ? "peak" : "raw"),
      std::string("filter.response = ") + (c.response == FilterResponse::Intensity ? "intensity" : "amplitude"),
      std::string("sweep.scenario = ") + to_string(c.scenario),
      "sweep.a_values = " + join(c.a_values),
      "sweep.d_values = " + join(c.d_values),
      std::string("model.phase_matching = ") + to_string(c.phase_matching),
      std::string("model.svd = ") + (c.with_svd ? "true" : "false"),
      "camera.n_px = " + std::to_string(c.camera.n_px),
      "camera.px = " + g(c.camera.px),
      "camera.em_gain = " + g(c.camera.em_gain),
      "camera.read_noise = " + g(c.camera.read_noise),
      "camera.dark = " + g(c.camera.dark),
      "camera.magnification = " + g(c.camera.magnification),
      "camera.focal_length = " + g(c.camera.focal_length),
      "camera.wavelength = " + g(c.camera.wavelength),
      "run.seed = " + std::to_string(c.seed),
      "run.mc_samples = " + std::to_string(c.mc_samples),
      std::string("run.mc_band = ") + (c.mc_band ? "true" : "false"),
      "run.budget = " + g(c.budget),
      "run.frames = " + std::to_string(c.frames),
      "run.artifact_amplitude = " + g(c.artifact_amplitude),
      "run.artifact_period = " + g(c.artifact_period),
  };
  // A named preset fully determines the grid; otherwise record its fields.
  const auto grid_at = out.begin() + 11;
  if (c.grid.name == "custom") {
    out.insert(grid_at, {"grid.n = " + std::to_string(c.grid.n), "grid.extent_sigmas = " + g(c.grid.extent_sigmas)});
  } else {
    out.insert(grid_at, "grid.preset = " + c.grid.name);
  }
  return out;
}

}  // namespace distill
