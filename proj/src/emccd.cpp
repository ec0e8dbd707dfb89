#include "distill/emccd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace distill {

void CameraSpec::validate() const {
  if (n_px < 16 || !is_power_of_two(n_px)) throw CameraError("camera side must be a power of two >= 16");
  if (!(px > 0.0)) throw CameraError("pixel pitch must be positive");
  if (!(em_gain >= 1.0)) throw CameraError("EM gain must be at least 1");
  if (!(read_noise >= 0.0) || !(dark >= 0.0)) {
    throw CameraError("camera noise parameters must be nonnegative");
  }
  if (!(magnification > 0.0) || !(focal_length > 0.0) || !(wavelength > 0.0)) {
    throw CameraError("camera optics must be positive");
  }
}

double CameraSpec::scale(Plane plane) const {
  if (plane == Plane::NearField) return px / magnification;
  return 2.0 * std::numbers::pi * px / (focal_length * wavelength);
}

Axis CameraSpec::axis(Plane plane) const { return Axis(n_px, scale(plane)); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RealField2D pixel_probabilities(const RealField2D& marginal, const CameraSpec& cam) {
  cam.validate();
  const double total = integrate(marginal);
  if (!(total > 0.0)) throw CameraError("marginal has zero integral");
  const Axis ax = cam.axis(marginal.plane);
  const double s = ax.pitch();
  const double width_px = std::sqrt(effective_area(marginal)) / s;
  if (width_px < 8.0) {
    throw CameraError(fmt::format("marginal spans {:.2f} px on the camera, need at least 8", width_px));
  }
  constexpr int kSub = 4;
  RealField2D prob(ax, ax, marginal.plane);
  double on_sensor = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    for (std::size_t j = 0; j < ax.size(); ++j) {
      double acc = 0.0;
      for (int a = 0; a < kSub; ++a) {
        const double x = ax.coord(i) + s * ((a + 0.5) / kSub - 0.5);
        for (int b = 0; b < kSub; ++b) {
          const double y = ax.coord(j) + s * ((b + 0.5) / kSub - 0.5);
          acc += sample_bilinear(marginal, x, y);
        }
      }
      const double p = acc / (kSub * kSub) * s * s / total;
      prob.at(i, j) = p;
      on_sensor += p;
    }
  }
  const double leak = 1.0 - on_sensor;
  if (leak > 0.01) {
    throw CameraError(fmt::format("{:.2f}% of the {} marginal falls off the sensor (limit 1%)", 100.0 * leak,
                                  to_string(marginal.plane)));
  }
  return prob;
}

namespace {

std::uint16_t clamp_count(double v) {
  const double r = std::round(v);
  if (!(r > 0.0)) return 0;
  if (r >= kSaturation) return kSaturation;
  return static_cast<std::uint16_t>(r);
}

}  // namespace

EmccdFrame synth_frame(const RealField2D& marginal, const CameraSpec& cam, double budget, std::uint64_t seed) {
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw CameraError("photon budget must be finite and nonnegative");
  const RealField2D prob = pixel_probabilities(marginal, cam);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::normal_distribution<double> read(0.0, 1.0);

  EmccdFrame f;
  f.n_px = cam.n_px;
  f.counts.resize(cam.n_px * cam.n_px);
  f.exposure_photons = budget;
  f.seed = seed;
  f.plane = marginal.plane;
  for (std::size_t k = 0; k < f.counts.size(); ++k) {
    const double mean = budget * prob.values[k] + cam.dark;
    double electrons = 0.0;
    if (mean > 0.0) {
      std::poisson_distribution<long long> shot(mean);
      const long long n = shot(rng);
      if (n > 0 && cam.em_gain > 0.0) {
        std::gamma_distribution<double> em(static_cast<double>(n), cam.em_gain);
        electrons = em(rng);
      }
    }
    if (cam.read_noise > 0.0) electrons += cam.read_noise * read(rng);
    f.counts[k] = clamp_count(electrons);
  }
  return f;
}

EmccdFrame add_diffraction_artifact(const EmccdFrame& frame, double amplitude, double period_px,
                                    StripeOrientation orientation) {
  if (!(amplitude >= 0.0)) throw CameraError("artifact amplitude must be nonnegative");
  if (!(period_px > 0.0)) throw CameraError("artifact period must be positive");
  EmccdFrame out = frame;
  if (amplitude == 0.0) return out;
  const double w = 2.0 * std::numbers::pi / period_px;
  for (std::size_t r = 0; r < frame.n_px; ++r) {
    for (std::size_t c = 0; c < frame.n_px; ++c) {
      const double k = static_cast<double>(orientation == StripeOrientation::Vertical ? c : r);
      const double add = 0.5 * amplitude * (1.0 + std::cos(w * k));
      out.counts[r * frame.n_px + c] = clamp_count(frame.at(r, c) + add);
    }
  }
  return out;
}

FrameStack accumulate(std::span<const EmccdFrame> frames, const CameraSpec& cam) {
  if (frames.empty()) throw CameraError("accumulate needs at least one frame");
  const auto& first = frames.front();
  for (const auto& f : frames) {
    if (f.n_px != first.n_px || f.plane != first.plane || f.counts.size() != first.counts.size()) {
      throw CameraError("accumulate: frames differ in shape or plane");
    }
  }
  if (first.n_px != cam.n_px) throw CameraError("accumulate: frames do not match the camera");
  const Axis ax = cam.axis(first.plane);
  FrameStack st{RealField2D(ax, ax, first.plane), RealField2D(ax, ax, first.plane), frames.size()};
  // Welford update per pixel.
  for (std::size_t k = 0; k < first.counts.size(); ++k) {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames) {
      const double x = f.counts[k];
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    st.mean.values[k] = mean;
    st.variance.values[k] = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  }
  return st;
}

RealField2D frame_image(const EmccdFrame& frame, const CameraSpec& cam) {
  if (frame.n_px != cam.n_px) throw CameraError("frame does not match the camera");
  const Axis ax = cam.axis(frame.plane);
  RealField2D out(ax, ax, frame.plane);
  for (std::size_t k = 0; k < frame.counts.size(); ++k) out.values[k] = frame.counts[k];
  return out;
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint16_t> samples) {
  if (samples.size() != width * height) throw CameraError("PGM sample count mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CameraError(fmt::format("cannot open {} for writing", path.string()));
  os << "P5\n" << width << ' ' << height << "\n65535\n";
  std::vector<unsigned char> buf(samples.size() * 2);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    buf[2 * k] = static_cast<unsigned char>(samples[k] >> 8);
    buf[2 * k + 1] = static_cast<unsigned char>(samples[k] & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw CameraError(fmt::format("failed writing {}", path.string()));
}

void write_pgm(const std::filesystem::path& path, const EmccdFrame& frame) {
  write_pgm(path, frame.n_px, frame.n_px, frame.counts);
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  char ch;
  while (is.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

EmccdFrame read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CameraError(fmt::format("cannot open {}", path.string()));
  if (pgm_token(is) != "P5") throw CameraError(fmt::format("{} is not a binary PGM", path.string()));
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(is));
    h = std::stoul(pgm_token(is));
    maxval = std::stoul(pgm_token(is));
  } catch (const std::exception&) {
    throw CameraError(fmt::format("{}: malformed PGM header", path.string()));
  }
  if (w != h) throw CameraError("only square frames are supported");
  if (maxval < 256 || maxval > 65535) throw CameraError("expected a 16-bit PGM");
  std::vector<unsigned char> buf(w * h * 2);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw CameraError("truncated PGM data");
  EmccdFrame f;
  f.n_px = w;
  f.counts.resize(w * h);
  for (std::size_t k = 0; k < f.counts.size(); ++k) {
    f.counts[k] = static_cast<std::uint16_t>((buf[2 * k] << 8) | buf[2 * k + 1]);
  }
  return f;
}

}  // namespace distill
