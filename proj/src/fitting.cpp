#include "distill/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "distill/physmodel.hpp"

namespace distill {

using std::numbers::pi;

// ---------------------------------------------------------------------------
// Models

double nearfield_model(const double* p, double x, double y, double* grad) {
  double f = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double* q = p + 5 * k;
    const double alpha = q[0], dx = x - q[1], dy = y - q[2], d = q[3], e = q[4];
    const double E = std::exp(-dx * dx / (d * d) - dy * dy / (e * e));
    f += alpha * E;
    if (grad != nullptr) {
      double* g = grad + 5 * k;
      const double aE = alpha * E;
      g[0] = E;
      g[1] = aE * 2.0 * dx / (d * d);
      g[2] = aE * 2.0 * dy / (e * e);
      g[3] = aE * 2.0 * dx * dx / (d * d * d);
      g[4] = aE * 2.0 * dy * dy / (e * e * e);
    }
  }
  return f;
}

namespace {

// d sinc / du
double sinc_prime(double u) {
  if (std::abs(u) < 1e-3) return -u / 3.0 + u * u * u / 30.0;
  return (std::cos(u) - std::sin(u) / u) / u;
}

}  // namespace

double farfield_model(const double* p, double x, double y, double* grad) {
  const double a = p[0], b = p[1], c = p[2], dx = x - p[3], dy = y - p[4];
  const double r2 = dx * dx + dy * dy;
  const double u = c * r2;
  const double s = sinc(u);
  if (grad != nullptr) {
    const double t = 2.0 * b * s * sinc_prime(u);
    grad[0] = 1.0;
    grad[1] = s * s;
    grad[2] = t * r2;
    grad[3] = -t * c * 2.0 * dx;
    grad[4] = -t * c * 2.0 * dy;
  }
  return a + b * s * s;
}

namespace {

using ModelFn = double (*)(const double*, double, double, double*);
using Feasible = bool (*)(const Eigen::VectorXd&);

struct FitData {
  std::vector<double> x, y, v, w;
};

FitData make_data(const RealField2D& image, const RealField2D* weights, double offset) {
  if (weights != nullptr && (weights->nx() != image.nx() || weights->ny() != image.ny())) {
    throw std::invalid_argument("weights and image differ in shape");
  }
  FitData d;
  const auto ci = static_cast<double>(image.x_axis.center());
  const auto cj = static_cast<double>(image.y_axis.center());
  for (std::size_t i = 0; i < image.nx(); ++i) {
    for (std::size_t j = 0; j < image.ny(); ++j) {
      const double w = weights ? weights->at(i, j) : 1.0;
      if (!(w > 0.0)) continue;
      const double v = image.at(i, j);
      if (!std::isfinite(v)) throw std::invalid_argument("image contains non-finite samples");
      d.x.push_back(static_cast<double>(i) - ci);
      d.y.push_back(static_cast<double>(j) - cj);
      d.v.push_back(v - offset);
      d.w.push_back(w);
    }
  }
  if (d.v.empty()) throw std::invalid_argument("no pixels with positive weight");
  return d;
}

struct Normal {
  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  double cost = 0.0;
};

class Lm {
 public:
  Lm(ModelFn f, const FitData& d, std::size_t np, Feasible feasible, const FitOptions& opt)
      : f_(f), d_(d), np_(np), feasible_(feasible), opt_(opt) {}

  double cost(const Eigen::VectorXd& p) const {
    double c = 0.0;
    for (std::size_t k = 0; k < d_.v.size(); ++k) {
      const double r = f_(p.data(), d_.x[k], d_.y[k], nullptr) - d_.v[k];
      c += d_.w[k] * r * r;
    }
    return c;
  }

  Normal normal(const Eigen::VectorXd& p) const {
    Normal n{Eigen::MatrixXd::Zero(np_, np_), Eigen::VectorXd::Zero(np_), 0.0};
    std::vector<double> grad(np_);
    Eigen::VectorXd pp = p;
    for (std::size_t k = 0; k < d_.v.size(); ++k) {
      double m;
      if (opt_.finite_difference) {
        m = f_(p.data(), d_.x[k], d_.y[k], nullptr);
        for (std::size_t i = 0; i < np_; ++i) {
          const double h = 1e-6 * std::max(std::abs(p[i]), 1.0);
          pp[i] = p[i] + h;
          const double up = f_(pp.data(), d_.x[k], d_.y[k], nullptr);
          pp[i] = p[i] - h;
          const double dn = f_(pp.data(), d_.x[k], d_.y[k], nullptr);
          pp[i] = p[i];
          grad[i] = (up - dn) / (2.0 * h);
        }
      } else {
        m = f_(p.data(), d_.x[k], d_.y[k], grad.data());
      }
      const double w = d_.w[k];
      const double r = m - d_.v[k];
      n.cost += w * r * r;
      for (std::size_t i = 0; i < np_; ++i) {
        const double wgi = w * grad[i];
        n.g[i] += wgi * r;
        for (std::size_t j = 0; j <= i; ++j) n.A(i, j) += wgi * grad[j];
      }
    }
    n.A = n.A.selfadjointView<Eigen::Lower>();
    return n;
  }

  struct Result {
    Eigen::VectorXd p;
    double cost;
    int iterations;
    Eigen::MatrixXd cov;
    double rms;
  };

  Result run(Eigen::VectorXd p) const {
    if (!feasible_(p)) throw std::invalid_argument("initial parameters violate the model constraints");
    double total = 0.0;
    for (std::size_t k = 0; k < d_.v.size(); ++k) total += d_.w[k] * d_.v[k] * d_.v[k];
    const double exact = 1e-28 * total;

    double lambda = 1e-3;
    Normal n = normal(p);
    bool converged = n.cost <= exact;
    int it = 0;
    while (!converged && it < opt_.max_iterations) {
      ++it;
      bool accepted = false;
      while (!accepted) {
        Eigen::MatrixXd M = n.A;
        const double dmax = n.A.diagonal().maxCoeff();
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
          M(i, i) += lambda * std::max(n.A(i, i), 1e-12 * dmax);
        }
        const Eigen::VectorXd step = M.ldlt().solve(-n.g);
        const Eigen::VectorXd trial = p + step;
        double c = std::numeric_limits<double>::infinity();
        if (step.allFinite() && feasible_(trial)) c = cost(trial);
        if (c < n.cost) {
          const double rel = (n.cost - c) / n.cost;
          p = trial;
          n = normal(p);
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          converged = rel < opt_.rel_tol || n.cost <= exact;
        } else {
          lambda *= 10.0;
          if (lambda > 1e16) {
            // No downhill step at any damping: a minimum to working precision.
            accepted = true;
            converged = true;
          }
        }
      }
    }
    if (!converged) {
      throw FitError(fmt::format("fit did not converge in {} iterations (gradient norm {:.3g})",
                                 opt_.max_iterations, n.g.norm()),
                     p, n.g.norm());
    }
    const auto dof = static_cast<double>(d_.v.size()) - static_cast<double>(np_);
    // Parameter scales differ by many decades; invert the unit-diagonal form.
    const Eigen::VectorXd dinv = n.A.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd S = dinv.asDiagonal() * n.A * dinv.asDiagonal();
    Eigen::MatrixXd cov = dinv.asDiagonal() * S.completeOrthogonalDecomposition().pseudoInverse() * dinv.asDiagonal();
    cov *= n.cost / std::max(dof, 1.0);
    double wsum = 0.0;
    for (double w : d_.w) wsum += w;
    return {p, n.cost, it, cov, std::sqrt(n.cost / wsum)};
  }

 private:
  ModelFn f_;
  const FitData& d_;
  std::size_t np_;
  Feasible feasible_;
  FitOptions opt_;
};

bool nf_feasible(const Eigen::VectorXd& p) {
  for (int k = 0; k < 4; ++k) {
    if (!(p[5 * k] >= 0.0) || !(p[5 * k + 3] > 0.0) || !(p[5 * k + 4] > 0.0)) return false;
  }
  return true;
}

bool ff_feasible(const Eigen::VectorXd& p) { return p[1] > 0.0 && p[2] > 0.0; }

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter packing

Eigen::VectorXd NearFieldFit::params() const {
  Eigen::VectorXd p(kNearFieldParams);
  for (int k = 0; k < 4; ++k) {
    p.segment<5>(5 * k) << comp[k].alpha, comp[k].beta, comp[k].gamma, comp[k].delta, comp[k].epsilon;
  }
  return p;
}

NearFieldFit NearFieldFit::from_params(const Eigen::VectorXd& p) {
  NearFieldFit f;
  for (int k = 0; k < 4; ++k) f.comp[k] = {p[5 * k], p[5 * k + 1], p[5 * k + 2], p[5 * k + 3], p[5 * k + 4]};
  return f;
}

double NearFieldFit::eval(double x, double y) const {
  const Eigen::VectorXd p = params();
  return nearfield_model(p.data(), x, y, nullptr);
}

Eigen::VectorXd FarFieldFit::params() const {
  Eigen::VectorXd p(kFarFieldParams);
  p << a, b, c, x0, y0;
  return p;
}

FarFieldFit FarFieldFit::from_params(const Eigen::VectorXd& p) {
  FarFieldFit f;
  f.a = p[0];
  f.b = p[1];
  f.c = p[2];
  f.x0 = p[3];
  f.y0 = p[4];
  return f;
}

double FarFieldFit::eval(double x, double y) const {
  const Eigen::VectorXd p = params();
  return farfield_model(p.data(), x, y, nullptr);
}

// ---------------------------------------------------------------------------
// Weights and background

double border_level(const RealField2D& image) {
  constexpr std::size_t B = 8;
  const std::size_t nx = image.nx(), ny = image.ny();
  if (nx < 2 * B || ny < 2 * B) throw std::invalid_argument("image too small for a border estimate");
  auto block = [&](std::size_t i0, std::size_t j0) {
    double s = 0.0;
    for (std::size_t i = i0; i < i0 + B; ++i)
      for (std::size_t j = j0; j < j0 + B; ++j) s += image.at(i, j);
    return s / (B * B);
  };
  std::vector<double> means;
  for (std::size_t j = 0; j + B <= ny; j += B) {
    means.push_back(block(0, j));
    means.push_back(block(nx - B, j));
  }
  for (std::size_t i = B; i + 2 * B <= nx; i += B) {
    means.push_back(block(i, 0));
    means.push_back(block(i, ny - B));
  }
  return median(std::move(means));
}

RealField2D emccd_weights(const RealField2D& expected, const NoiseModel& noise) {
  RealField2D w(expected.x_axis, expected.y_axis, expected.plane);
  for (std::size_t k = 0; k < expected.values.size(); ++k) {
    const double var = 2.0 * noise.em_gain * std::max(expected.values[k], 0.0) + noise.read_noise * noise.read_noise;
    w.values[k] = 1.0 / std::max(var, noise.floor);
  }
  return w;
}

RealField2D variance_weights(const RealField2D& variance, double floor) {
  RealField2D w(variance.x_axis, variance.y_axis, variance.plane);
  for (std::size_t k = 0; k < variance.values.size(); ++k) w.values[k] = 1.0 / std::max(variance.values[k], floor);
  return w;
}

// ---------------------------------------------------------------------------
// Initializers

namespace {

// <u^2> of a 2D Gaussian e^{-u^2-v^2} restricted to its half-maximum disc.
const double kHalfMaxMoment = 1.0 - 0.5 * (1.0 + std::log(2.0));

struct Moments {
  double w = 0.0, x = 0.0, y = 0.0, xx = 0.0, yy = 0.0, peak = 0.0;
  void add(double v, double px, double py) {
    w += v;
    x += v * px;
    y += v * py;
    xx += v * px * px;
    yy += v * py * py;
    peak = std::max(peak, v);
  }
  double mx() const { return x / w; }
  double my() const { return y / w; }
  double vx() const { return std::max(xx / w - mx() * mx(), 0.25); }
  double vy() const { return std::max(yy / w - my() * my(), 0.25); }
};

}  // namespace

NearFieldFit initial_nearfield(const RealField2D& image, bool symmetric) {
  const auto ci = static_cast<double>(image.x_axis.center());
  const auto cj = static_cast<double>(image.y_axis.center());
  double peak = 0.0;
  for (double v : image.values) peak = std::max(peak, v);
  if (!(peak > 0.0)) throw std::invalid_argument("near-field image has no positive signal");
  const double thr = 0.5 * peak;

  Moments all;
  for (std::size_t i = 0; i < image.nx(); ++i)
    for (std::size_t j = 0; j < image.ny(); ++j)
      if (image.at(i, j) >= thr) all.add(image.at(i, j), static_cast<double>(i) - ci, static_cast<double>(j) - cj);
  const double cx = all.mx(), cy = all.my();

  std::array<Moments, 4> q;
  for (std::size_t i = 0; i < image.nx(); ++i) {
    for (std::size_t j = 0; j < image.ny(); ++j) {
      const double v = image.at(i, j);
      if (v < thr) continue;
      const double x = static_cast<double>(i) - ci, y = static_cast<double>(j) - cj;
      const int k = (x >= cx ? 1 : 0) + (y >= cy ? 2 : 0);
      q[static_cast<std::size_t>(k)].add(v, x, y);
    }
  }
  NearFieldFit f;
  for (std::size_t k = 0; k < 4; ++k) {
    const Moments& m = q[k].w > 0.0 ? q[k] : all;
    f.comp[k].alpha = m.peak;
    f.comp[k].beta = m.mx();
    f.comp[k].gamma = m.my();
    f.comp[k].delta = std::sqrt(m.vx() / kHalfMaxMoment);
    f.comp[k].epsilon = std::sqrt(m.vy() / kHalfMaxMoment);
  }
  if (symmetric) {
    double dp = 0.0, a = 0.0, d = 0.0, e = 0.0;
    for (const auto& c : f.comp) {
      dp += 0.125 * (std::abs(c.beta - cx) + std::abs(c.gamma - cy));
      a += 0.25 * c.alpha;
      d += 0.25 * c.delta;
      e += 0.25 * c.epsilon;
    }
    for (std::size_t k = 0; k < 4; ++k) {
      f.comp[k] = {a, cx + ((k & 1U) ? dp : -dp), cy + ((k & 2U) ? dp : -dp), d, e};
    }
  }
  // Overlapping seeds overshoot the peak; rescale so the tallest seed matches it.
  double model_peak = 0.0;
  for (const auto& c : f.comp) model_peak = std::max(model_peak, f.eval(c.beta, c.gamma));
  for (auto& c : f.comp) c.alpha *= peak / model_peak;
  return f;
}

FarFieldFit initial_farfield(const RealField2D& image) {
  const auto ci = static_cast<double>(image.x_axis.center());
  const auto cj = static_cast<double>(image.y_axis.center());
  FarFieldFit f;
  f.a = border_level(image);
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : image.values) peak = std::max(peak, v);
  const double thr = f.a + 0.5 * (peak - f.a);
  Moments m;
  for (std::size_t i = 0; i < image.nx(); ++i)
    for (std::size_t j = 0; j < image.ny(); ++j)
      if (image.at(i, j) >= thr) m.add(image.at(i, j) - f.a, static_cast<double>(i) - ci, static_cast<double>(j) - cj);
  if (!(m.w > 0.0)) throw std::invalid_argument("far-field image has no signal above background");
  f.x0 = m.mx();
  f.y0 = m.my();

  const auto nbins = static_cast<std::size_t>(std::min(image.nx(), image.ny()) / 2);
  std::vector<double> sum(nbins, 0.0), cnt(nbins, 0.0);
  for (std::size_t i = 0; i < image.nx(); ++i) {
    for (std::size_t j = 0; j < image.ny(); ++j) {
      const double r = std::hypot(static_cast<double>(i) - ci - f.x0, static_cast<double>(j) - cj - f.y0);
      const auto b = static_cast<std::size_t>(r);
      if (b < nbins) {
        sum[b] += image.at(i, j);
        cnt[b] += 1.0;
      }
    }
  }
  std::vector<double> prof(nbins, 0.0);
  for (std::size_t b = 0; b < nbins; ++b) prof[b] = cnt[b] > 0 ? sum[b] / cnt[b] : 0.0;
  std::vector<double> smooth(prof);
  for (std::size_t b = 1; b + 1 < nbins; ++b) smooth[b] = (prof[b - 1] + prof[b] + prof[b + 1]) / 3.0;
  double center = 0.0;
  int nc = 0;
  for (std::size_t b = 0; b < std::min<std::size_t>(2, nbins); ++b) {
    center += prof[b];
    ++nc;
  }
  center /= nc;
  f.b = std::max(center - f.a, 1e-12 * std::max(std::abs(peak), 1.0));
  double r_min = 0.0;
  for (std::size_t b = 2; b + 1 < nbins; ++b) {
    if (smooth[b] <= smooth[b - 1] && smooth[b] <= smooth[b + 1] && smooth[b] - f.a < 0.3 * f.b) {
      r_min = static_cast<double>(b) + 0.5;
      break;
    }
  }
  if (r_min == 0.0) throw std::invalid_argument("no dark ring found in the far-field image");
  f.c = pi / (r_min * r_min);
  return f;
}

// ---------------------------------------------------------------------------
// Fits

NearFieldFit fit_nearfield(const RealField2D& image, const RealField2D* weights,
                           const std::optional<NearFieldFit>& init, const FitOptions& opt) {
  const double bg = opt.subtract_background ? border_level(image) : 0.0;
  NearFieldFit start;
  if (init) {
    start = *init;
  } else {
    RealField2D sub = image;
    for (double& v : sub.values) v -= bg;
    start = initial_nearfield(sub, opt.symmetric_init);
  }
  FitData d = make_data(image, weights, bg);
  auto r = Lm(nearfield_model, d, kNearFieldParams, nf_feasible, opt).run(start.params());
  if (weights == nullptr && opt.noise) {
    NearFieldFit first = NearFieldFit::from_params(r.p);
    first.background = bg;
    const RealField2D w = emccd_weights(render(first, image.x_axis, image.plane), *opt.noise);
    d = make_data(image, &w, bg);
    r = Lm(nearfield_model, d, kNearFieldParams, nf_feasible, opt).run(r.p);
  }
  NearFieldFit f = NearFieldFit::from_params(r.p);
  f.background = bg;
  f.residual_rms = r.rms;
  f.iterations = r.iterations;
  f.covariance = r.cov;
  return f;
}

FarFieldFit fit_farfield(const RealField2D& image, const RealField2D* weights,
                         const std::optional<FarFieldFit>& init, const FitOptions& opt) {
  const FarFieldFit start = init ? *init : initial_farfield(image);
  FitData d = make_data(image, weights, 0.0);
  auto r = Lm(farfield_model, d, kFarFieldParams, ff_feasible, opt).run(start.params());
  if (weights == nullptr && opt.noise) {
    const RealField2D w = emccd_weights(render(FarFieldFit::from_params(r.p), image.x_axis, image.plane), *opt.noise);
    d = make_data(image, &w, 0.0);
    r = Lm(farfield_model, d, kFarFieldParams, ff_feasible, opt).run(r.p);
  }
  FarFieldFit f = FarFieldFit::from_params(r.p);
  f.residual_rms = r.rms;
  f.iterations = r.iterations;
  f.covariance = r.cov;
  return f;
}

RealField2D render(const NearFieldFit& fit, const Axis& axis, Plane plane) {
  RealField2D out(axis, axis, plane);
  const Eigen::VectorXd p = fit.params();
  const auto c = static_cast<double>(axis.center());
  for (std::size_t i = 0; i < axis.size(); ++i)
    for (std::size_t j = 0; j < axis.size(); ++j)
      out.at(i, j) = fit.background +
                     nearfield_model(p.data(), static_cast<double>(i) - c, static_cast<double>(j) - c, nullptr);
  return out;
}

RealField2D render(const FarFieldFit& fit, const Axis& axis, Plane plane) {
  RealField2D out(axis, axis, plane);
  const Eigen::VectorXd p = fit.params();
  const auto c = static_cast<double>(axis.center());
  for (std::size_t i = 0; i < axis.size(); ++i)
    for (std::size_t j = 0; j < axis.size(); ++j)
      out.at(i, j) = farfield_model(p.data(), static_cast<double>(i) - c, static_cast<double>(j) - c, nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// K from fitted parameters

double nearfield_integral(const NearFieldFit& fit) {
  double s = 0.0;
  for (const auto& c : fit.comp) s += c.alpha * pi * c.delta * c.epsilon;
  return s;
}

double nearfield_integral_sq(const NearFieldFit& fit) {
  // int e^{-(x-b1)^2/d1^2 - (x-b2)^2/d2^2} dx
  //   = sqrt(pi d1^2 d2^2 / (d1^2 + d2^2)) exp(-(b1-b2)^2 / (d1^2 + d2^2))
  auto overlap = [](double b1, double d1, double b2, double d2) {
    const double s = d1 * d1 + d2 * d2;
    return std::sqrt(pi * d1 * d1 * d2 * d2 / s) * std::exp(-(b1 - b2) * (b1 - b2) / s);
  };
  double s = 0.0;
  for (const auto& a : fit.comp)
    for (const auto& b : fit.comp)
      s += a.alpha * b.alpha * overlap(a.beta, a.delta, b.beta, b.delta) * overlap(a.gamma, a.epsilon, b.gamma, b.epsilon);
  return s;
}

namespace {

struct SincMoments {
  double m1;  // int_0^inf sinc^2
  double m2;  // int_0^inf sinc^4
};

SincMoments compute_sinc_moments() {
  constexpr double U = 2000.0;
  constexpr std::size_t N = 2000000;
  const double h = U / N;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    const double w = (k == 0 || k == N) ? 1.0 : ((k & 1U) ? 4.0 : 2.0);
    const double s = sinc(static_cast<double>(k) * h);
    s1 += w * s * s;
    s2 += w * s * s * s * s;
  }
  s1 *= h / 3.0;
  s2 *= h / 3.0;
  // Tails: int_U^inf sin^2/u^2 = 1/(2U) + sin(2U)/(4U^2) + ..., sin^4/u^4 averages 3/8.
  s1 += 1.0 / (2.0 * U) + std::sin(2.0 * U) / (4.0 * U * U);
  s2 += 1.0 / (8.0 * U * U * U);
  return {s1, s2};
}

const SincMoments& sinc_moments() {
  static const SincMoments m = compute_sinc_moments();
  return m;
}

double k_nf_part(const NearFieldFit& nf, double scale) {
  const double s = nearfield_integral(nf);
  const double s2 = nearfield_integral_sq(nf);
  if (!(s > 0.0) || !(s2 > 0.0)) throw std::domain_error("near-field fit has nonpositive integrals");
  return s * s / s2 * scale * scale;
}

}  // namespace

double farfield_effective_area(double c) {
  if (!(c > 0.0)) throw std::domain_error("far-field fit has nonpositive c");
  // int b sinc^2(c r^2) d^2r = b (pi/c) m1 and the square gives b^2 (pi/c) m2.
  const auto& m = sinc_moments();
  return (pi / c) * m.m1 * m.m1 / m.m2;
}

FitSchmidt k_from_fits(const NearFieldFit& nf, const FarFieldFit& ff, const CameraMaps& maps) {
  const double rq = farfield_effective_area(ff.c) * maps.ff_scale * maps.ff_scale;
  const double rx = k_nf_part(nf, maps.nf_scale);
  FitSchmidt out;
  out.k = rx * rq / (4.0 * pi * pi);

  double var = 0.0;
  if (nf.covariance.rows() == static_cast<Eigen::Index>(kNearFieldParams)) {
    const Eigen::VectorXd p = nf.params();
    Eigen::VectorXd g(kNearFieldParams);
    for (std::size_t i = 0; i < kNearFieldParams; ++i) {
      const double h = 1e-6 * std::max(std::abs(p[i]), 1.0);
      Eigen::VectorXd up = p, dn = p;
      up[i] += h;
      dn[i] -= h;
      g[i] = (k_nf_part(NearFieldFit::from_params(up), maps.nf_scale) -
              k_nf_part(NearFieldFit::from_params(dn), maps.nf_scale)) /
             (2.0 * h) * rq / (4.0 * pi * pi);
    }
    var += g.dot(nf.covariance * g);
  }
  if (ff.covariance.rows() == static_cast<Eigen::Index>(kFarFieldParams)) {
    const double dk_dc = -out.k / ff.c;
    var += dk_dc * dk_dc * ff.covariance(2, 2);
  }
  out.dk = std::sqrt(std::max(var, 0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Key-value records

namespace {

double stderr_of(const Eigen::MatrixXd& cov, Eigen::Index i) {
  if (cov.rows() <= i) return 0.0;
  return std::sqrt(std::max(cov(i, i), 0.0));
}

void line(std::ostringstream& os, const std::string& name, double v, double e) {
  os << fmt::format("{} {:.17g} {:.17g}\n", name, v, e);
}

std::map<std::string, std::pair<double, double>> parse_records(const std::string& text) {
  std::map<std::string, std::pair<double, double>> rec;
  std::istringstream is(text);
  std::string ln;
  int lineno = 0;
  while (std::getline(is, ln)) {
    ++lineno;
    if (ln.empty() || ln[0] == '#') continue;
    std::istringstream ls(ln);
    std::string name;
    double v = 0.0, e = 0.0;
    if (!(ls >> name >> v >> e)) throw std::invalid_argument(fmt::format("fit record line {} is malformed", lineno));
    rec[name] = {v, e};
  }
  return rec;
}

double need(const std::map<std::string, std::pair<double, double>>& rec, const std::string& name, double* err) {
  const auto it = rec.find(name);
  if (it == rec.end()) throw std::invalid_argument(fmt::format("fit record lacks '{}'", name));
  if (err) *err = it->second.second;
  return it->second.first;
}

const char* const kNfNames[5] = {"alpha", "beta", "gamma", "delta", "epsilon"};
const char* const kFfNames[5] = {"a", "b", "c", "x0", "y0"};

}  // namespace

std::string serialize(const NearFieldFit& fit) {
  std::ostringstream os;
  const Eigen::VectorXd p = fit.params();
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 5; ++i)
      line(os, fmt::format("{}{}", kNfNames[i], k + 1), p[5 * k + i], stderr_of(fit.covariance, 5 * k + i));
  line(os, "background", fit.background, 0.0);
  line(os, "residual_rms", fit.residual_rms, 0.0);
  line(os, "iterations", fit.iterations, 0.0);
  return os.str();
}

std::string serialize(const FarFieldFit& fit) {
  std::ostringstream os;
  const Eigen::VectorXd p = fit.params();
  for (int i = 0; i < 5; ++i) line(os, kFfNames[i], p[i], stderr_of(fit.covariance, i));
  line(os, "residual_rms", fit.residual_rms, 0.0);
  line(os, "iterations", fit.iterations, 0.0);
  return os.str();
}

NearFieldFit parse_nearfield(const std::string& text) {
  const auto rec = parse_records(text);
  Eigen::VectorXd p(kNearFieldParams), e(kNearFieldParams);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 5; ++i) p[5 * k + i] = need(rec, fmt::format("{}{}", kNfNames[i], k + 1), &e[5 * k + i]);
  NearFieldFit f = NearFieldFit::from_params(p);
  f.background = need(rec, "background", nullptr);
  f.residual_rms = need(rec, "residual_rms", nullptr);
  f.iterations = static_cast<int>(need(rec, "iterations", nullptr));
  f.covariance = e.array().square().matrix().asDiagonal();
  return f;
}

FarFieldFit parse_farfield(const std::string& text) {
  const auto rec = parse_records(text);
  Eigen::VectorXd p(kFarFieldParams), e(kFarFieldParams);
  for (int i = 0; i < 5; ++i) p[i] = need(rec, kFfNames[i], &e[i]);
  FarFieldFit f = FarFieldFit::from_params(p);
  f.residual_rms = need(rec, "residual_rms", nullptr);
  f.iterations = static_cast<int>(need(rec, "iterations", nullptr));
  f.covariance = e.array().square().matrix().asDiagonal();
  return f;
}

}  // namespace distill
