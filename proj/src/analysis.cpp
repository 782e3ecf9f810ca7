#include "spindyn/analysis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <random>

namespace spindyn::analysis {
namespace {

constexpr const char* kModule = "analysis";
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

double wrap_phase(double p) {
  p = std::remainder(p, kTwoPi);
  return p <= -kPi ? p + kTwoPi : p;
}

// Linear least squares y ~ sum_j c_j basis_j(x).
RVector linear_fit(const RMatrix& basis, const RVector& y) {
  return basis.colPivHouseholderQr().solve(y);
}

struct Normalized {
  RVector x, y, w;
  double xs = 1.0, ys = 1.0;
};

Normalized normalize(const Trace& t) {
  Normalized n;
  const std::size_t m = t.x.size();
  n.xs = t.x.back() > 0.0 ? t.x.back() : (t.x.back() - t.x.front());
  if (!(n.xs > 0.0)) n.xs = 1.0;
  double mean = 0.0;
  for (double v : t.y) mean += v;
  mean /= static_cast<double>(m);
  double dev = 0.0;
  for (double v : t.y) dev = std::max(dev, std::abs(v - mean));
  n.ys = std::max({dev, std::abs(mean) * 1e-12, 1e-300});
  n.x.resize(static_cast<Index>(m));
  n.y.resize(static_cast<Index>(m));
  n.w = RVector::Ones(static_cast<Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    n.x[static_cast<Index>(i)] = t.x[i] / n.xs;
    n.y[static_cast<Index>(i)] = t.y[i] / n.ys;
    if (t.y_err) n.w[static_cast<Index>(i)] = n.ys / (*t.y_err)[i];
  }
  return n;
}

bool is_constant(const Trace& t) {
  const auto [lo, hi] = std::minmax_element(t.y.begin(), t.y.end());
  const double scale = std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
  return (*hi - *lo) <= 1e-12 * scale;
}

FitResult to_result(const std::string& name, const std::vector<std::string>& names, const LeastSquaresSolution& sol,
                    const std::vector<double>& values, const std::vector<double>& jac_diag, double ys) {
  FitResult r;
  r.model_name = name;
  r.names = names;
  r.values = values;
  const Index p = static_cast<Index>(values.size());
  r.covariance = RMatrix::Zero(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) {
      const double di = jac_diag[static_cast<std::size_t>(i)];
      const double dj = jac_diag[static_cast<std::size_t>(j)];
      const double c = sol.covariance(i, j);
      r.covariance(i, j) = (std::isinf(di) || std::isinf(dj)) ? (i == j ? kInf : 0.0) : di * dj * c;
    }
  for (Index i = 0; i < p; ++i) r.sigmas.push_back(std::sqrt(std::max(0.0, r.covariance(i, i))));
  r.residual_norm = sol.residual_norm * ys;
  r.gradient_norm = sol.gradient_norm;
  r.initial_gradient_norm = sol.initial_gradient_norm;
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  return r;
}

// Periodogram peak of (y - c) in cycles per unit x, refined by a parabola
// through the neighbouring samples of the power.
double periodogram_peak(const RVector& x, const RVector& y, double c) {
  const Index n = x.size();
  const double span = x[n - 1] - x[0];
  const double f_max = 0.5 * static_cast<double>(n - 1) / span;
  const double df = 1.0 / (8.0 * span);
  std::vector<double> freqs, power;
  for (double f = 0.25 / span; f <= f_max; f += df) {
    std::complex<double> s = 0.0;
    for (Index i = 0; i < n; ++i) s += (y[i] - c) * std::polar(1.0, -kTwoPi * f * x[i]);
    freqs.push_back(f);
    power.push_back(std::norm(s));
  }
  if (freqs.empty()) return 1.0 / span;
  const auto k = static_cast<std::size_t>(std::max_element(power.begin(), power.end()) - power.begin());
  if (k == 0 || k + 1 >= power.size()) return freqs[k];
  const double a = power[k - 1], b = power[k], d = power[k + 1];
  const double denom = a - 2.0 * b + d;
  const double shift = denom != 0.0 ? 0.5 * (a - d) / denom : 0.0;
  return freqs[k] + std::clamp(shift, -0.5, 0.5) * df;
}

struct SinusoidGuess {
  double a, omega, phi, k, c;
  double cycles;
};

SinusoidGuess guess_sinusoid(const Normalized& n) {
  const Index m = n.x.size();
  SinusoidGuess g{};
  g.c = n.y.mean();
  const double f = periodogram_peak(n.x, n.y, g.c);
  g.omega = kTwoPi * f;
  g.cycles = f * (n.x[m - 1] - n.x[0]);

  auto amplitude_phase = [&](double k) {
    RMatrix basis(m, 3);
    for (Index i = 0; i < m; ++i) {
      const double e = std::exp(-k * n.x[i]);
      basis(i, 0) = e * std::cos(g.omega * n.x[i]);
      basis(i, 1) = e * std::sin(g.omega * n.x[i]);
      basis(i, 2) = 1.0;
    }
    const RVector c = linear_fit(basis, n.y);
    g.a = std::hypot(c[0], c[1]);
    g.phi = std::atan2(-c[1], c[0]);
    g.c = c[2];
  };
  amplitude_phase(0.0);

  // Log-envelope regression over one-period windows.
  const double period = kTwoPi / g.omega;
  std::vector<double> centers, logs;
  for (double start = n.x[0]; start < n.x[m - 1]; start += period) {
    double env = 0.0;
    int count = 0;
    for (Index i = 0; i < m; ++i)
      if (n.x[i] >= start && n.x[i] < start + period) {
        env = std::max(env, std::abs(n.y[i] - g.c));
        ++count;
      }
    if (count >= 2 && env > 0.0) {
      centers.push_back(start + 0.5 * period);
      logs.push_back(std::log(env));
    }
  }
  g.k = 0.0;
  if (centers.size() >= 3) {
    const double mx = std::accumulate(centers.begin(), centers.end(), 0.0) / static_cast<double>(centers.size());
    const double my = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(logs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      sxy += (centers[i] - mx) * (logs[i] - my);
      sxx += (centers[i] - mx) * (centers[i] - mx);
    }
    g.k = sxx > 0.0 ? std::max(0.0, -sxy / sxx) : 0.0;
  }
  amplitude_phase(g.k);
  return g;
}

}  // namespace

void Trace::validate() const {
  if (x.size() != y.size()) fail(ErrorKind::kDomain, "trace x and y differ in length");
  if (y_err && y_err->size() != y.size()) fail(ErrorKind::kDomain, "trace y_err length differs from y");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) fail(ErrorKind::kDomain, "trace contains non-finite values");
    if (i > 0 && !(x[i] > x[i - 1])) fail(ErrorKind::kDomain, "trace x must be strictly increasing");
    if (y_err && !((*y_err)[i] > 0.0)) fail(ErrorKind::kDomain, "trace y_err must be positive");
  }
}

double FitResult::param(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  fail(ErrorKind::kDomain, "fit has no parameter '" + std::string(name) + "'");
}

double FitResult::sigma(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return sigmas[i];
  fail(ErrorKind::kDomain, "fit has no parameter '" + std::string(name) + "'");
}

LeastSquaresSolution least_squares(const LeastSquaresProblem& problem, std::span<const double> x, std::span<const double> y,
                                   std::span<const double> weights) {
  const Index m = static_cast<Index>(x.size());
  const Index p = static_cast<Index>(problem.initial.size());
  if (static_cast<Index>(y.size()) != m || (!weights.empty() && static_cast<Index>(weights.size()) != m)) {
    fail(ErrorKind::kDomain, "least squares inputs differ in length");
  }
  if (m < p) fail(ErrorKind::kDomain, "fewer samples than parameters");

  std::vector<double> params = problem.initial;
  auto clamp = [&](std::vector<double>& q) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (!problem.lower.empty()) q[j] = std::max(q[j], problem.lower[j]);
      if (!problem.upper.empty()) q[j] = std::min(q[j], problem.upper[j]);
    }
  };
  clamp(params);

  auto residuals = [&](const std::vector<double>& q) {
    RVector r(m);
    for (Index i = 0; i < m; ++i) {
      const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
      r[i] = w * (problem.model(x[static_cast<std::size_t>(i)], q) - y[static_cast<std::size_t>(i)]);
    }
    return r;
  };
  auto jacobian = [&](const std::vector<double>& q) {
    RMatrix jac(m, p);
    std::vector<double> qp = q, qm = q;
    for (Index j = 0; j < p; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const double h = 1e-6 * std::max(1.0, std::abs(q[js]));
      qp[js] = q[js] + h;
      qm[js] = q[js] - h;
      jac.col(j) = (residuals(qp) - residuals(qm)) / (2.0 * h);
      qp[js] = qm[js] = q[js];
    }
    return jac;
  };

  RVector r = residuals(params);
  double cost = r.squaredNorm();
  RMatrix jac = jacobian(params);
  RVector g = jac.transpose() * r;
  LeastSquaresSolution sol;
  sol.initial_gradient_norm = g.norm();
  RMatrix a = jac.transpose() * jac;
  double lambda = 1e-3;
  int it = 0;
  bool converged = g.norm() <= 1e-8 * sol.initial_gradient_norm || sol.initial_gradient_norm == 0.0;
  // One damped step; false when no trial point lowers the cost.
  auto iterate = [&](bool strict) {
    ++it;
    bool improved = false;
    while (lambda < 1e20) {
      RMatrix damped = a;
      for (Index j = 0; j < p; ++j) damped(j, j) += lambda * std::max(a(j, j), 1e-12);
      const RVector step = damped.ldlt().solve(-g);
      std::vector<double> trial = params;
      for (Index j = 0; j < p; ++j) trial[static_cast<std::size_t>(j)] += step[j];
      clamp(trial);
      const RVector rt = residuals(trial);
      const double ct = rt.squaredNorm();
      if (std::isfinite(ct) && (strict ? ct < cost : ct <= cost)) {
        params = trial;
        r = rt;
        cost = ct;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        break;
      }
      lambda *= 4.0;
    }
    jac = jacobian(params);
    g = jac.transpose() * r;
    a = jac.transpose() * jac;
    return improved;
  };
  while (!converged && it < problem.max_iterations) {
    const bool improved = iterate(false);
    converged = g.norm() <= 1e-8 * sol.initial_gradient_norm;
    if (!improved) break;
  }
  // A few more steps at the solution take exact data down to rounding.
  for (int extra = 0; converged && extra < 10 && it < problem.max_iterations; ++extra)
    if (!iterate(true)) break;

  sol.params = params;
  sol.iterations = it;
  sol.converged = converged;
  sol.gradient_norm = g.norm();
  sol.residual_norm = r.norm();
  const double dof = std::max<double>(1.0, static_cast<double>(m - p));
  const double s2 = weights.empty() ? cost / dof : (m > p ? cost / dof : 1.0);
  Eigen::FullPivLU<RMatrix> lu(a);
  sol.covariance = lu.isInvertible() ? RMatrix(s2 * lu.inverse())
                                     : RMatrix(RMatrix::Constant(p, p, std::numeric_limits<double>::quiet_NaN()));
  return sol;
}

FitResult fit_damped_sinusoid(const Trace& trace, SinusoidModel which) {
  trace.validate();
  if (trace.x.size() < 8) fail(ErrorKind::kDomain, "damped sinusoid fit needs at least 8 samples");
  const bool sin_model = which == SinusoidModel::kSin;
  const std::string name = sin_model ? "damped_sin" : "damped_cos";
  const std::vector<std::string> names = sin_model ? std::vector<std::string>{"a", "T_pi", "b", "T_dec", "d"}
                                                   : std::vector<std::string>{"a", "omega", "phi", "T_dec", "c"};
  if (is_constant(trace)) {
    FitResult r;
    r.model_name = name;
    r.names = names;
    const double mean = trace.y.front();
    r.values = sin_model ? std::vector<double>{0.0, kInf, 0.0, kInf, mean} : std::vector<double>{0.0, 0.0, 0.0, kInf, mean};
    r.sigmas.assign(5, kInf);
    r.covariance = RMatrix::Constant(5, 5, kInf);
    r.converged = true;
    r.degenerate = true;
    r.underdetermined = true;
    return r;
  }
  const Normalized n = normalize(trace);
  const SinusoidGuess g = guess_sinusoid(n);

  LeastSquaresProblem prob;
  const double inf = kInf;
  if (sin_model) {
    prob.model = [](double x, std::span<const double> q) {
      return q[0] * std::sin(kPi * x / q[1] + q[2]) * std::exp(-q[3] * x) + q[4];
    };
    prob.initial = {g.a, kPi / g.omega, wrap_phase(g.phi + 0.5 * kPi), g.k, g.c};
    prob.lower = {-inf, 1e-9, -inf, 0.0, -inf};
    prob.upper = {inf, inf, inf, inf, inf};
  } else {
    prob.model = [](double x, std::span<const double> q) {
      return q[0] * std::cos(q[1] * x + q[2]) * std::exp(-q[3] * x) + q[4];
    };
    prob.initial = {g.a, g.omega, g.phi, g.k, g.c};
    prob.lower = {-inf, 0.0, -inf, 0.0, -inf};
    prob.upper = {inf, inf, inf, inf, inf};
  }
  std::vector<double> xs(n.x.data(), n.x.data() + n.x.size());
  std::vector<double> ys(n.y.data(), n.y.data() + n.y.size());
  std::vector<double> ws;
  if (trace.y_err) ws.assign(n.w.data(), n.w.data() + n.w.size());
  const auto sol = least_squares(prob, xs, ys, ws);

  auto q = sol.params;
  // Canonical sign: positive amplitude.
  if (q[0] < 0.0) {
    q[0] = -q[0];
    q[2] += kPi;
  }
  q[2] = wrap_phase(q[2]);
  const double k = q[3];
  const double t_dec = k > 0.0 ? n.xs / k : kInf;
  const double d_t = k > 0.0 ? n.xs / (k * k) : kInf;
  std::vector<double> values, diag;
  if (sin_model) {
    values = {q[0] * n.ys, q[1] * n.xs, q[2], t_dec, q[4] * n.ys};
    diag = {n.ys, n.xs, 1.0, d_t, n.ys};
  } else {
    values = {q[0] * n.ys, q[1] / n.xs, q[2], t_dec, q[4] * n.ys};
    diag = {n.ys, 1.0 / n.xs, 1.0, d_t, n.ys};
  }
  FitResult r = to_result(name, names, sol, values, diag, n.ys);
  const double omega_n = sin_model ? kPi / q[1] : q[1];
  r.underdetermined = omega_n * (n.x[n.x.size() - 1] - n.x[0]) / kTwoPi < 1.0;
  r.degenerate = !(std::abs(values[0]) > 2.0 * r.sigmas[0]);
  return r;
}

FitResult fit_exp_decay(const Trace& trace) {
  trace.validate();
  if (trace.x.size() < 5) fail(ErrorKind::kDomain, "exponential decay fit needs at least 5 samples");
  const std::vector<std::string> names = {"a", "T", "c"};
  if (is_constant(trace)) {
    FitResult r;
    r.model_name = "exp_decay";
    r.names = names;
    r.values = {0.0, kInf, trace.y.front()};
    r.sigmas.assign(3, kInf);
    r.covariance = RMatrix::Constant(3, 3, kInf);
    r.converged = true;
    r.degenerate = true;
    return r;
  }
  const Normalized n = normalize(trace);
  const Index m = n.x.size();

  // Offset from the tail, decay from a log-linear regression of the head.
  const Index tail = std::max<Index>(2, m / 5);
  double c0 = n.y.tail(tail).mean();
  const double sign = (n.y[0] - c0) >= 0.0 ? 1.0 : -1.0;
  const double head = std::abs(n.y[0] - c0);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (Index i = 0; i < m; ++i) {
    const double z = sign * (n.y[i] - c0);
    if (z <= 0.2 * head) break;
    const double lz = std::log(z);
    sx += n.x[i];
    sy += lz;
    sxx += n.x[i] * n.x[i];
    sxy += n.x[i] * lz;
    ++cnt;
  }
  double k0 = 1.0 / (n.x[m - 1] - n.x[0]);
  if (cnt >= 2) {
    const double den = cnt * sxx - sx * sx;
    if (den > 0.0) k0 = std::max(1e-3, -(cnt * sxy - sx * sy) / den);
  }
  RMatrix basis(m, 2);
  for (Index i = 0; i < m; ++i) {
    basis(i, 0) = std::exp(-k0 * n.x[i]);
    basis(i, 1) = 1.0;
  }
  const RVector lin = linear_fit(basis, n.y);
  c0 = lin[1];

  LeastSquaresProblem prob;
  prob.model = [](double x, std::span<const double> q) { return q[0] * std::exp(-q[1] * x) + q[2]; };
  prob.initial = {lin[0], k0, c0};
  prob.lower = {-kInf, 0.0, -kInf};
  prob.upper = {kInf, kInf, kInf};
  std::vector<double> xs(n.x.data(), n.x.data() + m);
  std::vector<double> ys(n.y.data(), n.y.data() + m);
  std::vector<double> ws;
  if (trace.y_err) ws.assign(n.w.data(), n.w.data() + m);
  const auto sol = least_squares(prob, xs, ys, ws);
  const auto& q = sol.params;
  const double t = q[1] > 0.0 ? n.xs / q[1] : kInf;
  const double d_t = q[1] > 0.0 ? n.xs / (q[1] * q[1]) : kInf;
  FitResult r = to_result("exp_decay", names, sol, {q[0] * n.ys, t, q[2] * n.ys}, {n.ys, d_t, n.ys}, n.ys);
  r.degenerate = !(std::abs(r.values[0]) > 2.0 * r.sigmas[0]) || std::isinf(t);
  return r;
}

Trace synthetic_trace(const std::function<double(double)>& model, std::span<const double> x, double noise_sigma,
                      std::uint64_t seed) {
  if (noise_sigma < 0.0) fail(ErrorKind::kDomain, "noise sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Trace t;
  t.x.assign(x.begin(), x.end());
  for (double v : x) t.y.push_back(model(v) + (noise_sigma > 0.0 ? noise_sigma * noise(rng) : 0.0));
  return t;
}

std::vector<double> linspace(double start, double stop, std::size_t count) {
  std::vector<double> out;
  if (count == 0) return out;
  if (count == 1) return {start};
  out.reserve(count);
  const double step = (stop - start) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(i + 1 == count ? stop : start + step * static_cast<double>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double polarization(double rho_minus, double rho_plus) {
  if (!(rho_minus >= 0.0) || !(rho_plus >= 0.0)) fail(ErrorKind::kDomain, "polarization amplitudes must be nonnegative");
  const double sum = rho_minus + rho_plus;
  if (sum == 0.0) fail(ErrorKind::kUndefinedPolarization, "polarization is undefined when both amplitudes vanish");
  return (rho_plus - rho_minus) / sum;
}

double readout_efficiency(double alpha0, double alpha1) {
  if (!(alpha0 >= 0.0) || !(alpha1 >= 0.0)) fail(ErrorKind::kDomain, "photon numbers must be nonnegative");
  const double diff = alpha0 - alpha1;
  if (diff == 0.0) return 0.0;
  return 1.0 / std::sqrt(1.0 + 2.0 * (alpha0 + alpha1) / (diff * diff));
}

double gate_fidelity(double t_pi, double t_rabi) {
  if (!(t_pi > 0.0) || !(t_rabi > 0.0)) fail(ErrorKind::kDomain, "gate fidelity needs positive times");
  return 0.5 * (1.0 + std::exp(-t_pi / t_rabi));
}

double dc_sensitivity(double linewidth_Hz, double contrast, double count_rate, double gamma_e) {
  if (!(linewidth_Hz > 0.0) || !(contrast > 0.0) || !(count_rate > 0.0) || !(gamma_e > 0.0)) {
    fail(ErrorKind::kDomain, "sensitivity inputs must be positive");
  }
  return (8.0 * kPi / (3.0 * std::sqrt(3.0))) / gamma_e * linewidth_Hz / (contrast * std::sqrt(count_rate));
}

// ---------------------------------------------------------------------------
// Spectra

SpectrumResult broaden_spectrum(std::span<const StickLine> sticks, double fwhm_Hz, LineShape shape) {
  if (!(fwhm_Hz > 0.0) || !std::isfinite(fwhm_Hz)) fail(ErrorKind::kDomain, "linewidth must be positive");
  SpectrumResult out;
  out.metadata["fwhm_Hz"] = std::to_string(fwhm_Hz);
  out.metadata["shape"] = shape == LineShape::kGaussian ? "gaussian" : "lorentzian";
  if (sticks.empty()) return out;
  double lo = sticks.front().frequency_Hz, hi = lo;
  for (const auto& s : sticks) {
    lo = std::min(lo, s.frequency_Hz);
    hi = std::max(hi, s.frequency_Hz);
  }
  // Lorentzian tails need a much wider window to keep 99.9% of the area.
  const double margin = (shape == LineShape::kGaussian ? 3.0 : 350.0) * fwhm_Hz;
  const double step = fwhm_Hz / 20.0;
  lo -= margin;
  hi += margin;
  const auto count = static_cast<std::size_t>(std::ceil((hi - lo) / step)) + 1;
  out.frequencies.resize(count);
  out.contrast.assign(count, 0.0);
  const double sigma = fwhm_Hz / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double gauss_norm = 1.0 / (sigma * std::sqrt(kTwoPi));
  const double gamma = 0.5 * fwhm_Hz;
  for (std::size_t i = 0; i < count; ++i) {
    const double f = lo + step * static_cast<double>(i);
    out.frequencies[i] = f;
    double v = 0.0;
    for (const auto& s : sticks) {
      const double d = f - s.frequency_Hz;
      v += shape == LineShape::kGaussian ? s.intensity * gauss_norm * std::exp(-0.5 * d * d / (sigma * sigma))
                                         : s.intensity * gamma / (kPi * (d * d + gamma * gamma));
    }
    out.contrast[i] = v;
  }
  return out;
}

std::vector<Peak> find_peaks(std::span<const double> x, std::span<const double> y, double min_fraction) {
  if (x.size() != y.size()) fail(ErrorKind::kDomain, "peak search arrays differ in length");
  std::vector<Peak> peaks;
  if (y.size() < 3) return peaks;
  const double top = *std::max_element(y.begin(), y.end());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
    if (y[i] < min_fraction * top) continue;
    // Vertex of the parabola through three (possibly uneven) samples.
    const double x0 = x[i - 1], x1 = x[i], x2 = x[i + 1];
    const double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
    const double d1 = (y1 - y0) / (x1 - x0);
    const double d2 = (y2 - y1) / (x2 - x1);
    const double curv = (d2 - d1) / (x2 - x0);
    double pos = x1;
    double height = y1;
    if (curv < 0.0) {
      pos = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
      pos = std::clamp(pos, x0, x2);
      height = y1 + d1 * (pos - x1) + curv * (pos - x0) * (pos - x1);
    }
    peaks.push_back({pos, height, i});
  }
  return peaks;
}

std::vector<Peak> strongest_peaks(std::span<const double> x, std::span<const double> y, std::size_t count) {
  auto peaks = find_peaks(x, y, 0.0);
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
  if (peaks.size() > count) peaks.resize(count);
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.position < b.position; });
  return peaks;
}

std::vector<Peak> merge_peaks(std::span<const Peak> peaks, double width) {
  std::vector<Peak> out;
  std::size_t first = 0;
  while (first < peaks.size()) {
    std::size_t last = first;
    while (last + 1 < peaks.size() && peaks[last + 1].position - peaks[last].position < width) ++last;
    Peak merged = peaks[first];
    double sum = 0.0;
    for (std::size_t k = first; k <= last; ++k) {
      sum += peaks[k].position;
      if (peaks[k].height > merged.height) merged = peaks[k];
    }
    merged.position = sum / static_cast<double>(last - first + 1);
    out.push_back(merged);
    first = last + 1;
  }
  return out;
}

std::vector<Peak> strongest_lines(std::span<const double> x, std::span<const double> y, std::size_t count,
                                  double merge_width) {
  const auto raw = find_peaks(x, y, 0.1);
  auto lines = merge_peaks(raw, merge_width);
  std::stable_sort(lines.begin(), lines.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
  if (lines.size() > count) lines.resize(count);
  std::sort(lines.begin(), lines.end(), [](const Peak& a, const Peak& b) { return a.position < b.position; });
  return lines;
}

double linear_r_squared(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::kDomain, "R^2 needs at least two paired samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

}  // namespace spindyn::analysis
