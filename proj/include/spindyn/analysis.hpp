#pragma once

// Curve fitting for Rabi / Ramsey / echo / T1 traces and the scalar metrics
// derived from them: polarization, readout efficiency, gate fidelity, DC
// sensitivity, plus stick-spectrum broadening and peak finding.

#include "spindyn/common.hpp"
#include "spindyn/spectrum.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spindyn::analysis {

struct Trace {
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::vector<double>> y_err;

  void validate() const;  // equal lengths, finite, x strictly increasing, y_err > 0
};

struct FitResult {
  std::string model_name;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;  // sqrt of the covariance diagonal
  RMatrix covariance;
  double residual_norm = 0.0;  // ||model - y|| in data units (weighted when y_err is given)
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool underdetermined = false;  // fewer than one oscillation period in the window
  bool degenerate = false;       // no information on the decay time

  double param(std::string_view name) const;
  double sigma(std::string_view name) const;
};

// sin: a sin(pi x / T_pi + b) exp(-x / T_dec) + d
// cos: a cos(omega x + phi) exp(-x / T_dec) + c
enum class SinusoidModel { kSin, kCos };

FitResult fit_damped_sinusoid(const Trace& trace, SinusoidModel model);
// a exp(-x / T) + c
FitResult fit_exp_decay(const Trace& trace);

// Generic damped least squares on a user model with a central-difference
// Jacobian. Parameters are clamped into [lower, upper] after every step.
struct LeastSquaresProblem {
  std::function<double(double x, std::span<const double> p)> model;
  std::vector<double> initial;
  std::vector<double> lower;  // empty: unbounded
  std::vector<double> upper;
  int max_iterations = 200;
};

struct LeastSquaresSolution {
  std::vector<double> params;
  RMatrix covariance;  // s^2 (J^T J)^-1 at the solution
  double residual_norm = 0.0;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

LeastSquaresSolution least_squares(const LeastSquaresProblem& problem, std::span<const double> x, std::span<const double> y,
                                   std::span<const double> weights = {});

// Seeded synthetic traces with additive Gaussian noise of standard deviation
// `noise_sigma` (absolute units).
Trace synthetic_trace(const std::function<double(double)>& model, std::span<const double> x, double noise_sigma,
                      std::uint64_t seed);
std::vector<double> linspace(double start, double stop, std::size_t count);

// (plus - minus) / (plus + minus)
double polarization(double rho_minus, double rho_plus);
// (1 + 2 (a0 + a1) / (a0 - a1)^2)^(-1/2); 0 when a0 == a1.
double readout_efficiency(double alpha0, double alpha1);
// 0.5 (1 + exp(-T_pi / T_rabi))
double gate_fidelity(double t_pi, double t_rabi);
// (8 pi / (3 sqrt 3)) (1 / gamma_e) (linewidth / (C sqrt(I))), in T/sqrt(Hz).
double dc_sensitivity(double linewidth_Hz, double contrast, double count_rate, double gamma_e);

// Typical sensitivity quoted alongside the formula, in T/sqrt(Hz). The formula
// evaluated at the quoted inputs gives about 2.8e-5 instead.
inline constexpr double kQuotedTypicalSensitivity = 5e-6;

enum class LineShape { kGaussian, kLorentzian };

struct StickLine {
  double frequency_Hz = 0.0;
  double intensity = 0.0;
};

// Unit-area lineshapes scaled by intensity on a uniform grid of step fwhm/20.
SpectrumResult broaden_spectrum(std::span<const StickLine> sticks, double fwhm_Hz, LineShape shape);

struct Peak {
  double position = 0.0;  // parabolic interpolation between samples
  double height = 0.0;
  std::size_t index = 0;
};

// Local maxima of y with height >= min_fraction * max(y), in ascending x.
std::vector<Peak> find_peaks(std::span<const double> x, std::span<const double> y, double min_fraction = 0.1);
// The `count` highest peaks, returned in ascending x.
std::vector<Peak> strongest_peaks(std::span<const double> x, std::span<const double> y, std::size_t count);

// Runs of peaks closer than `width` become one line at their mean position,
// e.g. a resonance split symmetrically by a strong second drive.
std::vector<Peak> merge_peaks(std::span<const Peak> peaks, double width);
// The `count` highest merged lines (peaks above 10% of the maximum), ascending in x.
std::vector<Peak> strongest_lines(std::span<const double> x, std::span<const double> y, std::size_t count,
                                  double merge_width);

// Coefficient of determination of the least-squares line through (x, y).
double linear_r_squared(std::span<const double> x, std::span<const double> y);

}  // namespace spindyn::analysis
