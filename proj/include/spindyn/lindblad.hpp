#pragma once

// Open-system evolution: Liouvillian construction, piecewise-constant
// propagation and steady states. Density matrices are vectorized by column
// stacking, so vec(A rho B) = (B^T (x) A) vec(rho).

#include "spindyn/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace spindyn::lindblad {

struct LindbladChannel {
  double rate = 0.0;  // s^-1
  CMatrix jump;
  std::string label;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(CMatrix entries) : entries_(std::move(entries)) {}

  static DensityMatrix pure(const CVector& state);
  static DensityMatrix diagonal(const RVector& populations);
  static DensityMatrix maximally_mixed(Index dimension);

  const CMatrix& entries() const { return entries_; }
  Index dimension() const { return entries_.rows(); }

  cdouble trace() const { return entries_.trace(); }
  double purity() const;
  double min_eigenvalue() const;
  double expectation(const CMatrix& op) const;  // Re tr(op rho)
  double population(Index k) const { return entries_(k, k).real(); }

  struct Check {
    double hermiticity = 0.0;   // ||rho - rho^+||_F
    double trace_error = 0.0;   // |tr rho - 1|
    double min_eigenvalue = 0.0;
    bool ok = false;
  };
  Check check(double hermiticity_tol = 1e-9, double trace_tol = 1e-9, double eigen_floor = -1e-8) const;
  void validate() const;

  DensityMatrix hermitized() const;

 private:
  CMatrix entries_;
};

double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

// Piecewise-constant evolution step. `frame_offset_Hz`, when non-empty, is a
// diagonal rotating-frame offset relative to the trajectory's reference frame:
// the segment is propagated in the frame rotating at reference + offset and
// the state is mapped back at the segment end using the absolute clock.
struct Segment {
  double duration = 0.0;  // s
  CMatrix hamiltonian;    // Hz
  std::vector<LindbladChannel> channels;
  RVector frame_offset_Hz;
  std::string label;
};

CVector vectorize(const CMatrix& rho);
CMatrix unvectorize(const CVector& v);

// -i 2pi [H, .] + sum_k rate_k (L . L^+ - 1/2 {L^+ L, .})
CMatrix liouvillian(const CMatrix& hamiltonian, std::span<const LindbladChannel> channels);
// Dissipative part only.
CMatrix dissipator(Index dimension, std::span<const LindbladChannel> channels);

CMatrix propagator(const CMatrix& superop, double t);
// Integral_0^t exp(L s) v ds, via the exponential of an augmented matrix.
CVector integrate_action(const CMatrix& superop, const CVector& v, double t);

struct EvolveOptions {
  std::vector<double> sample_times;  // absolute times, in addition to segment boundaries
  double start_time = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;

  const DensityMatrix& final_state() const { return states.back(); }
};

Trajectory evolve(const DensityMatrix& rho0, std::span<const Segment> segments, const EvolveOptions& options = {});

// Applies the rotating-frame conversion rho_kl -> rho_kl exp(i 2pi (f_k - f_l) t).
CMatrix rotate_frame(const CMatrix& rho, const RVector& offset_Hz, double t);

// Unique steady state from the null space of the superoperator; the kernel
// dimension is decided at singular values <= 1e-10 * sigma_max.
DensityMatrix steady_state(const CMatrix& superop);
// Same contract, solved by LU with the trace condition substituted for one
// population row. Falls back to the SVD path when the solve is not clean.
DensityMatrix steady_state_lu(const CMatrix& superop);

double steady_state_residual(const CMatrix& superop, const DensityMatrix& rho);
Index kernel_dimension(const CMatrix& superop);

}  // namespace spindyn::lindblad
