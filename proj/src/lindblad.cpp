#include "spindyn/lindblad.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <vector>

namespace spindyn::lindblad {
namespace {

constexpr const char* kModule = "lindblad";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

void check_segment(const Segment& seg, Index dim, std::size_t index) {
  const std::string where = "segment " + std::to_string(index) + (seg.label.empty() ? "" : " (" + seg.label + ")");
  if (!(seg.duration > 0.0) || !std::isfinite(seg.duration)) {
    fail(ErrorKind::kSegment, where + ": duration must be positive, got " + std::to_string(seg.duration));
  }
  if (seg.hamiltonian.rows() != dim || seg.hamiltonian.cols() != dim) {
    fail(ErrorKind::kSegment, where + ": Hamiltonian dimension does not match the state");
  }
  for (const auto& c : seg.channels) {
    if (c.rate < 0.0 || !std::isfinite(c.rate)) fail(ErrorKind::kSegment, where + ": negative rate on '" + c.label + "'");
    if (c.jump.rows() != dim || c.jump.cols() != dim) {
      fail(ErrorKind::kSegment, where + ": jump operator '" + c.label + "' has the wrong dimension");
    }
  }
  if (seg.frame_offset_Hz.size() != 0 && seg.frame_offset_Hz.size() != dim) {
    fail(ErrorKind::kSegment, where + ": frame offset has the wrong length");
  }
}

bool same_generator(const Segment& a, const Segment& b) {
  if (a.duration != b.duration || a.channels.size() != b.channels.size()) return false;
  if (a.hamiltonian != b.hamiltonian) return false;
  for (std::size_t k = 0; k < a.channels.size(); ++k) {
    if (a.channels[k].rate != b.channels[k].rate || a.channels[k].jump != b.channels[k].jump) return false;
  }
  return true;
}

}  // namespace

DensityMatrix DensityMatrix::pure(const CVector& state) {
  const double norm = state.norm();
  if (norm == 0.0) fail(ErrorKind::kNumericalContract, "cannot build a density matrix from a zero vector");
  const CVector psi = state / norm;
  return DensityMatrix(psi * psi.adjoint());
}

DensityMatrix DensityMatrix::diagonal(const RVector& populations) {
  return DensityMatrix(populations.cast<cdouble>().asDiagonal().toDenseMatrix());
}

DensityMatrix DensityMatrix::maximally_mixed(Index dimension) {
  return DensityMatrix(CMatrix::Identity(dimension, dimension) / static_cast<double>(dimension));
}

double DensityMatrix::purity() const { return (entries_ * entries_).trace().real(); }

double DensityMatrix::min_eigenvalue() const {
  const CMatrix h = 0.5 * (entries_ + entries_.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double DensityMatrix::expectation(const CMatrix& op) const { return (op * entries_).trace().real(); }

DensityMatrix::Check DensityMatrix::check(double hermiticity_tol, double trace_tol, double eigen_floor) const {
  Check c;
  c.hermiticity = (entries_ - entries_.adjoint()).norm();
  c.trace_error = std::abs(entries_.trace() - cdouble(1.0, 0.0));
  c.min_eigenvalue = min_eigenvalue();
  c.ok = c.hermiticity <= hermiticity_tol && c.trace_error <= trace_tol && c.min_eigenvalue > eigen_floor;
  return c;
}

void DensityMatrix::validate() const {
  if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
    fail(ErrorKind::kNumericalContract, "density matrix must be square and non-empty");
  }
  const Check c = check();
  if (!c.ok) {
    fail(ErrorKind::kNumericalContract, "invalid density matrix: hermiticity " + std::to_string(c.hermiticity) +
                                            ", trace error " + std::to_string(c.trace_error) + ", min eigenvalue " +
                                            std::to_string(c.min_eigenvalue));
  }
}

DensityMatrix DensityMatrix::hermitized() const { return DensityMatrix(0.5 * (entries_ + entries_.adjoint())); }

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  const CMatrix d = a.entries() - b.entries();
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

CVector vectorize(const CMatrix& rho) { return Eigen::Map<const CVector>(rho.data(), rho.size()); }

CMatrix unvectorize(const CVector& v) {
  const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (n * n != v.size()) fail(ErrorKind::kNumericalContract, "vector length is not a perfect square");
  return Eigen::Map<const CMatrix>(v.data(), n, n);
}

CMatrix dissipator(Index dimension, std::span<const LindbladChannel> channels) {
  const Index n = dimension;
  CMatrix out = CMatrix::Zero(n * n, n * n);
  struct Entry {
    Index row, col;
    cdouble value;
  };
  std::vector<Entry> nz, mz;
  for (const auto& c : channels) {
    if (c.jump.rows() != n || c.jump.cols() != n) {
      fail(ErrorKind::kInvalidModel, "jump operator '" + c.label + "' has the wrong dimension");
    }
    if (c.rate < 0.0) fail(ErrorKind::kInvalidModel, "negative rate on channel '" + c.label + "'");
    if (c.rate == 0.0) continue;
    // Jump operators are mostly sparse; build the three Kronecker terms from
    // the nonzero entries only.
    nz.clear();
    mz.clear();
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (c.jump(i, j) != cdouble(0.0)) nz.push_back({i, j, c.jump(i, j)});
    if (nz.empty()) continue;
    const CMatrix ldl = c.jump.adjoint() * c.jump;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (ldl(i, j) != cdouble(0.0)) mz.push_back({i, j, ldl(i, j)});
    const double r = c.rate;
    // L rho L^+  ->  conj(L) (x) L
    for (const auto& u : nz)
      for (const auto& w : nz) out(w.row * n + u.row, w.col * n + u.col) += r * u.value * std::conj(w.value);
    // -1/2 (I (x) M + M^T (x) I)
    for (const auto& m : mz)
      for (Index b = 0; b < n; ++b) {
        out(b * n + m.row, b * n + m.col) -= 0.5 * r * m.value;
        out(m.col * n + b, m.row * n + b) -= 0.5 * r * m.value;
      }
  }
  return out;
}

CMatrix liouvillian(const CMatrix& hamiltonian, std::span<const LindbladChannel> channels) {
  const Index n = hamiltonian.rows();
  if (hamiltonian.cols() != n) fail(ErrorKind::kInvalidModel, "Hamiltonian must be square");
  const CMatrix id = CMatrix::Identity(n, n);
  CMatrix out = cdouble(0.0, -kTwoPi) * (kron(id, hamiltonian) - kron(hamiltonian.transpose(), id));
  out += dissipator(n, channels);
  return out;
}

CMatrix propagator(const CMatrix& superop, double t) {
  CMatrix p = (superop * t).exp();
  if (!p.allFinite()) fail(ErrorKind::kNumericalContract, "matrix exponential produced non-finite entries");
  return p;
}

CVector integrate_action(const CMatrix& superop, const CVector& v, double t) {
  const Index n = superop.rows();
  CMatrix augmented = CMatrix::Zero(n + 1, n + 1);
  augmented.topLeftCorner(n, n) = superop;
  augmented.topRightCorner(n, 1) = v;
  const CMatrix e = propagator(augmented, t);
  return e.topRightCorner(n, 1);
}

CMatrix rotate_frame(const CMatrix& rho, const RVector& offset_Hz, double t) {
  if (offset_Hz.size() == 0) return rho;
  CMatrix out = rho;
  for (Index l = 0; l < rho.cols(); ++l)
    for (Index k = 0; k < rho.rows(); ++k) {
      const double phase = kTwoPi * (offset_Hz[k] - offset_Hz[l]) * t;
      if (phase != 0.0) out(k, l) *= std::polar(1.0, phase);
    }
  return out;
}

Trajectory evolve(const DensityMatrix& rho0, std::span<const Segment> segments, const EvolveOptions& options) {
  rho0.validate();
  const Index dim = rho0.dimension();
  for (std::size_t k = 0; k < segments.size(); ++k) check_segment(segments[k], dim, k);

  std::vector<double> samples = options.sample_times;
  std::sort(samples.begin(), samples.end());

  Trajectory traj;
  double t = options.start_time;
  DensityMatrix rho = rho0;
  traj.times.push_back(t);
  traj.states.push_back(rho);

  // Propagators are reused across segments with identical generators.
  std::vector<std::size_t> cache_owner;
  std::vector<CMatrix> cache;
  std::vector<CMatrix> generators;
  auto sample_it = samples.begin();

  for (std::size_t k = 0; k < segments.size(); ++k) {
    const Segment& seg = segments[k];
    std::size_t slot = cache.size();
    for (std::size_t j = 0; j < cache_owner.size(); ++j) {
      if (same_generator(segments[cache_owner[j]], seg)) {
        slot = j;
        break;
      }
    }
    const bool cached = slot < cache.size();
    const CMatrix generator = cached ? generators[slot] : liouvillian(seg.hamiltonian, seg.channels);
    const double t_end = t + seg.duration;
    const double boundary_tol = 1e-12 * std::max(1.0, std::abs(t_end));

    const CVector start = vectorize(rotate_frame(rho.entries(), seg.frame_offset_Hz, t));
    while (sample_it != samples.end() && *sample_it <= t + boundary_tol) ++sample_it;
    while (sample_it != samples.end() && *sample_it < t_end - boundary_tol) {
      const double s = *sample_it;
      const CVector v = propagator(generator, s - t) * start;
      traj.times.push_back(s);
      traj.states.push_back(DensityMatrix(rotate_frame(unvectorize(v), seg.frame_offset_Hz, -s)).hermitized());
      ++sample_it;
    }

    if (!cached) {
      cache_owner.push_back(k);
      generators.push_back(generator);
      cache.push_back(propagator(generator, seg.duration));
    }
    const CVector end = cache[slot] * start;
    rho = DensityMatrix(rotate_frame(unvectorize(end), seg.frame_offset_Hz, -t_end)).hermitized();
    const double drift = std::abs(rho.trace() - cdouble(1.0, 0.0));
    if (drift > 1e-9) {
      fail(ErrorKind::kNumericalContract, "trace drifted by " + std::to_string(drift) + " in segment " + std::to_string(k));
    }
    t = t_end;
    traj.times.push_back(t);
    traj.states.push_back(rho);
  }
  return traj;
}

Index kernel_dimension(const CMatrix& superop) {
  Eigen::BDCSVD<CMatrix> svd(superop);
  const RVector& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double threshold = 1e-10 * s[0];
  Index count = 0;
  for (Index k = 0; k < s.size(); ++k)
    if (s[k] <= threshold) ++count;
  return count;
}

double steady_state_residual(const CMatrix& superop, const DensityMatrix& rho) {
  return (superop * vectorize(rho.entries())).norm();
}

namespace {

DensityMatrix normalized_state(const CVector& v) {
  const CMatrix rho = unvectorize(v);
  const cdouble tr = rho.trace();
  if (std::abs(tr) < 1e-300) fail(ErrorKind::kNumericalContract, "steady-state kernel vector is traceless");
  return DensityMatrix(rho / tr).hermitized();
}

void check_residual(const CMatrix& superop, const DensityMatrix& rho, double scale) {
  const double residual = steady_state_residual(superop, rho);
  if (residual > 1e-8 * std::max(1.0, scale)) {
    fail(ErrorKind::kNumericalContract, "steady-state residual " + std::to_string(residual) + " exceeds tolerance");
  }
}

}  // namespace

DensityMatrix steady_state(const CMatrix& superop) {
  if (superop.rows() != superop.cols() || superop.rows() == 0) fail(ErrorKind::kInvalidModel, "superoperator must be square");
  Eigen::BDCSVD<CMatrix> svd(superop, Eigen::ComputeFullV);
  const RVector& s = svd.singularValues();
  const double threshold = 1e-10 * s[0];
  Index kernel = 0;
  for (Index k = 0; k < s.size(); ++k)
    if (s[k] <= threshold) ++kernel;
  if (kernel != 1) {
    fail(ErrorKind::kAmbiguousSteadyState,
         "steady state is not unique: kernel dimension " + std::to_string(kernel));
  }
  const DensityMatrix rho = normalized_state(svd.matrixV().col(s.size() - 1));
  check_residual(superop, rho, s[0]);
  return rho;
}

DensityMatrix steady_state_lu(const CMatrix& superop) {
  const Index n2 = superop.rows();
  if (superop.cols() != n2 || n2 == 0) fail(ErrorKind::kInvalidModel, "superoperator must be square");
  const auto n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n2))));
  CMatrix a = superop;
  a.row(0).setZero();
  for (Index k = 0; k < n; ++k) a(0, k * (n + 1)) = 1.0;
  CVector rhs = CVector::Zero(n2);
  rhs[0] = 1.0;
  const CVector x = a.partialPivLu().solve(rhs);
  const double scale = superop.cwiseAbs().rowwise().sum().maxCoeff();
  if (x.allFinite()) {
    DensityMatrix rho = DensityMatrix(unvectorize(x)).hermitized();
    const double residual = steady_state_residual(superop, rho);
    // A degenerate kernel shows up as a near-singular solve with a huge kernel component.
    if (residual <= 1e-10 * std::max(1.0, scale) && rho.entries().norm() <= 1.0 + 1e-9 && rho.min_eigenvalue() > -1e-8) {
      return rho;
    }
  }
  return steady_state(superop);
}

}  // namespace spindyn::lindblad
