#include "spindyn/spin_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spindyn {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidSpecies: return "invalid-species";
    case ErrorKind::kInvalidModel: return "invalid-model";
    case ErrorKind::kModelTooLarge: return "model-too-large";
    case ErrorKind::kNumericalContract: return "numerical-contract";
    case ErrorKind::kSegment: return "segment";
    case ErrorKind::kAmbiguousSteadyState: return "ambiguous-steady-state";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kSyntax: return "syntax";
    case ErrorKind::kUndeclaredVariable: return "undeclared-variable";
    case ErrorKind::kDuplicateSweep: return "duplicate-sweep";
    case ErrorKind::kUnknownLabel: return "unknown-label";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kUndefinedPolarization: return "undefined-polarization";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

bool Error::is_input_error() const noexcept {
  switch (kind_) {
    case ErrorKind::kNumericalContract:
    case ErrorKind::kAmbiguousSteadyState:
      return false;
    default:
      return true;
  }
}

}  // namespace spindyn

namespace spindyn::spin {
namespace {

constexpr const char* kModule = "spin-core";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

bool is_half_integer(double s) {
  const double twice = 2.0 * s;
  return std::isfinite(s) && twice >= 1.0 - 1e-12 && std::abs(twice - std::round(twice)) < 1e-12;
}

}  // namespace

int SpinSpecies::multiplicity() const { return static_cast<int>(std::lround(2.0 * spin)) + 1; }

void SpinSpecies::validate() const {
  if (!is_half_integer(spin)) {
    fail(ErrorKind::kInvalidSpecies, "spin quantum number must be a positive multiple of 1/2, got " +
                                         std::to_string(spin) + (label.empty() ? "" : " (" + label + ")"));
  }
  if (!std::isfinite(gyromagnetic_ratio)) fail(ErrorKind::kInvalidSpecies, "non-finite gyromagnetic ratio");
}

SpinSpecies SpinSpecies::electron(double spin, double gamma) { return {spin, gamma, "e"}; }

SpinSpecies nuclear_species(std::string_view name) {
  if (name == "13C") return {0.5, 1.0705e7, "13C"};
  if (name == "11B") return {1.5, 1.3663e7, "11B"};
  if (name == "14N") return {1.0, 3.077e6, "14N"};
  if (name == "1H") return {0.5, 4.2577e7, "1H"};
  if (name == "15N") return {0.5, -4.316e6, "15N"};
  if (name == "10B") return {3.0, 4.575e6, "10B"};
  fail(ErrorKind::kInvalidSpecies, "unknown nuclear species '" + std::string(name) + "'");
}

HyperfineTensor HyperfineTensor::from_principal(const Vec3& principal_Hz, const Vec3& euler_rad) {
  const Eigen::Matrix3d rotation = (Eigen::AngleAxisd(euler_rad[0], Vec3::UnitZ()) *
                                    Eigen::AngleAxisd(euler_rad[1], Vec3::UnitY()) *
                                    Eigen::AngleAxisd(euler_rad[2], Vec3::UnitZ()))
                                       .toRotationMatrix();
  HyperfineTensor t;
  t.components = rotation * principal_Hz.asDiagonal() * rotation.transpose();
  return t;
}

HyperfineTensor HyperfineTensor::secular(double a_zz_Hz) {
  HyperfineTensor t;
  t.components(2, 2) = a_zz_Hz;
  return t;
}

HyperfineTensor HyperfineTensor::isotropic(double a_Hz) {
  HyperfineTensor t;
  t.components = Mat3::Identity() * a_Hz;
  return t;
}

Index SpinManifold::dimension() const { return as_register(*this).dimension(); }

void SpinManifold::validate() const { as_register(*this).validate(); }

std::vector<int> SpinRegister::site_dimensions() const {
  std::vector<int> dims;
  if (orbital_levels > 1) dims.push_back(orbital_levels);
  for (const auto& e : electrons) dims.push_back(e.species.multiplicity());
  for (const auto& n : nuclei) dims.push_back(n.species.multiplicity());
  return dims;
}

Index SpinRegister::dimension() const {
  Index d = 1;
  for (int k : site_dimensions()) d *= k;
  return d;
}

void SpinRegister::validate() const {
  if (orbital_levels < 1) fail(ErrorKind::kInvalidModel, "orbital level count must be positive");
  for (const auto& e : electrons) {
    e.species.validate();
    if (e.species.multiplicity() == 2 && (e.D != 0.0 || e.E != 0.0)) {
      fail(ErrorKind::kInvalidModel, "zero-field splitting must vanish for S = 1/2 (" + e.label + ")");
    }
    if (!std::isfinite(e.D) || !std::isfinite(e.E)) fail(ErrorKind::kInvalidModel, "non-finite D or E");
    if (e.hyperfine.size() > nuclei.size()) {
      fail(ErrorKind::kInvalidModel, "more hyperfine tensors than nuclei on electron '" + e.label + "'");
    }
  }
  for (const auto& n : nuclei) n.species.validate();
}

SpinRegister as_register(const SpinManifold& manifold) {
  SpinRegister reg;
  reg.label = manifold.label;
  ElectronSite e;
  e.species = manifold.electron;
  e.D = manifold.D;
  e.E = manifold.E;
  e.label = manifold.label;
  for (const auto& n : manifold.nuclei) {
    e.hyperfine.push_back(n.hyperfine);
    reg.nuclei.push_back({n.species, n.quadrupole, n.label});
  }
  reg.electrons.push_back(std::move(e));
  return reg;
}

double HamiltonianMatrix::hermiticity_defect() const {
  const double norm = entries.norm();
  if (norm == 0.0) return 0.0;
  return (entries - entries.adjoint()).norm() / norm;
}

CMatrix SpinOperators::plus() const { return x + cdouble(0, 1) * y; }
CMatrix SpinOperators::minus() const { return x - cdouble(0, 1) * y; }

SpinOperators spin_operators(double spin) {
  SpinSpecies species{spin, 0.0, ""};
  species.validate();
  const int dim = species.multiplicity();
  CMatrix plus = CMatrix::Zero(dim, dim);
  SpinOperators ops;
  ops.z = CMatrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const double m = spin - i;
    ops.z(i, i) = m;
    if (i > 0) plus(i - 1, i) = std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
  }
  const CMatrix minus = plus.adjoint();
  ops.x = 0.5 * (plus + minus);
  ops.y = cdouble(0, -0.5) * (plus - minus);
  return ops;
}

SpinOperators spin_operators(const SpinSpecies& species) {
  species.validate();
  return spin_operators(species.spin);
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CMatrix embed(const CMatrix& op, std::size_t site, std::span<const int> dims) {
  Index before = 1, after = 1;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k < site) before *= dims[k];
    if (k > site) after *= dims[k];
  }
  return kron(kron(CMatrix::Identity(before, before), op), CMatrix::Identity(after, after));
}

std::vector<BasisLabel> register_basis(const SpinRegister& reg) {
  const auto dims = reg.site_dimensions();
  std::vector<double> top;  // value of index 0 on each site
  if (reg.orbital_levels > 1) top.push_back(0.0);
  for (const auto& e : reg.electrons) top.push_back(e.species.spin);
  for (const auto& n : reg.nuclei) top.push_back(n.species.spin);
  const bool has_orbital = reg.orbital_levels > 1;

  std::vector<BasisLabel> labels;
  labels.reserve(static_cast<std::size_t>(reg.dimension()));
  std::vector<int> digits(dims.size(), 0);
  for (Index n = 0; n < reg.dimension(); ++n) {
    BasisLabel label(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
      label[k] = (has_orbital && k == 0) ? digits[k] : top[k] - digits[k];
    }
    labels.push_back(std::move(label));
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++digits[k] < dims[k]) break;
      digits[k] = 0;
    }
  }
  return labels;
}

HamiltonianMatrix build_register_hamiltonian(const SpinRegister& reg, const Vec3& field_T, const BuildOptions& options) {
  reg.validate();
  if (!field_T.allFinite()) fail(ErrorKind::kInvalidModel, "non-finite magnetic field");
  const Index dim = reg.dimension();
  if (dim > options.max_dimension) {
    fail(ErrorKind::kModelTooLarge, "register '" + reg.label + "' has dimension " + std::to_string(dim) +
                                        " above the cap " + std::to_string(options.max_dimension));
  }
  const auto dims = reg.site_dimensions();
  const std::size_t first_electron = reg.orbital_levels > 1 ? 1 : 0;
  const std::size_t first_nucleus = first_electron + reg.electrons.size();

  auto site_vector = [&](const SpinSpecies& species, std::size_t site) {
    const auto ops = spin_operators(species);
    return std::array<CMatrix, 3>{embed(ops.x, site, dims), embed(ops.y, site, dims), embed(ops.z, site, dims)};
  };

  std::vector<std::array<CMatrix, 3>> nuclear_ops;
  for (std::size_t i = 0; i < reg.nuclei.size(); ++i) {
    nuclear_ops.push_back(site_vector(reg.nuclei[i].species, first_nucleus + i));
  }

  CMatrix h = CMatrix::Zero(dim, dim);
  for (std::size_t k = 0; k < reg.electrons.size(); ++k) {
    const auto& e = reg.electrons[k];
    const auto s = site_vector(e.species, first_electron + k);
    h += e.D * s[2] * s[2] + e.E * (s[0] * s[0] - s[1] * s[1]);
    for (int a = 0; a < 3; ++a) h += e.species.gyromagnetic_ratio * field_T[a] * s[a];
    for (std::size_t i = 0; i < e.hyperfine.size(); ++i) {
      const Mat3& t = e.hyperfine[i].components;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (t(a, b) != 0.0) h += t(a, b) * s[a] * nuclear_ops[i][b];
    }
  }
  for (std::size_t i = 0; i < reg.nuclei.size(); ++i) {
    const auto& n = reg.nuclei[i];
    for (int a = 0; a < 3; ++a) h += n.species.gyromagnetic_ratio * field_T[a] * nuclear_ops[i][a];
    if (n.quadrupole) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if ((*n.quadrupole)(a, b) != 0.0) h += (*n.quadrupole)(a, b) * nuclear_ops[i][a] * nuclear_ops[i][b];
    }
  }
  return {std::move(h), register_basis(reg)};
}

HamiltonianMatrix build_manifold_hamiltonian(const SpinManifold& manifold, const Vec3& field_T,
                                             const BuildOptions& options) {
  return build_register_hamiltonian(as_register(manifold), field_T, options);
}

HamiltonianMatrix direct_sum(std::span<const HamiltonianMatrix> blocks) {
  Index dim = 0;
  for (const auto& b : blocks) dim += b.dimension();
  HamiltonianMatrix out;
  out.entries = CMatrix::Zero(dim, dim);
  Index offset = 0;
  for (const auto& b : blocks) {
    out.entries.block(offset, offset, b.dimension(), b.dimension()) = b.entries;
    out.basis_labels.insert(out.basis_labels.end(), b.basis_labels.begin(), b.basis_labels.end());
    offset += b.dimension();
  }
  return out;
}

HamiltonianMatrix compose_full_hamiltonian(std::span<const SpinManifold> manifolds, const Vec3& field_T,
                                           const BuildOptions& options) {
  if (manifolds.empty()) fail(ErrorKind::kInvalidModel, "at least one manifold is required");
  std::vector<HamiltonianMatrix> blocks;
  Index total = 0;
  for (const auto& m : manifolds) {
    blocks.push_back(build_manifold_hamiltonian(m, field_T, options));
    total += blocks.back().dimension();
  }
  if (total > options.max_dimension) {
    fail(ErrorKind::kModelTooLarge, "direct sum has dimension " + std::to_string(total) + " above the cap " +
                                        std::to_string(options.max_dimension));
  }
  return direct_sum(blocks);
}

Eigensystem eigensystem(const CMatrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(hermitian);
  if (solver.info() != Eigen::Success) {
    fail(ErrorKind::kNumericalContract, "Hermitian eigensolver did not converge");
  }
  const Index n = hermitian.rows();
  const RVector& raw_values = solver.eigenvalues();
  const CMatrix& raw_vectors = solver.eigenvectors();

  std::vector<Index> dominant(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) raw_vectors.col(k).cwiseAbs2().maxCoeff(&dominant[static_cast<std::size_t>(k)]);

  const double scale = std::max(1.0, raw_values.cwiseAbs().maxCoeff());
  const double tie = 1e-10 * scale;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  // Values are already ascending; reorder only within runs of ties.
  for (Index start = 0; start < n;) {
    Index end = start + 1;
    while (end < n && raw_values[end] - raw_values[start] <= tie) ++end;
    std::stable_sort(order.begin() + start, order.begin() + end,
                     [&](Index a, Index b) { return dominant[static_cast<std::size_t>(a)] < dominant[static_cast<std::size_t>(b)]; });
    start = end;
  }

  Eigensystem es;
  es.values.resize(n);
  es.vectors.resize(n, n);
  es.dominant.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    es.values[k] = raw_values[src];
    es.vectors.col(k) = raw_vectors.col(src);
    es.dominant[static_cast<std::size_t>(k)] = dominant[static_cast<std::size_t>(src)];
  }
  return es;
}

std::vector<Stick> transitions(const HamiltonianMatrix& h, const CMatrix& drive, double threshold) {
  if (drive.rows() != h.dimension() || drive.cols() != h.dimension()) {
    fail(ErrorKind::kInvalidModel, "drive operator dimension does not match the Hamiltonian");
  }
  if (!h.is_hermitian()) {
    fail(ErrorKind::kNumericalContract,
         "Hamiltonian is not Hermitian (relative defect " + std::to_string(h.hermiticity_defect()) + ")");
  }
  const Eigensystem es = eigensystem(h.entries);
  const CMatrix elements = es.vectors.adjoint() * drive * es.vectors;

  std::vector<Stick> raw;
  const Index n = h.dimension();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double intensity = std::norm(elements(i, j));
      if (intensity < threshold) continue;
      raw.push_back({std::abs(es.values[j] - es.values[i]), intensity});
    }
  }
  std::sort(raw.begin(), raw.end(), [](const Stick& a, const Stick& b) { return a.frequency_Hz < b.frequency_Hz; });

  std::vector<Stick> merged;
  for (std::size_t k = 0; k < raw.size();) {
    const double anchor = raw[k].frequency_Hz;
    double weight = 0.0, moment = 0.0;
    std::size_t end = k;
    while (end < raw.size() && raw[end].frequency_Hz - anchor <= 1.0) {
      weight += raw[end].intensity;
      moment += raw[end].intensity * raw[end].frequency_Hz;
      ++end;
    }
    merged.push_back({weight > 0.0 ? moment / weight : anchor, weight});
    k = end;
  }
  return merged;
}

}  // namespace spindyn::spin
