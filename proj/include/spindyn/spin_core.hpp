#pragma once

// Spin operator algebra and Hamiltonian assembly for electron/nuclear spin
// registers. All Hamiltonians are linear frequencies in Hz; the 2*pi factor
// only enters inside propagators.

#include "spindyn/common.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spindyn::spin {

// Electron gyromagnetic ratio gamma_e / 2pi for g ~= 2.0.
inline constexpr double kElectronGamma = 2.8025e10;
// Bohr magneton over Planck's constant, Hz/T; gamma_e = g * kBohrHzPerTesla.
inline constexpr double kBohrHzPerTesla = 1.39962449e10;

struct SpinSpecies {
  double spin = 0.5;                // quantum number S or I
  double gyromagnetic_ratio = 0.0;  // Hz/T
  std::string label;

  int multiplicity() const;  // 2S+1
  void validate() const;

  static SpinSpecies electron(double spin, double gamma = kElectronGamma);
};

// Tabulated nuclear isotopes: "13C", "11B", "14N", "1H", "15N", "10B".
SpinSpecies nuclear_species(std::string_view name);

struct HyperfineTensor {
  Mat3 components = Mat3::Zero();  // Hz

  // Principal values rotated by z-y-z Euler angles: R diag(p) R^T.
  static HyperfineTensor from_principal(const Vec3& principal_Hz, const Vec3& euler_rad);
  static HyperfineTensor secular(double a_zz_Hz);
  static HyperfineTensor isotropic(double a_Hz);

  double azz() const { return components(2, 2); }
  bool is_zero() const { return components.isZero(0.0); }
};

struct NuclearSpin {
  SpinSpecies species;
  HyperfineTensor hyperfine;
  std::optional<Mat3> quadrupole;  // I.Q.I in Hz, zero when absent
  std::string label;
};

// One electron spin sector with its hyperfine-coupled nuclei.
struct SpinManifold {
  SpinSpecies electron = SpinSpecies::electron(0.5);
  double D = 0.0;  // Hz
  double E = 0.0;  // Hz
  std::vector<NuclearSpin> nuclei;
  std::string label;

  Index dimension() const;
  void validate() const;
};

// General register: an optional orbital factor, any number of mutually
// uncoupled electrons, and a shared list of nuclei. Basis ordering is
// orbital slowest, then electrons, then nuclei in declaration order.
struct ElectronSite {
  SpinSpecies species = SpinSpecies::electron(0.5);
  double D = 0.0;
  double E = 0.0;
  std::vector<HyperfineTensor> hyperfine;  // one per register nucleus; missing entries are zero
  std::string label;
};

struct NuclearSite {
  SpinSpecies species;
  std::optional<Mat3> quadrupole;
  std::string label;
};

struct SpinRegister {
  int orbital_levels = 1;
  std::vector<ElectronSite> electrons;
  std::vector<NuclearSite> nuclei;
  std::string label;

  std::vector<int> site_dimensions() const;  // includes the orbital factor when > 1
  Index dimension() const;
  void validate() const;
};

SpinRegister as_register(const SpinManifold& manifold);

// One basis state: the orbital index (when present), then m for each spin.
using BasisLabel = std::vector<double>;

struct HamiltonianMatrix {
  CMatrix entries;
  std::vector<BasisLabel> basis_labels;

  Index dimension() const { return entries.rows(); }
  double hermiticity_defect() const;  // ||H - H^+||_F / ||H||_F (0 for H = 0)
  bool is_hermitian(double tolerance = 1e-9) const { return hermiticity_defect() < tolerance; }
};

struct SpinOperators {
  CMatrix x, y, z;
  CMatrix plus() const;
  CMatrix minus() const;
};

SpinOperators spin_operators(const SpinSpecies& species);
SpinOperators spin_operators(double spin);

// Kronecker product A (x) B.
CMatrix kron(const CMatrix& a, const CMatrix& b);
// Embeds a single-site operator into the tensor product of `dims`.
CMatrix embed(const CMatrix& op, std::size_t site, std::span<const int> dims);
// Product basis labels for a register.
std::vector<BasisLabel> register_basis(const SpinRegister& reg);

struct BuildOptions {
  Index max_dimension = 4096;
};

HamiltonianMatrix build_manifold_hamiltonian(const SpinManifold& manifold, const Vec3& field_T,
                                             const BuildOptions& options = {});
HamiltonianMatrix build_register_hamiltonian(const SpinRegister& reg, const Vec3& field_T,
                                             const BuildOptions& options = {});

// Block-diagonal direct sum, no coherent coupling between blocks.
HamiltonianMatrix direct_sum(std::span<const HamiltonianMatrix> blocks);
HamiltonianMatrix compose_full_hamiltonian(std::span<const SpinManifold> manifolds, const Vec3& field_T,
                                           const BuildOptions& options = {});

// Eigenpairs sorted by ascending energy; ties are broken by the ascending
// index of the basis state with the largest overlap.
struct Eigensystem {
  RVector values;
  CMatrix vectors;                  // columns
  std::vector<Index> dominant;      // argmax_b |<b|k>|^2 per eigenvector
};

Eigensystem eigensystem(const CMatrix& hermitian);

struct Stick {
  double frequency_Hz = 0.0;
  double intensity = 0.0;
};

std::vector<Stick> transitions(const HamiltonianMatrix& h, const CMatrix& drive, double threshold = 1e-12);

}  // namespace spindyn::spin
