#pragma once

// Level models for optically active spin defects: blocks of spin registers
// joined only by incoherent channels, a photon collection operator, and the
// CW ODMR / ODNMR and photon-readout calculations built on top of them.
//
// Drives are treated in the rotating-wave approximation in the eigenbasis of
// the static Hamiltonian. A rotating frame is a diagonal set of frame
// frequencies F_k; every kept drive edge (a -> b) satisfies F_b - F_a = tone,
// so the rotating-frame generator is time independent. Dissipators are
// secularized against the same frame.

#include "spindyn/common.hpp"
#include "spindyn/lindblad.hpp"
#include "spindyn/spectrum.hpp"
#include "spindyn/spin_core.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spindyn::photo {

enum class SiteKind { kOrbital, kElectron, kNucleus };

struct Site {
  std::string name;
  SiteKind kind = SiteKind::kElectron;
  double spin = 0.0;  // unused for orbital sites
  int levels = 2;
  double drive_weight = 1.0;  // MW/RF coupling scale for this spin
};

struct Block {
  std::string label;
  std::vector<Site> sites;
  spin::HamiltonianMatrix hamiltonian;  // block-local product basis
  Index offset = 0;                     // first global index

  Index dimension() const { return hamiltonian.dimension(); }
  std::optional<std::size_t> site_index(std::string_view name) const;
  std::vector<int> site_dimensions() const;
  // Local index of a basis label, or -1.
  Index find(const spin::BasisLabel& label) const;
};

// A selectively addressed line: flips `site` by one quantum inside `block`
// for every basis state that satisfies the conditions on other sites.
struct TransitionLine {
  std::string label;
  std::string block;
  std::string site;
  std::vector<std::pair<std::string, double>> conditions;
  std::optional<double> lower_m;  // for spins above 1/2: flip only lower_m <-> lower_m + 1
  double rabi_Hz = 0.0;
  bool nuclear = false;
  std::vector<std::pair<Index, Index>> pairs;  // global product indices (m, m + 1)
};

struct LevelModel {
  std::vector<Block> blocks;
  std::vector<lindblad::LindbladChannel> channels;        // always on
  std::vector<lindblad::LindbladChannel> laser_channels;  // rates at unit laser power
  CMatrix collection;                                     // detected photons per second operator
  std::string bright_state_label;
  std::map<std::string, TransitionLine, std::less<>> transitions;
  Vec3 field_T = Vec3::Zero();

  Index dimension() const;
  CMatrix hamiltonian() const;
  std::vector<spin::BasisLabel> basis_labels() const;
  const Block& block(std::string_view label) const;
  const TransitionLine& transition(std::string_view label) const;

  // Embeds a block-local operator into the full model space.
  CMatrix embed(std::string_view block, const CMatrix& local) const;
  // Single-site spin operator, embedded into the full model space.
  CMatrix site_operator(std::string_view block, std::string_view site, char axis) const;

  void add_transition(TransitionLine line);
  std::vector<lindblad::LindbladChannel> active_channels(double laser_power) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Builders

inline const std::vector<std::string> kSpinPairRequiredRates = {
    "pump", "radiative", "isc_in_0", "isc_in_pm", "isc_out_0", "isc_out_pm", "hop_parallel", "hop_antiparallel"};

// Documented defaults in s^-1; see README for the channel list.
std::map<std::string, double> default_spin_pair_rates();

struct SpinPairParams {
  std::vector<spin::SpinSpecies> nuclei;                   // register shared by every block
  std::vector<spin::HyperfineTensor> defect_a_hyperfine;   // S = 1/2 electron on defect A
  std::vector<spin::HyperfineTensor> defect_b_hyperfine;   // S = 1/2 partner electron
  std::vector<spin::HyperfineTensor> triplet_hyperfine;    // S = 1 metastable state
  double gamma_a = spin::kElectronGamma;
  double gamma_b = spin::kElectronGamma;
  double gamma_triplet = spin::kElectronGamma;
  double D = 1.0e9;
  double E = 0.2e9;
  double defect_b_drive_weight = 1.0;
  std::map<std::string, double> rates;  // must contain kSpinPairRequiredRates
  double collection_efficiency = 1.0;
  Vec3 field_T = Vec3::Zero();
};

// Singlet ground-state model: pair (S=1/2 x S=1/2) (+) triplet (S=1) (+)
// optical singlet pair, each tensored with the shared nuclear register.
LevelModel build_spin_pair_model(const SpinPairParams& params);

// A single spin manifold with laser polarization into m = -S and
// state-dependent collection. Used for register-level pulse experiments.
struct RegisterParams {
  spin::SpinManifold manifold;
  double pump_rate = 5.0e6;          // s^-1 at unit laser power
  double electron_t1 = 0.0;          // s, 0 disables
  double electron_t2 = 0.0;
  double nuclear_t1 = 0.0;
  double nuclear_t2 = 0.0;
  double emission_rate = 1.0e7;      // photons/s from the bright projection
  double dark_weight = 0.85;         // relative emission of the other projections
  Vec3 field_T = Vec3::Zero();
};

LevelModel build_register_model(const RegisterParams& params);

// Relaxation channels for one spin site: S+ and S- at 1/(2 T1) each, and
// pure dephasing 2 S_z at 1/(2 T2).
std::vector<lindblad::LindbladChannel> relaxation_channels(const LevelModel& model, std::string_view block,
                                                           std::string_view site, double t1, double t2);

// ---------------------------------------------------------------------------
// Eigenbasis and rotating frames

struct Eigenframe {
  RVector energies;                    // Hz, per block ascending
  CMatrix vectors;                     // block diagonal; column k = eigenstate k in the product basis
  std::vector<Index> product_of;       // eigen index -> assigned product index
  std::vector<Index> eigen_of;         // product index -> eigen index
  std::vector<std::size_t> block_of;   // eigen index -> block

  CMatrix to_eigen(const CMatrix& product_op) const { return vectors.adjoint() * product_op * vectors; }
  CMatrix to_product(const CMatrix& eigen_op) const { return vectors * eigen_op * vectors.adjoint(); }
};

Eigenframe eigenframe(const LevelModel& model);

struct DriveEdge {
  Index from = 0;  // eigen index
  Index to = 0;
  double frequency_Hz = 0.0;  // required F_to - F_from
  cdouble coupling;           // rotating-frame element H[to, from]
};

struct RotatingFrame {
  RVector frame_Hz;               // F_k
  std::vector<DriveEdge> edges;   // edges compatible with the frame
  std::size_t dropped = 0;        // edges closing an inconsistent cycle
  RVector offset(const Eigenframe& ef) const { return frame_Hz - ef.energies; }
};

RotatingFrame solve_frame(const Eigenframe& ef, std::span<const DriveEdge> edges);
CMatrix rotating_hamiltonian(const Eigenframe& ef, const RotatingFrame& frame);

// Splits each eigenbasis jump operator into components of equal frame
// frequency difference (within `tolerance_Hz`).
std::vector<lindblad::LindbladChannel> secularize(const Eigenframe& ef, std::span<const lindblad::LindbladChannel> channels,
                                                  const RVector& frame_Hz, double tolerance_Hz = 1.0);

CMatrix rotating_liouvillian(const LevelModel& model, const Eigenframe& ef, const RotatingFrame& frame,
                             double laser_power);

// MW edges: electron-spin drive elements with |dm_e| = 1, oriented by energy.
std::vector<DriveEdge> microwave_edges(const LevelModel& model, const Eigenframe& ef, double frequency_Hz,
                                       double amplitude_Hz, std::string_view only_block = {});
// RF edges: nuclear-spin drive elements with dm_e = 0, |dm_n| = 1, oriented by energy.
std::vector<DriveEdge> radiofrequency_edges(const LevelModel& model, const Eigenframe& ef, double frequency_Hz,
                                            double amplitude_Hz);
// Selective line edges at drive frequency `nominal + detuning`.
std::vector<DriveEdge> line_edges(const LevelModel& model, const Eigenframe& ef, const TransitionLine& line,
                                  double rabi_Hz, double phase_rad, double detuning_Hz);
double line_frequency(const Eigenframe& ef, const TransitionLine& line);

// ---------------------------------------------------------------------------
// Spectra and photon signals

using spindyn::SpectrumResult;

struct CwOptions {
  double laser_power = 1.0;
  std::string only_block;  // restrict the MW drive to one block when set
  int workers = 0;         // 0: SPINDYN_WORKERS or hardware concurrency
};

SpectrumResult cw_odmr(const LevelModel& model, std::span<const double> mw_frequencies, double mw_amplitude_Hz,
                       const CwOptions& options = {});

// Steady-state populations (product basis diagonal) under a CW drive.
lindblad::DensityMatrix cw_steady_state(const LevelModel& model, double mw_frequency_Hz, double mw_amplitude_Hz,
                                        const CwOptions& options = {});

struct OdnmrOptions {
  double laser_power = 1.0;
  std::optional<double> mw_amplitude_Hz;  // defaults to the line's Rabi frequency
  int workers = 0;
};

SpectrumResult odnmr_spectrum(const LevelModel& model, std::span<const double> rf_frequencies, double rf_amplitude_Hz,
                              std::string_view mw_transition, const OdnmrOptions& options = {});

// Expected detected photons while the laser is on for `duration`, starting
// from `rho` (model product basis).
double pl_readout(const lindblad::DensityMatrix& rho, const LevelModel& model, double duration, double laser_power = 1.0);

// Rescales the collection operator so that `rho` yields `target_photons`.
LevelModel calibrate_collection(const LevelModel& model, const lindblad::DensityMatrix& rho, double duration,
                                double target_photons, double laser_power = 1.0);

// Gaussian FWHM of an S = 1/2 line from the second moment of secular bath
// couplings: sigma^2 = sum_i A_i^2 I_i (I_i + 1) / 3.
struct BathNucleus {
  spin::SpinSpecies species;
  double a_zz_Hz = 0.0;
};
double bath_linewidth_fwhm(std::span<const BathNucleus> bath);

int worker_count(int requested);

}  // namespace spindyn::photo
