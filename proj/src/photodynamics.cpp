#include "spindyn/photodynamics.hpp"

#include "spindyn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace spindyn::photo {
namespace {

constexpr const char* kModule = "photodynamics";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

bool same_value(double a, double b) { return std::abs(a - b) < 1e-9; }

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string format_field(const Vec3& b) {
  return format_double(b[0]) + "," + format_double(b[1]) + "," + format_double(b[2]);
}

std::size_t nuclear_start(const Block& b) {
  std::size_t k = 0;
  while (k < b.sites.size() && b.sites[k].kind != SiteKind::kNucleus) ++k;
  return k;
}

Block make_block(const spin::SpinRegister& reg, const Vec3& field, std::vector<Site> sites) {
  Block b;
  b.label = reg.label;
  b.hamiltonian = spin::build_register_hamiltonian(reg, field);
  b.sites = std::move(sites);
  if (b.site_dimensions() != reg.site_dimensions()) {
    fail(ErrorKind::kInvalidModel, "site list of block '" + b.label + "' does not match its register");
  }
  return b;
}

void place_blocks(LevelModel& m) {
  Index offset = 0;
  for (auto& b : m.blocks) {
    b.offset = offset;
    offset += b.dimension();
  }
}

// Nuclear-preserving transfer: every state of `from` whose electronic labels
// equal `source` maps onto the weighted `targets` of `to` with the same
// nuclear labels.
CMatrix transfer(const LevelModel& m, std::string_view from, const spin::BasisLabel& source, std::string_view to,
                 const std::vector<std::pair<double, spin::BasisLabel>>& targets) {
  const Block& a = m.block(from);
  const Block& b = m.block(to);
  const std::size_t na = nuclear_start(a);
  const std::size_t nb = nuclear_start(b);
  CMatrix j = CMatrix::Zero(m.dimension(), m.dimension());
  for (Index s = 0; s < a.dimension(); ++s) {
    const auto& label = a.hamiltonian.basis_labels[static_cast<std::size_t>(s)];
    bool match = true;
    for (std::size_t k = 0; k < na; ++k) match = match && same_value(label[k], source[k]);
    if (!match) continue;
    for (const auto& [amp, electronic] : targets) {
      spin::BasisLabel t = electronic;
      t.insert(t.end(), label.begin() + static_cast<std::ptrdiff_t>(na), label.end());
      if (t.size() != b.sites.size() || label.size() - na != b.sites.size() - nb) {
        fail(ErrorKind::kInvalidModel, "blocks '" + a.label + "' and '" + b.label + "' do not share a nuclear register");
      }
      const Index idx = b.find(t);
      if (idx < 0) fail(ErrorKind::kInvalidModel, "transfer target missing in block '" + b.label + "'");
      j(b.offset + idx, a.offset + s) += amp;
    }
  }
  return j;
}

CMatrix local_projector(const Block& b, std::size_t site, double value) {
  CMatrix p = CMatrix::Zero(b.dimension(), b.dimension());
  for (Index s = 0; s < b.dimension(); ++s)
    if (same_value(b.hamiltonian.basis_labels[static_cast<std::size_t>(s)][site], value)) p(s, s) = 1.0;
  return p;
}

double label_rate(const std::map<std::string, double>& rates, const std::string& key) {
  const auto it = rates.find(key);
  return it == rates.end() ? 0.0 : it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Block / LevelModel

std::optional<std::size_t> Block::site_index(std::string_view name) const {
  for (std::size_t k = 0; k < sites.size(); ++k)
    if (sites[k].name == name) return k;
  return std::nullopt;
}

std::vector<int> Block::site_dimensions() const {
  std::vector<int> dims;
  for (const auto& s : sites) dims.push_back(s.levels);
  return dims;
}

Index Block::find(const spin::BasisLabel& label) const {
  const auto& labels = hamiltonian.basis_labels;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].size() != label.size()) continue;
    bool eq = true;
    for (std::size_t j = 0; j < label.size() && eq; ++j) eq = same_value(labels[k][j], label[j]);
    if (eq) return static_cast<Index>(k);
  }
  return -1;
}

Index LevelModel::dimension() const {
  Index d = 0;
  for (const auto& b : blocks) d += b.dimension();
  return d;
}

CMatrix LevelModel::hamiltonian() const {
  CMatrix h = CMatrix::Zero(dimension(), dimension());
  for (const auto& b : blocks) h.block(b.offset, b.offset, b.dimension(), b.dimension()) = b.hamiltonian.entries;
  return h;
}

std::vector<spin::BasisLabel> LevelModel::basis_labels() const {
  std::vector<spin::BasisLabel> out;
  for (const auto& b : blocks) out.insert(out.end(), b.hamiltonian.basis_labels.begin(), b.hamiltonian.basis_labels.end());
  return out;
}

const Block& LevelModel::block(std::string_view label) const {
  for (const auto& b : blocks)
    if (b.label == label) return b;
  fail(ErrorKind::kUnknownLabel, "no block named '" + std::string(label) + "'");
}

const TransitionLine& LevelModel::transition(std::string_view label) const {
  const auto it = transitions.find(label);
  if (it == transitions.end()) fail(ErrorKind::kUnknownLabel, "no transition named '" + std::string(label) + "'");
  return it->second;
}

CMatrix LevelModel::embed(std::string_view block_label, const CMatrix& local) const {
  const Block& b = block(block_label);
  if (local.rows() != b.dimension() || local.cols() != b.dimension()) {
    fail(ErrorKind::kInvalidModel, "operator dimension does not match block '" + b.label + "'");
  }
  CMatrix out = CMatrix::Zero(dimension(), dimension());
  out.block(b.offset, b.offset, b.dimension(), b.dimension()) = local;
  return out;
}

CMatrix LevelModel::site_operator(std::string_view block_label, std::string_view site, char axis) const {
  const Block& b = block(block_label);
  const auto idx = b.site_index(site);
  if (!idx) fail(ErrorKind::kUnknownLabel, "block '" + b.label + "' has no site '" + std::string(site) + "'");
  const Site& s = b.sites[*idx];
  if (s.kind == SiteKind::kOrbital) fail(ErrorKind::kInvalidModel, "orbital site '" + s.name + "' has no spin operators");
  const auto ops = spin::spin_operators(s.spin);
  CMatrix op;
  switch (axis) {
    case 'x': op = ops.x; break;
    case 'y': op = ops.y; break;
    case 'z': op = ops.z; break;
    case '+': op = ops.plus(); break;
    case '-': op = ops.minus(); break;
    default: fail(ErrorKind::kInvalidModel, std::string("unknown spin axis '") + axis + "'");
  }
  const auto dims = b.site_dimensions();
  return embed(block_label, spin::embed(op, *idx, dims));
}

void LevelModel::add_transition(TransitionLine line) {
  const Block* blk = nullptr;
  for (const auto& b : blocks)
    if (b.label == line.block) blk = &b;
  if (!blk) fail(ErrorKind::kConfiguration, "transition '" + line.label + "': unknown block '" + line.block + "'");
  const auto site = blk->site_index(line.site);
  if (!site || blk->sites[*site].kind == SiteKind::kOrbital) {
    fail(ErrorKind::kConfiguration, "transition '" + line.label + "': block '" + line.block + "' has no spin '" + line.site + "'");
  }
  std::vector<std::pair<std::size_t, double>> conds;
  for (const auto& [name, value] : line.conditions) {
    const auto c = blk->site_index(name);
    if (!c) fail(ErrorKind::kConfiguration, "transition '" + line.label + "': unknown condition spin '" + name + "'");
    if (*c == *site) fail(ErrorKind::kConfiguration, "transition '" + line.label + "' conditions on its own spin");
    conds.emplace_back(*c, value);
  }
  if (!(line.rabi_Hz >= 0.0) || !std::isfinite(line.rabi_Hz)) {
    fail(ErrorKind::kConfiguration, "transition '" + line.label + "': rabi_Hz must be nonnegative");
  }
  line.nuclear = blk->sites[*site].kind == SiteKind::kNucleus;
  line.pairs.clear();
  const double top = blk->sites[*site].spin;
  for (Index s = 0; s < blk->dimension(); ++s) {
    const auto& label = blk->hamiltonian.basis_labels[static_cast<std::size_t>(s)];
    bool ok = label[*site] < top - 1e-9;
    if (line.lower_m) ok = ok && same_value(label[*site], *line.lower_m);
    for (const auto& [c, v] : conds) ok = ok && same_value(label[c], v);
    if (!ok) continue;
    auto up = label;
    up[*site] += 1.0;
    const Index t = blk->find(up);
    line.pairs.emplace_back(blk->offset + s, blk->offset + t);
  }
  if (line.pairs.empty()) fail(ErrorKind::kConfiguration, "transition '" + line.label + "' addresses no basis states");
  const std::string key = line.label;
  transitions[key] = std::move(line);
}

std::vector<lindblad::LindbladChannel> LevelModel::active_channels(double laser_power) const {
  std::vector<lindblad::LindbladChannel> out;
  for (const auto& c : channels)
    if (c.rate > 0.0) out.push_back(c);
  if (laser_power > 0.0) {
    for (auto c : laser_channels) {
      c.rate *= laser_power;
      if (c.rate > 0.0) out.push_back(std::move(c));
    }
  }
  return out;
}

void LevelModel::validate() const {
  if (blocks.empty()) fail(ErrorKind::kInvalidModel, "model has no blocks");
  const Index dim = dimension();
  Index expected = 0;
  for (const auto& b : blocks) {
    if (b.offset != expected) fail(ErrorKind::kInvalidModel, "block offsets are inconsistent");
    expected += b.dimension();
    if (!b.hamiltonian.is_hermitian()) fail(ErrorKind::kInvalidModel, "block '" + b.label + "' Hamiltonian is not Hermitian");
  }
  auto block_of = [&](Index i) {
    for (std::size_t k = 0; k < blocks.size(); ++k)
      if (i >= blocks[k].offset && i < blocks[k].offset + blocks[k].dimension()) return k;
    return blocks.size();
  };
  auto check_channel = [&](const lindblad::LindbladChannel& c) {
    if (c.jump.rows() != dim || c.jump.cols() != dim) fail(ErrorKind::kInvalidModel, "channel '" + c.label + "' has the wrong dimension");
    if (!(c.rate >= 0.0) || !std::isfinite(c.rate)) fail(ErrorKind::kInvalidModel, "channel '" + c.label + "' has an invalid rate");
    std::set<std::pair<std::size_t, std::size_t>> links;
    for (Index j = 0; j < dim; ++j)
      for (Index i = 0; i < dim; ++i)
        if (std::abs(c.jump(i, j)) > 0.0) links.insert({block_of(i), block_of(j)});
    if (links.size() > 1) {
      fail(ErrorKind::kInvalidModel, "channel '" + c.label + "' connects more than one pair of blocks");
    }
  };
  for (const auto& c : channels) check_channel(c);
  for (const auto& c : laser_channels) check_channel(c);
  if (collection.rows() != dim || collection.cols() != dim) fail(ErrorKind::kInvalidModel, "collection operator has the wrong dimension");
  const double cnorm = collection.norm();
  if ((collection - collection.adjoint()).norm() > 1e-12 * std::max(1.0, cnorm)) {
    fail(ErrorKind::kInvalidModel, "collection operator is not Hermitian");
  }
  if (cnorm > 0.0) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(collection, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * cnorm) fail(ErrorKind::kInvalidModel, "collection operator is not positive semidefinite");
  }
}

// ---------------------------------------------------------------------------
// Builders

std::map<std::string, double> default_spin_pair_rates() {
  return {
      {"pump", 10e6},
      {"radiative", 50e6},
      {"isc_in_0", 10e6},
      {"isc_in_pm", 1e6},
      {"isc_out_0", 1e6},
      {"isc_out_pm", 10e6},
      {"hop_parallel", 5e6},
      {"hop_antiparallel", 0.5e6},
      {"recombination", 1e6},
      {"recombination_parallel", 0.1e6},
      {"nuclear_relaxation", 1e3},
  };
}

namespace {

const std::set<std::string> kSpinPairOptionalRates = {"recombination", "recombination_parallel", "nuclear_relaxation",
                                                      "electron_relaxation"};

}  // namespace

std::vector<lindblad::LindbladChannel> relaxation_channels(const LevelModel& model, std::string_view block,
                                                           std::string_view site, double t1, double t2) {
  std::vector<lindblad::LindbladChannel> out;
  const std::string tag = std::string(block) + "." + std::string(site);
  if (t1 < 0.0 || t2 < 0.0) fail(ErrorKind::kConfiguration, "relaxation times must be nonnegative (" + tag + ")");
  if (t1 > 0.0) {
    out.push_back({0.5 / t1, model.site_operator(block, site, '+'), tag + " T1+"});
    out.push_back({0.5 / t1, model.site_operator(block, site, '-'), tag + " T1-"});
  }
  if (t2 > 0.0) out.push_back({0.5 / t2, 2.0 * model.site_operator(block, site, 'z'), tag + " T2"});
  return out;
}

LevelModel build_spin_pair_model(const SpinPairParams& params) {
  std::vector<std::string> missing;
  for (const auto& key : kSpinPairRequiredRates)
    if (!params.rates.count(key)) missing.push_back(key);
  if (!missing.empty()) {
    std::string list;
    for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
    fail(ErrorKind::kConfiguration, "missing rate constant(s): " + list);
  }
  for (const auto& [key, value] : params.rates) {
    const bool known = std::find(kSpinPairRequiredRates.begin(), kSpinPairRequiredRates.end(), key) !=
                           kSpinPairRequiredRates.end() ||
                       kSpinPairOptionalRates.count(key);
    if (!known) fail(ErrorKind::kConfiguration, "unknown rate constant '" + key + "'");
    if (!(value >= 0.0) || !std::isfinite(value)) fail(ErrorKind::kConfiguration, "rate '" + key + "' must be nonnegative");
  }
  auto rates = default_spin_pair_rates();
  rates.erase("electron_relaxation");
  for (const auto& [k, v] : params.rates) rates[k] = v;

  const std::size_t nn = params.nuclei.size();
  for (const auto* list : {&params.defect_a_hyperfine, &params.defect_b_hyperfine, &params.triplet_hyperfine}) {
    if (list->size() > nn) fail(ErrorKind::kConfiguration, "more hyperfine tensors than nuclei");
  }

  std::vector<spin::NuclearSite> nuclei;
  std::vector<Site> nuclear_sites;
  for (std::size_t i = 0; i < nn; ++i) {
    const std::string name = "n" + std::to_string(i);
    nuclei.push_back({params.nuclei[i], std::nullopt, name});
    nuclear_sites.push_back({name, SiteKind::kNucleus, params.nuclei[i].spin, params.nuclei[i].multiplicity(), 1.0});
  }

  LevelModel m;
  m.field_T = params.field_T;

  {
    spin::SpinRegister reg;
    reg.label = "pair";
    reg.electrons.push_back({spin::SpinSpecies::electron(0.5, params.gamma_a), 0, 0, params.defect_a_hyperfine, "A"});
    reg.electrons.push_back({spin::SpinSpecies::electron(0.5, params.gamma_b), 0, 0, params.defect_b_hyperfine, "B"});
    reg.nuclei = nuclei;
    std::vector<Site> sites = {{"A", SiteKind::kElectron, 0.5, 2, 1.0},
                               {"B", SiteKind::kElectron, 0.5, 2, params.defect_b_drive_weight}};
    sites.insert(sites.end(), nuclear_sites.begin(), nuclear_sites.end());
    m.blocks.push_back(make_block(reg, params.field_T, sites));
  }
  {
    spin::SpinRegister reg;
    reg.label = "triplet";
    reg.electrons.push_back({spin::SpinSpecies::electron(1.0, params.gamma_triplet), params.D, params.E,
                             params.triplet_hyperfine, "T"});
    reg.nuclei = nuclei;
    std::vector<Site> sites = {{"T", SiteKind::kElectron, 1.0, 3, 1.0}};
    sites.insert(sites.end(), nuclear_sites.begin(), nuclear_sites.end());
    m.blocks.push_back(make_block(reg, params.field_T, sites));
  }
  {
    spin::SpinRegister reg;
    reg.label = "optical";
    reg.orbital_levels = 2;
    reg.nuclei = nuclei;
    std::vector<Site> sites = {{"orbital", SiteKind::kOrbital, 0.0, 2, 0.0}};
    sites.insert(sites.end(), nuclear_sites.begin(), nuclear_sites.end());
    m.blocks.push_back(make_block(reg, params.field_T, sites));
  }
  place_blocks(m);

  const double r2 = 1.0 / std::sqrt(2.0);
  auto add = [&](std::vector<lindblad::LindbladChannel>& into, const std::string& key, CMatrix jump,
                 const std::string& label) {
    const double rate = label_rate(rates, key);
    into.push_back({rate, std::move(jump), label});
  };
  // Optical cycle. Orbital index 0 is the ground singlet, 1 the excited one.
  add(m.laser_channels, "pump", transfer(m, "optical", {0}, "optical", {{1.0, {1}}}), "pump");
  add(m.channels, "radiative", transfer(m, "optical", {1}, "optical", {{1.0, {0}}}), "radiative");
  add(m.channels, "isc_in_0", transfer(m, "optical", {1}, "triplet", {{1.0, {0}}}), "isc_in T0");
  add(m.channels, "isc_in_pm", transfer(m, "optical", {1}, "triplet", {{1.0, {1}}}), "isc_in T+1");
  add(m.channels, "isc_in_pm", transfer(m, "optical", {1}, "triplet", {{1.0, {-1}}}), "isc_in T-1");
  add(m.channels, "isc_out_0", transfer(m, "triplet", {0}, "optical", {{1.0, {0}}}), "isc_out T0");
  add(m.channels, "isc_out_pm", transfer(m, "triplet", {1}, "optical", {{1.0, {0}}}), "isc_out T+1");
  add(m.channels, "isc_out_pm", transfer(m, "triplet", {-1}, "optical", {{1.0, {0}}}), "isc_out T-1");
  // Laser-driven charge hopping into the weakly coupled pair.
  add(m.laser_channels, "hop_parallel", transfer(m, "triplet", {1}, "pair", {{1.0, {0.5, 0.5}}}), "hop T+1");
  add(m.laser_channels, "hop_parallel", transfer(m, "triplet", {-1}, "pair", {{1.0, {-0.5, -0.5}}}), "hop T-1");
  add(m.laser_channels, "hop_antiparallel",
      transfer(m, "triplet", {0}, "pair", {{r2, {0.5, -0.5}}, {r2, {-0.5, 0.5}}}), "hop T0");
  // Return of the pair to the singlet ground state.
  add(m.channels, "recombination", transfer(m, "pair", {0.5, -0.5}, "optical", {{1.0, {0}}}), "recombination ud");
  add(m.channels, "recombination", transfer(m, "pair", {-0.5, 0.5}, "optical", {{1.0, {0}}}), "recombination du");
  add(m.channels, "recombination_parallel", transfer(m, "pair", {0.5, 0.5}, "optical", {{1.0, {0}}}), "recombination uu");
  add(m.channels, "recombination_parallel", transfer(m, "pair", {-0.5, -0.5}, "optical", {{1.0, {0}}}), "recombination dd");

  const double nuclear_rate = label_rate(rates, "nuclear_relaxation");
  if (nuclear_rate > 0.0) {
    for (const auto& b : m.blocks)
      for (const auto& s : nuclear_sites) {
        auto extra = relaxation_channels(m, b.label, s.name, 1.0 / nuclear_rate, 0.0);
        m.channels.insert(m.channels.end(), extra.begin(), extra.end());
      }
  }
  const double electron_rate = label_rate(params.rates, "electron_relaxation");
  if (electron_rate > 0.0) {
    for (const auto& [blk, site] : {std::pair{"pair", "A"}, {"pair", "B"}, {"triplet", "T"}}) {
      auto extra = relaxation_channels(m, blk, site, 1.0 / electron_rate, 0.0);
      m.channels.insert(m.channels.end(), extra.begin(), extra.end());
    }
  }

  const Block& optical = m.block("optical");
  m.collection = params.collection_efficiency * label_rate(rates, "radiative") *
                 m.embed("optical", local_projector(optical, 0, 1.0));
  m.bright_state_label = "optical excited singlet";
  m.validate();
  return m;
}

LevelModel build_register_model(const RegisterParams& params) {
  const auto& mf = params.manifold;
  mf.validate();
  for (double v : {params.pump_rate, params.electron_t1, params.electron_t2, params.nuclear_t1, params.nuclear_t2,
                   params.emission_rate, params.dark_weight}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::kConfiguration, "register parameters must be nonnegative");
  }
  LevelModel m;
  m.field_T = params.field_T;
  spin::SpinRegister reg = spin::as_register(mf);
  reg.label = mf.label.empty() ? "register" : mf.label;
  reg.electrons[0].label = "e";
  std::vector<Site> sites = {{"e", SiteKind::kElectron, mf.electron.spin, mf.electron.multiplicity(), 1.0}};
  for (std::size_t i = 0; i < reg.nuclei.size(); ++i) {
    std::string name = mf.nuclei[i].label.empty() ? "n" + std::to_string(i) : mf.nuclei[i].label;
    reg.nuclei[i].label = name;
    sites.push_back({name, SiteKind::kNucleus, reg.nuclei[i].species.spin, reg.nuclei[i].species.multiplicity(), 1.0});
  }
  m.blocks.push_back(make_block(reg, params.field_T, sites));
  place_blocks(m);
  const Block& b = m.blocks.front();
  const std::string& label = b.label;
  const auto dims = b.site_dimensions();
  const double s = mf.electron.spin;
  const int levels = mf.electron.multiplicity();

  // Optical pumping into m = -S, nuclear states untouched.
  for (int i = 0; i < levels - 1; ++i) {
    CMatrix flip = CMatrix::Zero(levels, levels);
    flip(levels - 1, i) = 1.0;
    m.laser_channels.push_back({params.pump_rate, m.embed(label, spin::embed(flip, 0, dims)),
                                "pump m=" + format_double(s - i)});
  }
  auto append = [&](std::vector<lindblad::LindbladChannel> extra) {
    m.channels.insert(m.channels.end(), extra.begin(), extra.end());
  };
  append(relaxation_channels(m, label, "e", params.electron_t1, params.electron_t2));
  for (std::size_t i = 1; i < sites.size(); ++i) {
    append(relaxation_channels(m, label, sites[i].name, params.nuclear_t1, params.nuclear_t2));
  }

  const CMatrix bright = m.embed(label, local_projector(b, 0, -s));
  const CMatrix id = CMatrix::Identity(m.dimension(), m.dimension());
  m.collection = params.emission_rate * (bright + params.dark_weight * (id - bright));
  m.bright_state_label = "m=" + format_double(-s);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Eigenframe

Eigenframe eigenframe(const LevelModel& model) {
  const Index n = model.dimension();
  Eigenframe ef;
  ef.energies = RVector::Zero(n);
  ef.vectors = CMatrix::Zero(n, n);
  ef.product_of.assign(static_cast<std::size_t>(n), -1);
  ef.eigen_of.assign(static_cast<std::size_t>(n), -1);
  ef.block_of.assign(static_cast<std::size_t>(n), 0);

  for (std::size_t bi = 0; bi < model.blocks.size(); ++bi) {
    const Block& b = model.blocks[bi];
    const Index d = b.dimension();
    const CMatrix& h = b.hamiltonian.entries;
    // A tiny diagonal ramp selects product states inside exactly degenerate
    // subspaces; reported energies come from the unperturbed Hamiltonian.
    CMatrix hp = h;
    for (Index k = 0; k < d; ++k) hp(k, k) += 1e-3 * static_cast<double>(k + 1);
    const auto es = spin::eigensystem(hp);

    // Greedy maximum-overlap assignment of eigenvectors to product states.
    struct Cand {
      double w;
      Index k, p;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(d * d));
    for (Index k = 0; k < d; ++k)
      for (Index p = 0; p < d; ++p) cands.push_back({std::norm(es.vectors(p, k)), k, p});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) { return a.w > c.w; });
    std::vector<Index> assigned(static_cast<std::size_t>(d), -1);
    std::vector<bool> taken(static_cast<std::size_t>(d), false);
    for (const auto& c : cands) {
      if (assigned[static_cast<std::size_t>(c.k)] >= 0 || taken[static_cast<std::size_t>(c.p)]) continue;
      assigned[static_cast<std::size_t>(c.k)] = c.p;
      taken[static_cast<std::size_t>(c.p)] = true;
    }

    for (Index k = 0; k < d; ++k) {
      const Index g = b.offset + k;
      const Index p = assigned[static_cast<std::size_t>(k)];
      CVector v = es.vectors.col(k);
      const cdouble ref = v[p];
      if (std::abs(ref) > 0.0) v *= std::conj(ref) / std::abs(ref);
      ef.vectors.block(b.offset, g, d, 1) = v;
      ef.energies[g] = (v.adjoint() * h * v)(0, 0).real();
      ef.product_of[static_cast<std::size_t>(g)] = b.offset + p;
      ef.eigen_of[static_cast<std::size_t>(b.offset + p)] = g;
      ef.block_of[static_cast<std::size_t>(g)] = bi;
    }
  }
  return ef;
}

// ---------------------------------------------------------------------------
// Frames

RotatingFrame solve_frame(const Eigenframe& ef, std::span<const DriveEdge> edges) {
  const Index n = ef.energies.size();
  RotatingFrame frame;
  frame.frame_Hz = ef.energies;
  std::vector<bool> fixed(static_cast<std::size_t>(n), false);
  std::vector<std::vector<std::size_t>> incident(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& edge = edges[e];
    if (edge.from < 0 || edge.from >= n || edge.to < 0 || edge.to >= n || edge.from == edge.to) {
      fail(ErrorKind::kInvalidModel, "drive edge references an invalid state");
    }
    incident[static_cast<std::size_t>(edge.from)].push_back(e);
    incident[static_cast<std::size_t>(edge.to)].push_back(e);
  }
  std::vector<int> decided(edges.size(), 0);  // 1 kept, -1 dropped
  for (Index root = 0; root < n; ++root) {
    if (fixed[static_cast<std::size_t>(root)] || incident[static_cast<std::size_t>(root)].empty()) continue;
    fixed[static_cast<std::size_t>(root)] = true;
    std::deque<Index> queue{root};
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop_front();
      for (std::size_t e : incident[static_cast<std::size_t>(u)]) {
        if (decided[e] != 0) continue;
        const auto& edge = edges[e];
        const bool forward = edge.from == u;
        const Index v = forward ? edge.to : edge.from;
        const double want = frame.frame_Hz[u] + (forward ? edge.frequency_Hz : -edge.frequency_Hz);
        if (!fixed[static_cast<std::size_t>(v)]) {
          frame.frame_Hz[v] = want;
          fixed[static_cast<std::size_t>(v)] = true;
          queue.push_back(v);
          decided[e] = 1;
        } else {
          const double tol = 1e-3 + 1e-12 * std::abs(want);
          decided[e] = std::abs(frame.frame_Hz[v] - want) <= tol ? 1 : -1;
        }
      }
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (decided[e] == 1) frame.edges.push_back(edges[e]);
    else ++frame.dropped;
  }
  return frame;
}

CMatrix rotating_hamiltonian(const Eigenframe& ef, const RotatingFrame& frame) {
  const Index n = ef.energies.size();
  CMatrix h = CMatrix::Zero(n, n);
  for (Index k = 0; k < n; ++k) h(k, k) = ef.energies[k] - frame.frame_Hz[k];
  for (const auto& e : frame.edges) {
    h(e.to, e.from) += e.coupling;
    h(e.from, e.to) += std::conj(e.coupling);
  }
  return h;
}

std::vector<lindblad::LindbladChannel> secularize(const Eigenframe& ef, std::span<const lindblad::LindbladChannel> channels,
                                                  const RVector& frame_Hz, double tolerance_Hz) {
  std::vector<lindblad::LindbladChannel> out;
  const Index n = ef.energies.size();
  struct Entry {
    double omega;
    Index row, col;
    cdouble value;
  };
  std::vector<Entry> entries;
  for (const auto& c : channels) {
    if (c.rate == 0.0) continue;
    const CMatrix j = ef.to_eigen(c.jump);
    const double scale = j.cwiseAbs().maxCoeff();
    if (scale == 0.0) continue;
    entries.clear();
    for (Index col = 0; col < n; ++col)
      for (Index row = 0; row < n; ++row)
        if (std::abs(j(row, col)) > 1e-12 * scale) {
          entries.push_back({frame_Hz[row] - frame_Hz[col], row, col, j(row, col)});
        }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.omega < b.omega; });
    std::size_t start = 0;
    while (start < entries.size()) {
      std::size_t end = start + 1;
      while (end < entries.size() && entries[end].omega - entries[end - 1].omega <= tolerance_Hz) ++end;
      CMatrix part = CMatrix::Zero(n, n);
      for (std::size_t k = start; k < end; ++k) part(entries[k].row, entries[k].col) = entries[k].value;
      out.push_back({c.rate, std::move(part), c.label});
      start = end;
    }
  }
  return out;
}

CMatrix rotating_liouvillian(const LevelModel& model, const Eigenframe& ef, const RotatingFrame& frame,
                             double laser_power) {
  const auto active = model.active_channels(laser_power);
  const auto sec = secularize(ef, active, frame.frame_Hz);
  return lindblad::liouvillian(rotating_hamiltonian(ef, frame), sec);
}

namespace {

struct StateLabels {
  std::vector<double> electron;  // per electron site
  std::vector<double> nuclear;   // per nuclear site
  double orbital = 0.0;
};

StateLabels labels_of(const LevelModel& model, const Eigenframe& ef, Index k) {
  const Block& b = model.blocks[ef.block_of[static_cast<std::size_t>(k)]];
  const auto& label = b.hamiltonian.basis_labels[static_cast<std::size_t>(ef.product_of[static_cast<std::size_t>(k)] - b.offset)];
  StateLabels s;
  for (std::size_t i = 0; i < b.sites.size(); ++i) {
    switch (b.sites[i].kind) {
      case SiteKind::kOrbital: s.orbital = label[i]; break;
      case SiteKind::kElectron: s.electron.push_back(label[i]); break;
      case SiteKind::kNucleus: s.nuclear.push_back(label[i]); break;
    }
  }
  return s;
}

// Number of sites whose label differs by exactly one quantum; -1 if any
// other difference exists.
int single_flips(const std::vector<double>& a, const std::vector<double>& b) {
  int flips = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (d < 1e-9) continue;
    if (std::abs(d - 1.0) < 1e-9) ++flips;
    else return -1;
  }
  return flips;
}

std::vector<DriveEdge> operator_edges(const LevelModel& model, const Eigenframe& ef, const CMatrix& drive,
                                      double frequency, double amplitude, bool electron) {
  std::vector<DriveEdge> edges;
  if (amplitude == 0.0) return edges;
  const CMatrix x = ef.to_eigen(drive);
  const double scale = x.cwiseAbs().maxCoeff();
  if (scale == 0.0) return edges;
  const Index n = x.rows();
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b) {
      if (ef.block_of[static_cast<std::size_t>(a)] != ef.block_of[static_cast<std::size_t>(b)]) continue;
      if (std::abs(x(a, b)) <= 1e-9 * scale) continue;
      const auto la = labels_of(model, ef, a);
      const auto lb = labels_of(model, ef, b);
      if (std::abs(la.orbital - lb.orbital) > 1e-9) continue;
      const int fe = single_flips(la.electron, lb.electron);
      const int fn = single_flips(la.nuclear, lb.nuclear);
      const bool ok = electron ? (fe == 1 && fn == 0) : (fe == 0 && fn == 1);
      if (!ok) continue;
      const bool a_low = ef.energies[a] <= ef.energies[b];
      const Index lo = a_low ? a : b;
      const Index hi = a_low ? b : a;
      edges.push_back({lo, hi, frequency, amplitude * x(hi, lo)});
    }
  return edges;
}

}  // namespace

std::vector<DriveEdge> microwave_edges(const LevelModel& model, const Eigenframe& ef, double frequency_Hz,
                                       double amplitude_Hz, std::string_view only_block) {
  CMatrix drive = CMatrix::Zero(model.dimension(), model.dimension());
  for (const auto& b : model.blocks) {
    if (!only_block.empty() && b.label != only_block) continue;
    for (const auto& s : b.sites)
      if (s.kind == SiteKind::kElectron && s.drive_weight != 0.0) drive += s.drive_weight * model.site_operator(b.label, s.name, 'x');
  }
  if (!only_block.empty()) (void)model.block(only_block);
  return operator_edges(model, ef, drive, frequency_Hz, amplitude_Hz, true);
}

std::vector<DriveEdge> radiofrequency_edges(const LevelModel& model, const Eigenframe& ef, double frequency_Hz,
                                            double amplitude_Hz) {
  CMatrix drive = CMatrix::Zero(model.dimension(), model.dimension());
  for (const auto& b : model.blocks)
    for (const auto& s : b.sites)
      if (s.kind == SiteKind::kNucleus && s.drive_weight != 0.0) drive += s.drive_weight * model.site_operator(b.label, s.name, 'x');
  return operator_edges(model, ef, drive, frequency_Hz, amplitude_Hz, false);
}

double line_frequency(const Eigenframe& ef, const TransitionLine& line) {
  double sum = 0.0;
  for (const auto& [lo, hi] : line.pairs) {
    sum += ef.energies[ef.eigen_of[static_cast<std::size_t>(hi)]] - ef.energies[ef.eigen_of[static_cast<std::size_t>(lo)]];
  }
  return sum / static_cast<double>(line.pairs.size());
}

std::vector<DriveEdge> line_edges(const LevelModel&, const Eigenframe& ef, const TransitionLine& line, double rabi_Hz,
                                  double phase_rad, double detuning_Hz) {
  std::vector<DriveEdge> edges;
  const double omega = line_frequency(ef, line) + detuning_Hz;
  const cdouble coupling = 0.5 * rabi_Hz * std::polar(1.0, -phase_rad);
  for (const auto& [lo, hi] : line.pairs) {
    edges.push_back({ef.eigen_of[static_cast<std::size_t>(lo)], ef.eigen_of[static_cast<std::size_t>(hi)], omega, coupling});
  }
  return edges;
}

// ---------------------------------------------------------------------------
// Spectra

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPINDYN_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 256));
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace {

void check_sweep(std::span<const double> freqs, double amplitude, const char* what) {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) fail(ErrorKind::kDomain, std::string(what) + " amplitude must be nonnegative");
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    if (!std::isfinite(freqs[k])) fail(ErrorKind::kDomain, "non-finite sweep frequency");
    if (k > 0 && !(freqs[k] > freqs[k - 1])) fail(ErrorKind::kDomain, "sweep frequencies must be strictly increasing");
  }
}

double photon_rate(const CMatrix& collection_eigen, const lindblad::DensityMatrix& rho) {
  return rho.expectation(collection_eigen);
}

}  // namespace

lindblad::DensityMatrix cw_steady_state(const LevelModel& model, double mw_frequency_Hz, double mw_amplitude_Hz,
                                        const CwOptions& options) {
  model.validate();
  const auto ef = eigenframe(model);
  const auto edges = microwave_edges(model, ef, mw_frequency_Hz, mw_amplitude_Hz, options.only_block);
  const auto frame = solve_frame(ef, edges);
  const auto rho = lindblad::steady_state(rotating_liouvillian(model, ef, frame, options.laser_power));
  return lindblad::DensityMatrix(ef.to_product(rho.entries())).hermitized();
}

SpectrumResult cw_odmr(const LevelModel& model, std::span<const double> mw_frequencies, double mw_amplitude_Hz,
                       const CwOptions& options) {
  model.validate();
  check_sweep(mw_frequencies, mw_amplitude_Hz, "MW");
  const auto ef = eigenframe(model);
  const CMatrix collection = ef.to_eigen(model.collection);

  const RotatingFrame idle = solve_frame(ef, {});
  const auto rho_off = lindblad::steady_state(rotating_liouvillian(model, ef, idle, options.laser_power));
  const double n_off = photon_rate(collection, rho_off);
  if (!(n_off > 0.0)) fail(ErrorKind::kNumericalContract, "no photons without drive; contrast is undefined");

  SpectrumResult out;
  out.frequencies.assign(mw_frequencies.begin(), mw_frequencies.end());
  out.contrast.assign(mw_frequencies.size(), 0.0);
  if (mw_amplitude_Hz > 0.0) {
    parallel_for(mw_frequencies.size(), worker_count(options.workers), [&](std::size_t i) {
      const auto edges = microwave_edges(model, ef, mw_frequencies[i], mw_amplitude_Hz, options.only_block);
      if (edges.empty()) return;
      const auto frame = solve_frame(ef, edges);
      const auto rho = lindblad::steady_state_lu(rotating_liouvillian(model, ef, frame, options.laser_power));
      out.contrast[i] = (photon_rate(collection, rho) - n_off) / n_off;
    });
  }
  out.metadata["experiment"] = "cw_odmr";
  out.metadata["mw_amplitude_Hz"] = format_double(mw_amplitude_Hz);
  out.metadata["laser_power"] = format_double(options.laser_power);
  out.metadata["B_T"] = format_field(model.field_T);
  out.metadata["n_off"] = format_double(n_off);
  out.metadata["dimension"] = std::to_string(model.dimension());
  out.validate();
  return out;
}

SpectrumResult odnmr_spectrum(const LevelModel& model, std::span<const double> rf_frequencies, double rf_amplitude_Hz,
                              std::string_view mw_transition, const OdnmrOptions& options) {
  model.validate();
  check_sweep(rf_frequencies, rf_amplitude_Hz, "RF");
  const auto it = model.transitions.find(mw_transition);
  if (it == model.transitions.end()) {
    fail(ErrorKind::kConfiguration, "unknown transition label '" + std::string(mw_transition) + "'");
  }
  const TransitionLine& line = it->second;
  if (line.nuclear) fail(ErrorKind::kConfiguration, "ODNMR needs an electron transition, '" + line.label + "' is nuclear");
  const double mw_amp = options.mw_amplitude_Hz.value_or(line.rabi_Hz);
  if (!(mw_amp > 0.0)) fail(ErrorKind::kConfiguration, "transition '" + line.label + "' has no MW amplitude");

  const auto ef = eigenframe(model);
  const CMatrix collection = ef.to_eigen(model.collection);
  const auto mw = line_edges(model, ef, line, mw_amp, 0.0, 0.0);
  const auto rho_off = lindblad::steady_state(rotating_liouvillian(model, ef, solve_frame(ef, mw), options.laser_power));
  const double n_off = photon_rate(collection, rho_off);
  if (!(n_off > 0.0)) fail(ErrorKind::kNumericalContract, "no photons without RF drive; contrast is undefined");

  SpectrumResult out;
  out.frequencies.assign(rf_frequencies.begin(), rf_frequencies.end());
  out.contrast.assign(rf_frequencies.size(), 0.0);
  if (rf_amplitude_Hz > 0.0) {
    parallel_for(rf_frequencies.size(), worker_count(options.workers), [&](std::size_t i) {
      auto edges = mw;
      const auto rf = radiofrequency_edges(model, ef, rf_frequencies[i], rf_amplitude_Hz);
      if (rf.empty()) return;
      edges.insert(edges.end(), rf.begin(), rf.end());
      const auto frame = solve_frame(ef, edges);
      const auto rho = lindblad::steady_state_lu(rotating_liouvillian(model, ef, frame, options.laser_power));
      out.contrast[i] = (photon_rate(collection, rho) - n_off) / n_off;
    });
  }
  out.metadata["experiment"] = "odnmr";
  out.metadata["mw_transition"] = line.label;
  out.metadata["mw_amplitude_Hz"] = format_double(mw_amp);
  out.metadata["rf_amplitude_Hz"] = format_double(rf_amplitude_Hz);
  out.metadata["B_T"] = format_field(model.field_T);
  out.metadata["n_off"] = format_double(n_off);
  out.validate();
  return out;
}

double pl_readout(const lindblad::DensityMatrix& rho, const LevelModel& model, double duration, double laser_power) {
  if (!(duration > 0.0) || !std::isfinite(duration)) fail(ErrorKind::kDomain, "readout duration must be positive");
  if (rho.dimension() != model.dimension()) fail(ErrorKind::kInvalidModel, "state dimension does not match the model");
  if (model.collection.isZero(0.0)) return 0.0;
  const auto ef = eigenframe(model);
  const CMatrix generator = rotating_liouvillian(model, ef, solve_frame(ef, {}), laser_power);
  const CVector integral = lindblad::integrate_action(generator, lindblad::vectorize(ef.to_eigen(rho.entries())), duration);
  const double photons = (ef.to_eigen(model.collection) * lindblad::unvectorize(integral)).trace().real();
  return std::max(0.0, photons);
}

LevelModel calibrate_collection(const LevelModel& model, const lindblad::DensityMatrix& rho, double duration,
                                double target_photons, double laser_power) {
  if (!(target_photons >= 0.0)) fail(ErrorKind::kDomain, "target photon number must be nonnegative");
  const double photons = pl_readout(rho, model, duration, laser_power);
  if (!(photons > 0.0)) fail(ErrorKind::kDomain, "reference state yields no photons; cannot calibrate");
  LevelModel out = model;
  out.collection *= target_photons / photons;
  return out;
}

double bath_linewidth_fwhm(std::span<const BathNucleus> bath) {
  double second_moment = 0.0;
  for (const auto& n : bath) {
    n.species.validate();
    const double i = n.species.spin;
    second_moment += n.a_zz_Hz * n.a_zz_Hz * i * (i + 1.0) / 3.0;
  }
  return 2.0 * std::sqrt(2.0 * std::log(2.0)) * std::sqrt(second_moment);
}

}  // namespace spindyn::photo
