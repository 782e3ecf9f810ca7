#include "spindyn/cli.hpp"

#include "spindyn/analysis.hpp"
#include "spindyn/csv.hpp"
#include "spindyn/model_file.hpp"
#include "spindyn/parallel.hpp"
#include "spindyn/photodynamics.hpp"
#include "spindyn/sequences.hpp"
#include "spindyn/spin_core.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace spindyn::cli {
namespace {

constexpr const char* kModule = "cli";

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorKind::kConfiguration, kModule, message); }

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t");
  const auto b = s.find_last_not_of(" \t");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

Vec3 parse_field(const std::string& text) {
  if (text.empty()) return Vec3::Zero();
  const auto parts = split_commas(text);
  if (parts.size() == 1) return Vec3(0.0, 0.0, parse_si(parts[0], "field"));
  if (parts.size() != 3) config_error("field '" + text + "' must be one value or three comma-separated values");
  return Vec3(parse_si(parts[0], "field"), parse_si(parts[1], "field"), parse_si(parts[2], "field"));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, kModule, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Everything that changes the output, i.e. the arguments without --out and
// --workers, plus the model text.
std::string config_hash(const std::vector<std::string>& args, const std::string& model_hash) {
  std::string canon = model_hash;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--out" || a == "--workers") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0 || a.rfind("--workers=", 0) == 0) continue;
    canon += '\x1f';
    canon += a;
  }
  return model::fnv1a_hex(canon);
}

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

struct CommonOptions {
  std::string model_path;
  std::string out_path;
  std::string field;
  unsigned long long seed = kDefaultSeed;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool model_required) {
  auto* m = cmd->add_option("--model", o.model_path, "model file (TOML)");
  if (model_required) m->required();
  cmd->add_option("--out", o.out_path, "output CSV path (default: stdout)");
  cmd->add_option("--B", o.field, "magnetic field: Bz or Bx,By,Bz with units (e.g. 0,0,62.5mT)");
  cmd->add_option("--seed", o.seed, "random seed")->capture_default_str();
  cmd->add_option("--workers", o.workers, "worker threads (default: SPINDYN_WORKERS or all cores)");
}

void emit(const Context& ctx, const CommonOptions& o, const csv::Writer& w) {
  if (o.out_path.empty() || o.out_path == "-") {
    ctx.out << w.str();
  } else {
    w.write_file(o.out_path);
  }
}

csv::Writer make_writer(const Context& ctx, std::vector<std::string> header, const std::string& command,
                        const std::string& model_hash, const CommonOptions& o) {
  csv::Writer w(std::move(header));
  w.meta("spindyn", kVersion);
  w.meta("command", command);
  w.meta("config_hash", config_hash(ctx.args, model_hash));
  w.meta("seed", std::to_string(o.seed));
  return w;
}

std::vector<double> grid(double from, double to, int points) {
  if (points < 1) config_error("--points must be at least 1");
  if (points > 1 && !(to > from)) config_error("sweep range is empty (--to must exceed --from)");
  return analysis::linspace(from, to, static_cast<std::size_t>(points));
}

model::ModelConfig load(const CommonOptions& o) { return model::load_model(o.model_path); }

Vec3 field_of(const CommonOptions& o, const model::ModelConfig& cfg) { return o.field.empty() ? cfg.field_T : parse_field(o.field); }

// ---------------------------------------------------------------------------

struct OdmrOptions {
  CommonOptions common;
  std::string from = "1GHz", to = "3GHz", amp = "1MHz", linewidth = "10MHz", block;
  int points = 501;
  double power = 1.0;
};

int cmd_odmr(const Context& ctx, const OdmrOptions& o) {
  const auto cfg = load(o.common);
  const Vec3 field = field_of(o.common, cfg);
  const auto f = grid(parse_si(o.from, "frequency"), parse_si(o.to, "frequency"), o.points);
  if (cfg.kind == "manifolds") {
    // Stick spectrum with Gaussian lines; no optical model to compute contrast.
    const double fwhm = parse_si(o.linewidth, "frequency");
    if (!(fwhm > 0.0)) config_error("--linewidth must be positive");
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    std::vector<spin::Stick> sticks;
    for (const auto& m : cfg.manifolds()) {
      const auto h = spin::build_manifold_hamiltonian(m, field);
      const auto reg = spin::as_register(m);
      const auto dims = reg.site_dimensions();
      const auto ops = spin::spin_operators(m.electron);
      const auto s = spin::transitions(h, spin::embed(ops.x + ops.y, 0, dims));
      sticks.insert(sticks.end(), s.begin(), s.end());
    }
    auto w = make_writer(ctx, {"frequency_Hz", "intensity"}, "odmr", cfg.hash, o.common);
    for (double x : f) {
      double y = 0.0;
      for (const auto& s : sticks) y += s.intensity * std::exp(-0.5 * std::pow((x - s.frequency_Hz) / sigma, 2));
      w.row(std::vector<double>{x, y});
    }
    emit(ctx, o.common, w);
    return 0;
  }
  const auto model = cfg.build(field);
  photo::CwOptions opt;
  opt.laser_power = o.power;
  opt.only_block = o.block;
  opt.workers = o.common.workers;
  const auto spec = photo::cw_odmr(model, f, parse_si(o.amp, "frequency"), opt);
  auto w = make_writer(ctx, {"frequency_Hz", "contrast"}, "odmr", cfg.hash, o.common);
  for (std::size_t i = 0; i < spec.frequencies.size(); ++i) w.row(std::vector<double>{spec.frequencies[i], spec.contrast[i]});
  emit(ctx, o.common, w);
  return 0;
}

struct OdnmrOptions {
  CommonOptions common;
  std::string from = "1MHz", to = "100MHz", rf_amp = "1kHz", mw_amp, line;
  int points = 401;
  double power = 1.0;
};

int cmd_odnmr(const Context& ctx, const OdnmrOptions& o) {
  const auto cfg = load(o.common);
  const auto model = cfg.build(field_of(o.common, cfg));
  const auto f = grid(parse_si(o.from, "frequency"), parse_si(o.to, "frequency"), o.points);
  photo::OdnmrOptions opt;
  opt.laser_power = o.power;
  opt.workers = o.common.workers;
  if (!o.mw_amp.empty()) opt.mw_amplitude_Hz = parse_si(o.mw_amp, "frequency");
  const auto spec = photo::odnmr_spectrum(model, f, parse_si(o.rf_amp, "frequency"), o.line, opt);
  auto w = make_writer(ctx, {"frequency_Hz", "contrast"}, "odnmr", cfg.hash, o.common);
  for (std::size_t i = 0; i < spec.frequencies.size(); ++i) w.row(std::vector<double>{spec.frequencies[i], spec.contrast[i]});
  emit(ctx, o.common, w);
  return 0;
}

struct FieldmapOptions {
  CommonOptions common;
  std::string from = "0mT", to = "80mT";
  int steps = 41;
  std::string axis = "z";
};

int cmd_fieldmap(const Context& ctx, const FieldmapOptions& o) {
  const auto cfg = o.common.model_path.empty() ? model::default_fieldmap_model() : load(o.common);
  Vec3 dir = Vec3::Zero();
  if (o.axis == "x") dir.x() = 1.0;
  else if (o.axis == "y") dir.y() = 1.0;
  else if (o.axis == "z") dir.z() = 1.0;
  else config_error("--axis must be x, y or z");
  const auto fields = grid(parse_si(o.from, "field"), parse_si(o.to, "field"), o.steps);
  const auto manifolds = cfg.manifolds();
  auto w = make_writer(ctx, {"B_T", "manifold", "frequency_Hz", "intensity"}, "fieldmap", cfg.hash, o.common);
  for (double b : fields) {
    for (const auto& m : manifolds) {
      const auto h = spin::build_manifold_hamiltonian(m, b * dir);
      const auto dims = spin::as_register(m).site_dimensions();
      const auto ops = spin::spin_operators(m.electron);
      for (const auto& s : spin::transitions(h, spin::embed(ops.x + ops.y, 0, dims))) {
        w.row({csv::format_number(b), m.label, csv::format_number(s.frequency_Hz), csv::format_number(s.intensity)});
      }
    }
  }
  emit(ctx, o.common, w);
  return 0;
}

// ---------------------------------------------------------------------------
// Pulse experiments

struct PulseOptions {
  CommonOptions common;
  std::string line, from = "0us", to = "2us", amp, detuning, init = "5us", readout = "1us", prep, map, sequence;
  int points = 101;
  double noise = 0.0;
};

std::string ns_literal(double seconds) { return csv::format_number(seconds * 1e9) + "ns"; }

int cmd_pulse(const Context& ctx, const std::string& command, const PulseOptions& o) {
  const auto cfg = load(o.common);
  const auto model = cfg.build(field_of(o.common, cfg));
  seq::CompileOptions copt;
  if (!o.detuning.empty()) {
    if (o.line.empty()) config_error("--detuning needs --line");
    copt.detuning_Hz[o.line] = parse_si(o.detuning, "frequency");
  }

  std::string text;
  double x_scale = 1.0;
  if (!o.sequence.empty()) {
    text = read_file(o.sequence);
  } else {
    const bool needs_line = command != "t1";
    if (needs_line && o.line.empty()) config_error(command + " needs --line or --sequence");
    std::string kw = "mw";
    if (!o.line.empty()) kw = model.transition(o.line).nuclear ? "rf" : "mw";
    const std::string at = " @ " + o.line + (o.amp.empty() ? "" : " amp " + csv::format_number(parse_si(o.amp, "frequency")));
    text = "laser " + ns_literal(parse_si(o.init, "time")) + "\n" + o.prep + "\n";
    if (command == "rabi") {
      text += kw + " t" + at + "\n";
    } else if (command == "ramsey") {
      text += kw + " pi/2" + at + "\nwait t\n" + kw + " pi/2" + at + "\n";
    } else if (command == "echo") {
      text += kw + " pi/2" + at + "\nwait t\n" + kw + " pi" + at + "\nwait t\n" + kw + " pi/2" + at + "\n";
      x_scale = 2.0;
    } else {
      text += "wait t\n";
    }
    text += o.map + "\nlaser " + ns_literal(parse_si(o.readout, "time")) + "\n";
    const double from = parse_si(o.from, "time");
    const double to = parse_si(o.to, "time");
    if (o.points < 1) config_error("--points must be at least 1");
    if (o.points > 1 && !(to > from)) config_error("sweep range is empty (--to must exceed --from)");
    text += "sweep t " + ns_literal(from) + ".." + ns_literal(to) + " " + std::to_string(o.points) + "\n";
  }

  const auto program = seq::parse_sequence(text);
  const auto vars = program.variables();
  const auto points = seq::expand_sweeps(program);
  const seq::Compiler compiler(model, copt);
  const auto rho0 = lindblad::DensityMatrix::maximally_mixed(model.dimension());

  std::vector<double> photons(points.size());
  parallel_for(points.size(), photo::worker_count(o.common.workers), [&](std::size_t i) {
    const auto compiled = compiler.compile(program, points[i]);
    photons[i] = seq::run_program(compiler, compiled, rho0).photons;
  });
  if (o.noise < 0.0) config_error("--noise must be nonnegative");
  if (o.noise > 0.0) {
    std::mt19937_64 rng(o.common.seed);
    std::normal_distribution<double> gauss(0.0, o.noise);
    for (double& p : photons) p += gauss(rng);
  }

  auto w = make_writer(ctx, {"x_s", "photons"}, command, cfg.hash, o.common);
  if (!vars.empty()) w.meta("x", vars.front() + (x_scale != 1.0 ? " * " + csv::format_number(x_scale) : ""));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = vars.empty() ? static_cast<double>(i) : x_scale * points[i].at(vars.front());
    w.row(std::vector<double>{x, photons[i]});
  }
  emit(ctx, o.common, w);
  return 0;
}

struct SwapOptions {
  CommonOptions common;
  std::string electron, electron_alt, nuclear, init = "5us";
  bool reverse = false;
};

std::string line_from_model(const model::ModelConfig& cfg, const std::string& given, const char* key) {
  if (!given.empty()) return given;
  if (cfg.doc.contains("lines") && cfg.doc.at("lines").contains(key) && cfg.doc.at("lines").at(key).is_string()) {
    return cfg.doc.at("lines").at(key).get<std::string>();
  }
  config_error(std::string("no ") + key + " line given and the model has no [lines] " + key + " entry");
}

double site_polarization(const photo::LevelModel& model, const lindblad::DensityMatrix& rho, const photo::TransitionLine& line) {
  const auto& block = model.block(line.block);
  const auto site = block.site_index(line.site);
  if (!site) config_error("transition '" + line.label + "' names an unknown spin '" + line.site + "'");
  double plus = 0.0, minus = 0.0;
  for (Index k = 0; k < block.dimension(); ++k) {
    const double m = block.hamiltonian.basis_labels[static_cast<std::size_t>(k)][*site];
    const double p = rho.population(block.offset + k);
    if (m > 0) plus += p;
    if (m < 0) minus += p;
  }
  return analysis::polarization(minus, plus);
}

int cmd_swap(const Context& ctx, const SwapOptions& o) {
  const auto cfg = load(o.common);
  const auto model = cfg.build(field_of(o.common, cfg));
  std::string a = line_from_model(cfg, o.electron, "electron");
  std::string b = line_from_model(cfg, o.electron_alt, "electron_alt");
  const std::string n = line_from_model(cfg, o.nuclear, "nuclear");
  if (o.reverse) std::swap(a, b);
  const auto& eline = model.transition(a);
  const auto& nline = model.transition(n);
  (void)model.transition(b);

  const seq::Compiler compiler(model);
  const auto init = seq::parse_sequence("laser " + ns_literal(parse_si(o.init, "time")));
  const auto rho0 = lindblad::DensityMatrix::maximally_mixed(model.dimension());
  const auto after_init = seq::run_program(compiler, compiler.compile(init), rho0).final_state;
  const auto after_swap = seq::run_program(compiler, compiler.compile(seq::swap_gate({a, b}, n)), after_init).final_state;

  auto w = make_writer(ctx,
                       {"electron_line", "nuclear_line", "initial_electron_polarization", "final_nuclear_polarization",
                        "final_electron_polarization"},
                       "swap-polarize", cfg.hash, o.common);
  w.row({a, n, csv::format_number(site_polarization(model, after_init, eline)),
         csv::format_number(site_polarization(model, after_swap, nline)),
         csv::format_number(site_polarization(model, after_swap, eline))});
  emit(ctx, o.common, w);
  return 0;
}

struct FitOptions {
  CommonOptions common;
  std::string in, kind = "rabi";
};

int cmd_fit(const Context& ctx, const FitOptions& o) {
  const auto trace = csv::read_trace(o.in);
  analysis::FitResult fit;
  if (o.kind == "rabi") fit = analysis::fit_damped_sinusoid(trace, analysis::SinusoidModel::kSin);
  else if (o.kind == "ramsey") fit = analysis::fit_damped_sinusoid(trace, analysis::SinusoidModel::kCos);
  else if (o.kind == "echo" || o.kind == "t1") fit = analysis::fit_exp_decay(trace);
  else config_error("--kind must be rabi, ramsey, echo or t1");

  auto w = make_writer(ctx, {"name", "value", "sigma"}, "fit", model::fnv1a_hex(read_file(o.in)), o.common);
  w.meta("model", fit.model_name);
  w.meta("converged", fit.converged ? "true" : "false");
  w.meta("underdetermined", fit.underdetermined ? "true" : "false");
  w.meta("degenerate", fit.degenerate ? "true" : "false");
  w.meta("iterations", std::to_string(fit.iterations));
  w.meta("residual_norm", csv::format_number(fit.residual_norm));
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    w.row({fit.names[i], csv::format_number(fit.values[i]), csv::format_number(fit.sigmas[i])});
  }
  std::vector<std::pair<std::string, double>> derived;
  if (o.kind == "rabi") {
    derived.emplace_back("F_pi", analysis::gate_fidelity(fit.param("T_pi"), fit.param("T_dec")));
  } else if (o.kind == "ramsey") {
    derived.emplace_back("T2_star", fit.param("T_dec"));
    derived.emplace_back("fringe_frequency_Hz", std::abs(fit.param("omega")) / kTwoPi);
  } else {
    derived.emplace_back(o.kind == "echo" ? "T2" : "T1", fit.param("T"));
  }
  for (const auto& [k, v] : derived) w.row({k, csv::format_number(v), ""});
  w.row({"converged", fit.converged ? "1" : "0", ""});
  emit(ctx, o.common, w);

  ctx.err << "fit " << o.kind << ": converged=" << (fit.converged ? "true" : "false");
  for (const auto& [k, v] : derived) ctx.err << " " << k << "=" << csv::format_number(v);
  if (fit.underdetermined) ctx.err << " (underdetermined)";
  if (fit.degenerate) ctx.err << " (degenerate)";
  ctx.err << "\n";
  return 0;
}

int report(const Context& ctx, const Error& e) {
  ctx.err << "error: kind=" << to_string(e.kind()) << " module=" << e.module() << ": " << e.what() << "\n";
  return e.is_input_error() ? 2 : 3;
}

}  // namespace

double parse_si(const std::string& text, const std::string& dimension) {
  static const std::map<std::string, std::map<std::string, double>> units = {
      {"frequency", {{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}, {"GHz", 1e9}}},
      {"field", {{"T", 1.0}, {"mT", 1e-3}, {"uT", 1e-6}, {"G", 1e-4}}},
      {"time", {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}}},
  };
  const auto table = units.find(dimension);
  if (table == units.end()) config_error("unknown quantity dimension '" + dimension + "'");
  const std::string s = trim(text);
  const char* first = s.data();
  if (!s.empty() && *first == '+') ++first;
  double v = 0.0;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || !std::isfinite(v)) config_error("cannot read " + dimension + " value '" + text + "'");
  const std::string unit = trim(std::string(res.ptr, s.data() + s.size()));
  if (unit.empty()) return v;
  const auto u = table->second.find(unit);
  if (u == table->second.end()) config_error("unknown " + dimension + " unit '" + unit + "' in '" + text + "'");
  return v * u->second;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Context ctx{args, out, err};
  CLI::App app{"spindyn: spin-defect photodynamics and pulse-sequence simulator"};
  app.name("spindyn");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  OdmrOptions odmr;
  auto* c_odmr = app.add_subcommand("odmr", "CW ODMR spectrum");
  add_common(c_odmr, odmr.common, true);
  c_odmr->add_option("--from", odmr.from)->capture_default_str();
  c_odmr->add_option("--to", odmr.to)->capture_default_str();
  c_odmr->add_option("--points", odmr.points)->capture_default_str();
  c_odmr->add_option("--amp", odmr.amp, "MW Rabi frequency")->capture_default_str();
  c_odmr->add_option("--power", odmr.power, "laser power (relative)")->capture_default_str();
  c_odmr->add_option("--block", odmr.block, "restrict the MW drive to one block");
  c_odmr->add_option("--linewidth", odmr.linewidth, "FWHM for stick-spectrum models")->capture_default_str();

  OdnmrOptions odnmr;
  auto* c_odnmr = app.add_subcommand("odnmr", "CW ODNMR spectrum under a selective MW drive");
  add_common(c_odnmr, odnmr.common, true);
  c_odnmr->add_option("--line", odnmr.line, "electron transition held on resonance")->required();
  c_odnmr->add_option("--from", odnmr.from)->capture_default_str();
  c_odnmr->add_option("--to", odnmr.to)->capture_default_str();
  c_odnmr->add_option("--points", odnmr.points)->capture_default_str();
  c_odnmr->add_option("--rf-amp", odnmr.rf_amp)->capture_default_str();
  c_odnmr->add_option("--mw-amp", odnmr.mw_amp, "default: the line's rabi_Hz");
  c_odnmr->add_option("--power", odnmr.power)->capture_default_str();

  FieldmapOptions fmap;
  auto* c_fmap = app.add_subcommand("fieldmap", "transition frequencies versus field");
  add_common(c_fmap, fmap.common, false);
  c_fmap->add_option("--from", fmap.from)->capture_default_str();
  c_fmap->add_option("--to", fmap.to)->capture_default_str();
  c_fmap->add_option("--steps", fmap.steps)->capture_default_str();
  c_fmap->add_option("--axis", fmap.axis)->capture_default_str();

  std::map<std::string, PulseOptions> pulse;
  std::map<std::string, CLI::App*> pulse_cmds;
  const std::vector<std::pair<std::string, std::string>> pulse_kinds = {
      {"rabi", "Rabi oscillation versus pulse duration"},
      {"ramsey", "Ramsey fringes versus free evolution"},
      {"echo", "Hahn echo decay (x = total free evolution 2 tau)"},
      {"t1", "population recovery versus wait"}};
  for (const auto& [name, help] : pulse_kinds) {
    auto& po = pulse[name];
    auto* c = app.add_subcommand(name, help);
    add_common(c, po.common, true);
    c->add_option("--line", po.line, "addressed transition");
    c->add_option("--from", po.from)->capture_default_str();
    c->add_option("--to", po.to)->capture_default_str();
    c->add_option("--points", po.points)->capture_default_str();
    c->add_option("--amp", po.amp, "Rabi frequency override");
    c->add_option("--detuning", po.detuning, "drive detuning on --line");
    c->add_option("--init", po.init, "initialization laser")->capture_default_str();
    c->add_option("--readout", po.readout, "readout laser")->capture_default_str();
    c->add_option("--prep", po.prep, "statements after initialization");
    c->add_option("--map", po.map, "statements before readout");
    c->add_option("--sequence", po.sequence, "sequence file replacing the built-in program");
    c->add_option("--noise", po.noise, "Gaussian noise on photon counts (seeded)")->capture_default_str();
    pulse_cmds[name] = c;
  }

  SwapOptions swap;
  auto* c_swap = app.add_subcommand("swap-polarize", "transfer electron polarization to a nucleus");
  add_common(c_swap, swap.common, true);
  c_swap->add_option("--electron", swap.electron, "conditional electron line");
  c_swap->add_option("--electron-alt", swap.electron_alt, "partner electron line");
  c_swap->add_option("--nuclear", swap.nuclear, "conditional nuclear line");
  c_swap->add_option("--init", swap.init)->capture_default_str();
  c_swap->add_flag("--reverse", swap.reverse, "condition on the partner electron line");

  FitOptions fit;
  auto* c_fit = app.add_subcommand("fit", "fit a trace CSV (x,y[,y_err])");
  c_fit->add_option("--in", fit.in, "input CSV")->required();
  c_fit->add_option("--kind", fit.kind, "rabi, ramsey, echo or t1")->capture_default_str();
  c_fit->add_option("--out", fit.common.out_path, "output CSV path (default: stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_odmr->parsed()) return cmd_odmr(ctx, odmr);
    if (c_odnmr->parsed()) return cmd_odnmr(ctx, odnmr);
    if (c_fmap->parsed()) return cmd_fieldmap(ctx, fmap);
    for (const auto& [name, c] : pulse_cmds)
      if (c->parsed()) return cmd_pulse(ctx, name, pulse[name]);
    if (c_swap->parsed()) return cmd_swap(ctx, swap);
    if (c_fit->parsed()) return cmd_fit(ctx, fit);
  } catch (const Error& e) {
    return report(ctx, e);
  } catch (const std::exception& e) {
    err << "error: kind=internal module=unknown: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace spindyn::cli
