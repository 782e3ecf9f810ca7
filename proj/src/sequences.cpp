#include "spindyn/sequences.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace spindyn::seq {
namespace {

constexpr const char* kModule = "sequences";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

const std::set<std::string, std::less<>> kKeywords = {"laser", "mw", "rf", "wait", "sweep", "pi", "power", "phase", "amp", "rad"};

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  PulseSequence parse() {
    PulseSequence seq;
    while (true) {
      skip_space();
      if (eof()) break;
      if (peek() == '#') {
        skip_comment();
        continue;
      }
      if (peek() == '\n' || peek() == ';' || peek() == '\r') {
        advance();
        continue;
      }
      seq.statements.push_back(statement());
      skip_space();
      if (peek() == '#') skip_comment();
      if (!eof() && peek() != '\n' && peek() != ';' && peek() != '\r') error("unexpected text after statement");
    }
    check_variables(seq);
    return seq;
  }

 private:
  struct Ref {
    std::string name;
    int line, col;
  };

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::vector<Ref> refs_;
  std::vector<Ref> sweeps_;

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
  void advance() {
    if (eof()) return;
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  [[noreturn]] void error(const std::string& what, ErrorKind kind = ErrorKind::kSyntax) const {
    error_at(what, line_, col_, kind);
  }
  [[noreturn]] static void error_at(const std::string& what, int line, int col, ErrorKind kind) {
    fail(kind, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
  }

  void skip_space() {
    while (peek() == ' ' || peek() == '\t') advance();
  }
  void skip_comment() {
    while (!eof() && peek() != '\n') advance();
  }

  static bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
  static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
  static bool label_char(char c) { return ident_char(c) || c == '-' || c == '+' || c == '.' || c == ':'; }

  std::string word() {
    std::string out;
    if (!ident_start(peek())) return out;
    while (ident_char(peek())) {
      out.push_back(peek());
      advance();
    }
    return out;
  }

  double number() {
    const std::size_t start = pos_;
    const int col = col_;
    if (peek() == '+' || peek() == '-') advance();
    bool digits = false;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      advance();
      digits = true;
    }
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        advance();
        digits = true;
      }
    }
    if (digits && (peek() == 'e' || peek() == 'E')) {
      const char n1 = peek(1);
      const char n2 = peek(2);
      if (std::isdigit(static_cast<unsigned char>(n1)) ||
          ((n1 == '+' || n1 == '-') && std::isdigit(static_cast<unsigned char>(n2)))) {
        advance();
        if (peek() == '+' || peek() == '-') advance();
        while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
      }
    }
    if (!digits) error_at("expected a number", line_, col, ErrorKind::kSyntax);
    std::string_view text = s_.substr(start, pos_ - start);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
      error_at("malformed number", line_, col, ErrorKind::kSyntax);
    }
    return v;
  }

  std::string unit() {
    skip_space();
    const int col = col_;
    const std::string u = word();
    if (u != "ns" && u != "us" && u != "ms") error_at("expected a time unit (ns, us, ms)", line_, col, ErrorKind::kSyntax);
    return u;
  }

  Quantity quantity() {
    skip_space();
    const int col = col_;
    Quantity q;
    q.value = number();
    q.unit = unit();
    if (q.value < 0.0) error_at("durations must be nonnegative", line_, col, ErrorKind::kSyntax);
    return q;
  }

  std::string variable_name() {
    const int col = col_;
    const std::string name = word();
    if (name.empty()) error("expected a variable name");
    if (kKeywords.count(name)) error_at("'" + name + "' is a keyword, not a variable", line_, col, ErrorKind::kSyntax);
    return name;
  }

  Duration duration() {
    skip_space();
    if (ident_start(peek())) {
      const int line = line_, col = col_;
      const std::string name = variable_name();
      refs_.push_back({name, line, col});
      return {name};
    }
    return {quantity()};
  }

  Statement statement() {
    const int col = col_;
    const std::string kw = word();
    if (kw == "laser") return laser();
    if (kw == "mw" || kw == "rf") return pulse(kw == "rf");
    if (kw == "wait") return Wait{duration()};
    if (kw == "sweep") return sweep();
    error_at(kw.empty() ? "expected a statement" : "unknown statement '" + kw + "'", line_, col, ErrorKind::kSyntax);
  }

  Laser laser() {
    Laser l;
    l.duration = duration();
    skip_space();
    if (ident_start(peek())) {
      const int col = col_;
      const std::string opt = word();
      if (opt != "power") error_at("unknown laser option '" + opt + "'", line_, col, ErrorKind::kSyntax);
      skip_space();
      l.power = number();
      if (*l.power < 0.0) error_at("laser power must be nonnegative", line_, col, ErrorKind::kSyntax);
    }
    return l;
  }

  Pulse pulse(bool rf) {
    Pulse p;
    p.rf = rf;
    skip_space();
    if (ident_start(peek())) {
      const std::size_t save_pos = pos_;
      const int save_line = line_, save_col = col_;
      const std::string w = word();
      if (w == "pi") {
        if (peek() == '/') {
          advance();
          if (peek() != '2' || ident_char(peek(1))) error("only pi and pi/2 are named angles");
          advance();
          p.extent = Angle{Angle::Kind::kHalfPi, 0.0};
        } else {
          p.extent = Angle{Angle::Kind::kPi, 0.0};
        }
      } else {
        pos_ = save_pos;
        line_ = save_line;
        col_ = save_col;
        p.extent = duration();
      }
    } else {
      const int col = col_;
      const double v = number();
      skip_space();
      const std::size_t save_pos = pos_;
      const int save_col = col_;
      const std::string w = word();
      if (w == "rad") {
        p.extent = Angle{Angle::Kind::kRadians, v};
      } else {
        pos_ = save_pos;
        col_ = save_col;
        if (w != "ns" && w != "us" && w != "ms") error_at("expected an angle or a duration", line_, col, ErrorKind::kSyntax);
        if (v < 0.0) error_at("durations must be nonnegative", line_, col, ErrorKind::kSyntax);
        p.extent = Duration{Quantity{v, unit()}};
      }
    }
    skip_space();
    if (peek() != '@') error("expected '@' before the transition label");
    advance();
    skip_space();
    while (label_char(peek())) {
      p.label.push_back(peek());
      advance();
    }
    if (p.label.empty()) error("expected a transition label");
    while (true) {
      skip_space();
      if (!ident_start(peek())) break;
      const int col = col_;
      const std::string opt = word();
      skip_space();
      if (opt == "phase") {
        if (p.phase) error_at("phase given twice", line_, col, ErrorKind::kSyntax);
        p.phase = number();
      } else if (opt == "amp") {
        if (p.amplitude) error_at("amp given twice", line_, col, ErrorKind::kSyntax);
        p.amplitude = number();
        if (*p.amplitude < 0.0) error_at("amplitude must be nonnegative", line_, col, ErrorKind::kSyntax);
      } else {
        error_at("unknown pulse option '" + opt + "'", line_, col, ErrorKind::kSyntax);
      }
    }
    return p;
  }

  Sweep sweep() {
    Sweep s;
    skip_space();
    const int line = line_, col = col_;
    s.variable = variable_name();
    sweeps_.push_back({s.variable, line, col});
    s.start = quantity();
    skip_space();
    if (!(peek() == '.' && peek(1) == '.')) error("expected '..' between sweep bounds");
    advance();
    advance();
    s.stop = quantity();
    skip_space();
    const int scol = col_;
    const double steps = number();
    if (steps < 1.0 || steps != std::floor(steps) || steps > 1e7) {
      error_at("sweep step count must be a positive integer", line_, scol, ErrorKind::kSyntax);
    }
    s.steps = static_cast<int>(steps);
    return s;
  }

  void check_variables(const PulseSequence&) const {
    std::set<std::string> declared;
    for (const auto& s : sweeps_) {
      if (!declared.insert(s.name).second) {
        error_at("sweep variable '" + s.name + "' is declared twice", s.line, s.col, ErrorKind::kDuplicateSweep);
      }
    }
    for (const auto& r : refs_) {
      if (!declared.count(r.name)) {
        error_at("variable '" + r.name + "' is not declared by a sweep", r.line, r.col, ErrorKind::kUndeclaredVariable);
      }
    }
  }
};

std::string print_quantity(const Quantity& q) { return format_number(q.value) + q.unit; }

std::string print_duration(const Duration& d) {
  if (const auto* q = std::get_if<Quantity>(&d.value)) return print_quantity(*q);
  return std::get<std::string>(d.value);
}

double resolve(const Duration& d, const SweepPoint& point) {
  if (const auto* q = std::get_if<Quantity>(&d.value)) return q->seconds();
  const auto& name = std::get<std::string>(d.value);
  const auto it = point.find(name);
  if (it == point.end()) fail(ErrorKind::kUndeclaredVariable, "no value for sweep variable '" + name + "'");
  return it->second;
}

}  // namespace

// Division by an exact power of ten keeps literals such as 30us equal to 30e-6.
double Quantity::seconds() const {
  if (unit == "ns") return value / 1e9;
  if (unit == "us") return value / 1e6;
  if (unit == "ms") return value / 1e3;
  fail(ErrorKind::kSyntax, "unknown time unit '" + unit + "'");
}

double Angle::value() const {
  switch (kind) {
    case Kind::kPi: return kPi;
    case Kind::kHalfPi: return 0.5 * kPi;
    case Kind::kRadians: return radians;
  }
  return 0.0;
}

std::vector<std::string> PulseSequence::variables() const {
  std::vector<std::string> out;
  for (const auto& s : statements)
    if (const auto* sw = std::get_if<Sweep>(&s)) out.push_back(sw->variable);
  return out;
}

PulseSequence parse_sequence(std::string_view text) { return Parser(text).parse(); }

std::string print_sequence(const PulseSequence& seq) {
  std::string out;
  for (const auto& st : seq.statements) {
    if (const auto* l = std::get_if<Laser>(&st)) {
      out += "laser " + print_duration(l->duration);
      if (l->power) out += " power " + format_number(*l->power);
    } else if (const auto* p = std::get_if<Pulse>(&st)) {
      out += p->rf ? "rf " : "mw ";
      if (const auto* a = std::get_if<Angle>(&p->extent)) {
        switch (a->kind) {
          case Angle::Kind::kPi: out += "pi"; break;
          case Angle::Kind::kHalfPi: out += "pi/2"; break;
          case Angle::Kind::kRadians: out += format_number(a->radians) + " rad"; break;
        }
      } else {
        out += print_duration(std::get<Duration>(p->extent));
      }
      out += " @ " + p->label;
      if (p->phase) out += " phase " + format_number(*p->phase);
      if (p->amplitude) out += " amp " + format_number(*p->amplitude);
    } else if (const auto* w = std::get_if<Wait>(&st)) {
      out += "wait " + print_duration(w->duration);
    } else {
      const auto& s = std::get<Sweep>(st);
      out += "sweep " + s.variable + " " + print_quantity(s.start) + ".." + print_quantity(s.stop) + " " +
             std::to_string(s.steps);
    }
    out += "\n";
  }
  return out;
}

PulseSequence concat(const PulseSequence& a, const PulseSequence& b) {
  PulseSequence out = a;
  out.statements.insert(out.statements.end(), b.statements.begin(), b.statements.end());
  return out;
}

std::vector<SweepPoint> expand_sweeps(const PulseSequence& seq) {
  std::vector<SweepPoint> points{SweepPoint{}};
  for (const auto& st : seq.statements) {
    const auto* s = std::get_if<Sweep>(&st);
    if (!s) continue;
    const double a = s->start.seconds();
    const double b = s->stop.seconds();
    std::vector<SweepPoint> next;
    next.reserve(points.size() * static_cast<std::size_t>(s->steps));
    for (const auto& p : points)
      for (int k = 0; k < s->steps; ++k) {
        SweepPoint q = p;
        q[s->variable] = s->steps == 1 ? a : (k + 1 == s->steps ? b : a + (b - a) * k / (s->steps - 1));
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

PulseSequence swap_gate(const std::pair<std::string, std::string>& electron_lines, const std::string& nuclear_line) {
  const auto& [a, b] = electron_lines;
  if (a.empty() || b.empty() || nuclear_line.empty()) fail(ErrorKind::kConfiguration, "SWAP labels must be non-empty");
  if (a == b) fail(ErrorKind::kConfiguration, "SWAP electron lines must differ, got '" + a + "' twice");
  if (nuclear_line == a || nuclear_line == b) {
    fail(ErrorKind::kConfiguration, "SWAP nuclear line '" + nuclear_line + "' repeats an electron line");
  }
  PulseSequence out;
  out.statements.push_back(Pulse{false, Angle{}, a, std::nullopt, std::nullopt});
  out.statements.push_back(Pulse{true, Angle{}, nuclear_line, std::nullopt, std::nullopt});
  out.statements.push_back(Pulse{false, Angle{}, a, std::nullopt, std::nullopt});
  return out;
}

// ---------------------------------------------------------------------------
// Compilation

Compiler::Compiler(photo::LevelModel model, CompileOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
  model_.validate();
  frame_ = photo::eigenframe(model_);
  for (const auto& [label, det] : options_.detuning_Hz) {
    (void)model_.transition(label);
    if (!std::isfinite(det)) fail(ErrorKind::kConfiguration, "non-finite detuning for '" + label + "'");
  }
}

CompiledProgram Compiler::compile(const PulseSequence& seq, const SweepPoint& point) const {
  CompiledProgram out;
  out.point = point;
  std::optional<std::size_t> readout_statement;
  for (std::size_t i = 0; i < seq.statements.size(); ++i)
    if (std::holds_alternative<Laser>(seq.statements[i])) readout_statement = i;

  const Index n = model_.dimension();
  const photo::RotatingFrame reference = photo::solve_frame(frame_, {});
  const CMatrix zero = CMatrix::Zero(n, n);

  for (std::size_t i = 0; i < seq.statements.size(); ++i) {
    const auto& st = seq.statements[i];
    lindblad::Segment seg;
    if (const auto* l = std::get_if<Laser>(&st)) {
      seg.duration = resolve(l->duration, point);
      const double power = l->power.value_or(1.0);
      seg.hamiltonian = zero;
      seg.channels = photo::secularize(frame_, model_.active_channels(power), reference.frame_Hz);
      seg.label = "laser";
    } else if (const auto* w = std::get_if<Wait>(&st)) {
      seg.duration = resolve(w->duration, point);
      seg.hamiltonian = zero;
      seg.channels = photo::secularize(frame_, model_.active_channels(0.0), reference.frame_Hz);
      seg.label = "wait";
    } else if (const auto* p = std::get_if<Pulse>(&st)) {
      const auto& line = model_.transition(p->label);
      if (p->rf != line.nuclear) {
        fail(ErrorKind::kConfiguration, std::string(p->rf ? "rf" : "mw") + " pulse addresses " +
                                            (line.nuclear ? "nuclear" : "electron") + " transition '" + line.label + "'");
      }
      const double rabi = p->amplitude.value_or(line.rabi_Hz);
      if (!(rabi >= 0.0)) fail(ErrorKind::kDomain, "pulse amplitude must be nonnegative");
      if (const auto* a = std::get_if<Angle>(&p->extent)) {
        if (rabi == 0.0) {
          fail(ErrorKind::kConfiguration, "angle on '" + line.label + "' needs a nonzero calibrated Rabi frequency");
        }
        seg.duration = std::abs(a->value()) / (kTwoPi * rabi);
      } else {
        seg.duration = resolve(std::get<Duration>(p->extent), point);
      }
      const auto det = options_.detuning_Hz.find(p->label);
      const double detuning = det == options_.detuning_Hz.end() ? 0.0 : det->second;
      double phase = p->phase.value_or(0.0);
      // A negative angle is a rotation about the opposite axis.
      if (const auto* a = std::get_if<Angle>(&p->extent); a && a->value() < 0.0) phase += kPi;
      const auto edges = photo::line_edges(model_, frame_, line, rabi, phase, detuning);
      const auto frame = photo::solve_frame(frame_, edges);
      seg.hamiltonian = photo::rotating_hamiltonian(frame_, frame);
      seg.channels = photo::secularize(frame_, model_.active_channels(0.0), frame.frame_Hz);
      seg.frame_offset_Hz = frame.frame_Hz - frame_.energies;
      seg.label = (p->rf ? "rf " : "mw ") + line.label;
    } else {
      continue;  // sweeps carry no time
    }
    if (!(seg.duration >= 0.0) || !std::isfinite(seg.duration)) {
      fail(ErrorKind::kDomain, "statement " + std::to_string(i + 1) + " has a negative duration");
    }
    out.total_duration += seg.duration;
    if (seg.duration == 0.0) continue;
    if (readout_statement && *readout_statement == i) out.readout = out.segments.size();
    out.segments.push_back(std::move(seg));
    out.statement_of.push_back(i);
  }
  return out;
}

CompiledProgram compile(const PulseSequence& seq, const photo::LevelModel& model, const SweepPoint& point,
                        const CompileOptions& options) {
  return Compiler(model, options).compile(seq, point);
}

// ---------------------------------------------------------------------------
// Execution

RunResult run_program(const Compiler& compiler, const CompiledProgram& program, const lindblad::DensityMatrix& rho0) {
  const auto& ef = compiler.frame();
  const auto& model = compiler.model();
  if (rho0.dimension() != model.dimension()) fail(ErrorKind::kInvalidModel, "initial state dimension does not match the model");
  RunResult out;
  auto track = [&](const lindblad::Trajectory& traj) {
    for (const auto& s : traj.states) {
      out.max_trace_error = std::max(out.max_trace_error, std::abs(s.trace() - cdouble(1.0, 0.0)));
      out.min_eigenvalue = std::min(out.min_eigenvalue, s.min_eigenvalue());
    }
  };

  const lindblad::DensityMatrix start(ef.to_eigen(rho0.entries()));
  const std::size_t split = program.readout.value_or(program.segments.size());
  const std::span<const lindblad::Segment> all(program.segments);

  const auto head = lindblad::evolve(start, all.subspan(0, split));
  track(head);
  const auto& before = head.final_state();
  out.before_readout = lindblad::DensityMatrix(ef.to_product(before.entries())).hermitized();

  if (program.readout) {
    const auto& seg = program.segments[split];
    const CMatrix generator = lindblad::liouvillian(seg.hamiltonian, seg.channels);
    const CVector integral = lindblad::integrate_action(generator, lindblad::vectorize(before.entries()), seg.duration);
    out.photons = std::max(0.0, (ef.to_eigen(model.collection) * lindblad::unvectorize(integral)).trace().real());
    lindblad::EvolveOptions opts;
    opts.start_time = head.times.back();
    const auto tail = lindblad::evolve(before, all.subspan(split), opts);
    track(tail);
    out.final_state = lindblad::DensityMatrix(ef.to_product(tail.final_state().entries())).hermitized();
  } else {
    out.final_state = out.before_readout;
  }
  if (out.max_trace_error > 1e-9 || out.min_eigenvalue < -1e-8) {
    fail(ErrorKind::kNumericalContract, "state left the physical set during the program (trace error " +
                                            std::to_string(out.max_trace_error) + ", min eigenvalue " +
                                            std::to_string(out.min_eigenvalue) + ")");
  }
  return out;
}

}  // namespace spindyn::seq
