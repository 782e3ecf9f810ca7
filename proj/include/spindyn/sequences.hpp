#pragma once

// Pulse-sequence DSL. One statement per line (`;` also separates), `#` starts
// a comment:
//
//   laser 10us [power 0.5]
//   mw pi @ III-2 [phase 1.57] [amp 2e6]
//   rf 2us @ fn
//   wait tau
//   sweep tau 0us..30us 61
//
// Selective pulses act only on the pairs of the named model transition, in
// the rotating-wave approximation, with the unperturbed eigenbasis as the
// interaction picture. Only the last laser statement is integrated as the
// photon readout.

#include "spindyn/common.hpp"
#include "spindyn/lindblad.hpp"
#include "spindyn/photodynamics.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spindyn::seq {

// Duration literal kept as written so that printing round-trips exactly.
struct Quantity {
  double value = 0.0;
  std::string unit = "us";  // ns, us or ms

  double seconds() const;
  bool operator==(const Quantity&) const = default;
};

struct Duration {
  std::variant<Quantity, std::string> value;  // literal or sweep variable
  bool operator==(const Duration&) const = default;
};

struct Angle {
  enum class Kind { kPi, kHalfPi, kRadians };
  Kind kind = Kind::kPi;
  double radians = 0.0;  // used for kRadians

  double value() const;
  bool operator==(const Angle&) const = default;
};

struct Laser {
  Duration duration;
  std::optional<double> power;
  bool operator==(const Laser&) const = default;
};

struct Pulse {
  bool rf = false;  // mw otherwise
  std::variant<Angle, Duration> extent;
  std::string label;
  std::optional<double> phase;      // rad
  std::optional<double> amplitude;  // Rabi frequency in Hz
  bool operator==(const Pulse&) const = default;
};

struct Wait {
  Duration duration;
  bool operator==(const Wait&) const = default;
};

struct Sweep {
  std::string variable;
  Quantity start;
  Quantity stop;
  int steps = 1;
  bool operator==(const Sweep&) const = default;
};

using Statement = std::variant<Laser, Pulse, Wait, Sweep>;

struct PulseSequence {
  std::vector<Statement> statements;

  std::vector<std::string> variables() const;  // in declaration order
  bool operator==(const PulseSequence&) const = default;
};

PulseSequence parse_sequence(std::string_view text);
std::string print_sequence(const PulseSequence& seq);
PulseSequence concat(const PulseSequence& a, const PulseSequence& b);

// Variable values in seconds.
using SweepPoint = std::map<std::string, double>;

// Cartesian product of all sweeps, first declared sweep slowest; a program
// without sweeps has a single empty point.
std::vector<SweepPoint> expand_sweeps(const PulseSequence& seq);

// Electron pi on `electron_lines.first`, nuclear pi on `nuclear_line`,
// electron pi on `electron_lines.first` again. The second electron label is
// the partner line; swapping the pair conditions on the other nuclear state.
PulseSequence swap_gate(const std::pair<std::string, std::string>& electron_lines, const std::string& nuclear_line);

struct CompileOptions {
  std::map<std::string, double, std::less<>> detuning_Hz;  // per transition label
};

struct CompiledProgram {
  std::vector<lindblad::Segment> segments;       // eigenbasis, interaction picture
  std::vector<std::size_t> statement_of;         // statement index per segment
  std::optional<std::size_t> readout;            // segment index of the photon readout
  double total_duration = 0.0;
  SweepPoint point;
};

class Compiler {
 public:
  explicit Compiler(photo::LevelModel model, CompileOptions options = {});

  CompiledProgram compile(const PulseSequence& seq, const SweepPoint& point = {}) const;

  const photo::LevelModel& model() const { return model_; }
  const photo::Eigenframe& frame() const { return frame_; }

 private:
  photo::LevelModel model_;
  CompileOptions options_;
  photo::Eigenframe frame_;
};

CompiledProgram compile(const PulseSequence& seq, const photo::LevelModel& model, const SweepPoint& point = {},
                        const CompileOptions& options = {});

struct RunResult {
  double photons = 0.0;                   // integrated over the readout segment
  lindblad::DensityMatrix before_readout; // model product basis
  lindblad::DensityMatrix final_state;    // model product basis
  double max_trace_error = 0.0;
  double min_eigenvalue = 1.0;
};

// Runs a compiled program from `rho0` (model product basis).
RunResult run_program(const Compiler& compiler, const CompiledProgram& program, const lindblad::DensityMatrix& rho0);

}  // namespace spindyn::seq
