#include "spindyn/sequences.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spindyn;
using namespace spindyn::seq;

namespace {

// Secular S = 1/2 with one 13C at 300 MHz and no relaxation. Basis order
// (e, n): (+,+), (+,-), (-,+), (-,-).
photo::LevelModel closed_register() {
  photo::RegisterParams p;
  p.manifold.electron = spin::SpinSpecies::electron(0.5, 2.0 * spin::kBohrHzPerTesla);
  p.manifold.nuclei.push_back({spin::nuclear_species("13C"), spin::HyperfineTensor::secular(300e6), std::nullopt, "c13"});
  p.manifold.label = "e";
  p.field_T = Vec3(0, 0, 0.0715);
  auto m = photo::build_register_model(p);
  auto add = [&](const std::string& label, const std::string& site, const std::string& other, double value, double rabi) {
    photo::TransitionLine line;
    line.label = label;
    line.block = "e";
    line.site = site;
    line.conditions = {{other, value}};
    line.rabi_Hz = rabi;
    m.add_transition(line);
  };
  add("III-2", "e", "c13", -0.5, 10e6);
  add("III-4", "e", "c13", 0.5, 10e6);
  add("fn", "c13", "e", 0.5, 833e3);
  add("fn_alt", "c13", "e", -0.5, 833e3);
  return m;
}

RunResult run(const photo::LevelModel& model, const std::string& text, const lindblad::DensityMatrix& rho0,
              const SweepPoint& point = {}) {
  Compiler c(model);
  return run_program(c, c.compile(parse_sequence(text), point), rho0);
}

double nuclear_polarization(const lindblad::DensityMatrix& rho) {
  const double up = rho.population(0) + rho.population(2);
  const double down = rho.population(1) + rho.population(3);
  return (up - down) / (up + down);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("parse: statements and sweeps") {
  const auto seq = parse_sequence("laser 10us\nrf pi @ fn\nmw pi @ III-2\nlaser 5us");
  CHECK(seq.statements.size() == 4);
  CHECK(seq.variables().empty());
  CHECK(expand_sweeps(seq).size() == 1);

  const auto ramsey = parse_sequence("laser 5us\nrf pi/2 @ fn; wait tau; rf pi/2 @ fn\nlaser 1us\nsweep tau 0us..30us 61");
  const auto points = expand_sweeps(ramsey);
  REQUIRE(points.size() == 61);
  CHECK(points.front().at("tau") == 0.0);
  CHECK(points.back().at("tau") == 30e-6);
  CHECK(points[2].at("tau") == doctest::Approx(1e-6));
}

TEST_CASE("parse: options and comments") {
  const auto seq = parse_sequence("mw 1.5 rad @ III-4 phase 1.57 amp 2e6  # comment\n\n rf 250ns @ fn\nlaser 1ms power 0.5");
  REQUIRE(seq.statements.size() == 3);
  const auto& p = std::get<Pulse>(seq.statements[0]);
  CHECK_FALSE(p.rf);
  CHECK(std::get<Angle>(p.extent).value() == 1.5);
  CHECK(*p.phase == 1.57);
  CHECK(*p.amplitude == 2e6);
  const auto& r = std::get<Pulse>(seq.statements[1]);
  CHECK(std::get<Quantity>(std::get<Duration>(r.extent).value).seconds() == doctest::Approx(250e-9));
  CHECK(*std::get<Laser>(seq.statements[2]).power == 0.5);
}

TEST_CASE("parse: errors") {
  try {
    parse_sequence("laser 10us\nmw pi III-2\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSyntax);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
  CHECK(kind_of([] { parse_sequence("wait 3 parsecs"); }) == ErrorKind::kSyntax);
  CHECK(kind_of([] { parse_sequence("warp 3us"); }) == ErrorKind::kSyntax);
  CHECK(kind_of([] { parse_sequence("mw pi @ a amp 1 amp 2"); }) == ErrorKind::kSyntax);
  CHECK(kind_of([] { parse_sequence("wait tau"); }) == ErrorKind::kUndeclaredVariable);
  CHECK(kind_of([] { parse_sequence("wait t\nsweep t 0us..1us 3\nsweep t 0us..2us 3"); }) ==
        ErrorKind::kDuplicateSweep);
}

TEST_CASE("parse/print round trip" * doctest::description("seeded random programs")) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 5);
  std::uniform_real_distribution<double> real(0.0, 100.0);
  const char* units[] = {"ns", "us", "ms"};
  const char* labels[] = {"III-2", "fn", "a_b.c", "x+1"};
  for (int trial = 0; trial < 200; ++trial) {
    PulseSequence seq;
    const bool swept = rng() % 2;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) {
      auto dur = [&]() -> Duration {
        if (swept && rng() % 3 == 0) return {std::string("tau")};
        return {Quantity{std::round(real(rng) * 1000.0) / 1000.0, units[rng() % 3]}};
      };
      switch (pick(rng)) {
        case 0: seq.statements.push_back(Laser{dur(), rng() % 2 ? std::optional<double>(real(rng)) : std::nullopt}); break;
        case 1: seq.statements.push_back(Wait{dur()}); break;
        default: {
          Pulse p;
          p.rf = rng() % 2;
          const int e = static_cast<int>(rng() % 4);
          if (e == 0) p.extent = Angle{Angle::Kind::kPi, 0.0};
          else if (e == 1) p.extent = Angle{Angle::Kind::kHalfPi, 0.0};
          else if (e == 2) p.extent = Angle{Angle::Kind::kRadians, real(rng) - 50.0};
          else p.extent = dur();
          p.label = labels[rng() % 4];
          if (rng() % 2) p.phase = real(rng) / 7.0;
          if (rng() % 2) p.amplitude = real(rng) * 1e4;
          seq.statements.push_back(p);
        }
      }
    }
    if (swept) seq.statements.push_back(Sweep{"tau", Quantity{0.0, "us"}, Quantity{real(rng), "ns"}, 1 + static_cast<int>(rng() % 9)});
    const std::string text = print_sequence(seq);
    CAPTURE(text);
    const auto back = parse_sequence(text);
    CHECK(back == seq);
    CHECK(print_sequence(back) == text);
  }
}

TEST_CASE("compile: durations and segments") {
  const auto model = closed_register();
  const auto prog = compile(parse_sequence("laser 10us\nrf pi @ fn\nmw pi @ III-2\nwait 2us\nlaser 5us"), model);
  REQUIRE(prog.segments.size() == 5);
  CHECK(prog.segments[1].duration == doctest::Approx(0.5 / 833e3).epsilon(1e-12));
  CHECK(prog.segments[1].duration == doctest::Approx(0.6e-6).epsilon(1e-3));
  CHECK(prog.segments[2].duration == doctest::Approx(0.05e-6));
  CHECK(prog.segments[3].hamiltonian.isZero(0.0));
  CHECK(prog.segments[3].channels.empty());
  REQUIRE(prog.readout.has_value());
  CHECK(*prog.readout == 4);
  CHECK(prog.total_duration == doctest::Approx(17e-6 + 0.5 / 833e3 + 0.05e-6));

  CHECK(kind_of([&] { compile(parse_sequence("mw pi @ nowhere"), model); }) == ErrorKind::kUnknownLabel);
  CHECK(kind_of([&] { compile(parse_sequence("rf pi @ III-2"), model); }) == ErrorKind::kConfiguration);
  CHECK(kind_of([&] { compile(parse_sequence("mw pi @ fn"), model); }) == ErrorKind::kConfiguration);
  CHECK(kind_of([&] { compile(parse_sequence("mw pi @ III-2 amp 0"), model); }) == ErrorKind::kConfiguration);
  CHECK(kind_of([&] { compile(parse_sequence("wait t\nsweep t 0us..1us 2"), model, {{"t", -1e-6}}); }) == ErrorKind::kDomain);
}

TEST_CASE("sweeps: count and affine total duration") {
  const auto model = closed_register();
  const auto seq = parse_sequence("laser 1us\nrf pi/2 @ fn; wait tau; rf pi @ fn; wait tau; rf pi/2 @ fn\nlaser 1us\nsweep tau 0us..30us 61");
  const auto points = expand_sweeps(seq);
  REQUIRE(points.size() == 61);
  Compiler c(model);
  std::vector<double> totals;
  for (const auto& pt : points) totals.push_back(c.compile(seq, pt).total_duration);
  for (std::size_t k = 0; k < totals.size(); ++k) {
    CHECK(totals[k] == doctest::Approx(totals[0] + 2.0 * points[k].at("tau")).epsilon(1e-12));
  }

  const auto grid = expand_sweeps(parse_sequence("wait a; wait b\nsweep a 0us..1us 3\nsweep b 0ns..5ns 4"));
  REQUIRE(grid.size() == 12);
  CHECK(grid[0].at("a") == 0.0);
  CHECK(grid[3].at("a") == 0.0);
  CHECK(grid[4].at("a") == doctest::Approx(0.5e-6));
  CHECK(grid[3].at("b") == 5e-9);
}

TEST_CASE("pulses: pi flips, echo at zero delay is the identity on populations") {
  const auto model = closed_register();
  RVector pops(4);
  pops << 0.1, 0.2, 0.3, 0.4;
  const auto rho0 = lindblad::DensityMatrix::diagonal(pops);

  auto flipped = run(model, "mw pi @ III-4", rho0).final_state;
  CHECK(flipped.population(0) == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(flipped.population(2) == doctest::Approx(0.1).epsilon(1e-8));
  CHECK(flipped.population(1) == doctest::Approx(0.2).epsilon(1e-8));

  auto echo = run(model, "mw pi/2 @ III-4; wait tau; mw pi @ III-4; wait tau; mw pi/2 @ III-4\nsweep tau 0us..1us 2", rho0,
                  {{"tau", 0.0}}).final_state;
  for (Index k = 0; k < 4; ++k) CHECK(std::abs(echo.population(k) - pops(k)) < 1e-6);

  // negative angles rotate the other way: pi/2 then -pi/2 undoes it
  auto undo = run(model, "rf pi/2 @ fn; rf -1.5707963267948966 rad @ fn", rho0).final_state;
  CHECK(lindblad::trace_distance(undo, rho0) < 1e-9);
}

TEST_CASE("selective pulses leave the other hyperfine subspace alone") {
  const auto model = closed_register();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    CMatrix a(4, 4);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) a(i, j) = cdouble(g(rng), g(rng));
    CMatrix rho = a * a.adjoint();
    rho /= rho.trace();
    const lindblad::DensityMatrix rho0(rho);
    const auto out = run(model, "mw pi @ III-2 phase 0.3", rho0).final_state;
    // III-4 subspace: n = +1/2, indices 0 and 2
    for (Index i : {0, 2})
      for (Index j : {0, 2}) CHECK(std::abs(out.entries()(i, j) - rho(i, j)) < 1e-9);
  }
}

TEST_CASE("swap: electron polarization moves onto the nucleus") {
  const auto model = closed_register();
  Compiler c(model);
  const auto swap = c.compile(swap_gate({"III-4", "III-2"}, "fn"));
  CHECK(swap.segments.size() == 3);

  RVector pops(4);
  pops << 0.0, 0.0, 0.5, 0.5;  // electron down, nucleus unpolarized
  const auto rho0 = lindblad::DensityMatrix::diagonal(pops);
  const auto out = run_program(c, swap, rho0).final_state;
  CHECK(std::abs(nuclear_polarization(out) - (-1.0)) < 1e-6);
  CHECK(out.check().ok);

  // using the partner line conditions on the other nuclear state: sign flips
  const auto rev = run_program(c, c.compile(swap_gate({"III-2", "III-4"}, "fn")), rho0).final_state;
  CHECK(std::abs(nuclear_polarization(rev) - 1.0) < 1e-6);

  // the construction is its own inverse on populations
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    RVector p(4);
    for (Index k = 0; k < 4; ++k) p(k) = u(rng);
    p /= p.sum();
    const auto start = lindblad::DensityMatrix::diagonal(p);
    const auto once = run_program(c, swap, start).final_state;
    const auto twice = run_program(c, swap, once).final_state;
    CHECK(lindblad::trace_distance(twice, start) < 1e-6);
  }

  CHECK(kind_of([] { swap_gate({"a", "a"}, "n"); }) == ErrorKind::kConfiguration);
  CHECK(kind_of([] { swap_gate({"a", "b"}, "a"); }) == ErrorKind::kConfiguration);
  CHECK(kind_of([] { swap_gate({"", "b"}, "n"); }) == ErrorKind::kConfiguration);
}

TEST_CASE("readout integrates photons only over the last laser statement") {
  auto cfg_model = closed_register();
  Compiler c(cfg_model);
  const auto rho0 = lindblad::DensityMatrix::maximally_mixed(4);
  const auto a = run_program(c, c.compile(parse_sequence("laser 1us")), rho0);
  const auto b = run_program(c, c.compile(parse_sequence("laser 1us\nlaser 2us")), rho0);
  CHECK(a.photons > 0.0);
  CHECK(b.photons > a.photons);
  const auto none = run_program(c, c.compile(parse_sequence("wait 1us")), rho0);
  CHECK(none.photons == 0.0);
  CHECK(b.max_trace_error < 1e-9);
  CHECK(b.min_eigenvalue > -1e-8);
}
