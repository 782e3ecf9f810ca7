#include "oracles.hpp"
#include "spindyn/lindblad.hpp"
#include "spindyn/spin_core.hpp"

#include <doctest.h>

#include <random>

using namespace spindyn;
using namespace spindyn::lindblad;

namespace {

CMatrix ket_bra(Index n, Index i, Index j) {
  CMatrix m = CMatrix::Zero(n, n);
  m(i, j) = 1.0;
  return m;
}

CMatrix random_hermitian(std::mt19937_64& rng, Index n, double scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = cdouble(g(rng), g(rng));
  return 0.5 * scale * (a + a.adjoint());
}

CMatrix random_matrix(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = cdouble(g(rng), g(rng));
  return a;
}

DensityMatrix random_state(std::mt19937_64& rng, Index n) {
  const CMatrix a = random_matrix(rng, n);
  CMatrix rho = a * a.adjoint();
  rho /= rho.trace();
  return DensityMatrix(rho);
}

}  // namespace

TEST_CASE("liouvillian: zero generator") {
  const CMatrix l = liouvillian(CMatrix::Zero(3, 3), {});
  CHECK(l.rows() == 9);
  CHECK(l.norm() == 0.0);
}

TEST_CASE("liouvillian: trace annihilation and dimension errors") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    const Index n = 2 + k % 5;
    std::vector<LindbladChannel> ch = {{1e6 * (1 + k), random_matrix(rng, n), "a"}, {3e5, random_matrix(rng, n), "b"}};
    const CMatrix l = liouvillian(random_hermitian(rng, n, 1e6), ch);
    // vec(I)^dagger L = 0
    const CVector id = vectorize(CMatrix::Identity(n, n));
    CHECK((id.adjoint() * l).norm() < 1e-9 * l.norm());
  }
  std::vector<LindbladChannel> bad = {{1.0, CMatrix::Identity(3, 3), "bad"}};
  CHECK_THROWS_AS(liouvillian(CMatrix::Zero(2, 2), bad), Error);
}

TEST_CASE("amplitude damping follows exp(-Gamma t)") {
  const double gamma = 2.5e6;
  std::vector<LindbladChannel> ch = {{gamma, ket_bra(2, 0, 1), "decay"}};
  Segment s{0.7e-6, CMatrix::Zero(2, 2), ch, {}, "decay"};
  const auto traj = evolve(DensityMatrix::diagonal(Eigen::Vector2d(0.0, 1.0)), std::span(&s, 1));
  CHECK(traj.final_state().population(1) == doctest::Approx(std::exp(-gamma * 0.7e-6)).epsilon(1e-12));
}

TEST_CASE("pure dephasing: coherences decay as exp(-2 Gamma t)") {
  const double gamma = 1e5;
  const CMatrix z = spin::spin_operators(0.5).z * 2.0;
  std::vector<LindbladChannel> ch = {{gamma, z, "dephase"}};
  Segment s{3e-6, CMatrix::Zero(2, 2), ch, {}, ""};
  CVector plus(2);
  plus << 1.0, 1.0;
  const auto rho = evolve(DensityMatrix::pure(plus), std::span(&s, 1)).final_state();
  CHECK(rho.entries()(0, 1).real() == doctest::Approx(0.5 * std::exp(-2.0 * gamma * 3e-6)).epsilon(1e-12));
  CHECK(rho.population(0) == doctest::Approx(0.5));
}

TEST_CASE("evolve: no generator leaves the state unchanged") {
  std::mt19937_64 rng(8);
  const auto rho = random_state(rng, 4);
  Segment s{1.0, CMatrix::Zero(4, 4), {}, {}, ""};
  CHECK((evolve(rho, std::span(&s, 1)).final_state().entries() - rho.entries()).norm() < 1e-12);
}

TEST_CASE("evolve: resonant pi pulse inverts a two-level system") {
  const double rabi = 1e6;
  const CMatrix h = rabi * spin::spin_operators(0.5).x;  // Omega/2 sigma_x
  Segment s{0.5 / rabi, h, {}, {}, "pi"};
  const auto rho = evolve(DensityMatrix::diagonal(Eigen::Vector2d(1.0, 0.0)), std::span(&s, 1)).final_state();
  CHECK(std::abs(rho.population(1) - 1.0) < 1e-9);
}

TEST_CASE("evolve: electron T1 channel reaches 1/e at T1") {
  const double t1 = 144e-6;
  std::vector<LindbladChannel> ch = {{1.0 / t1, ket_bra(2, 1, 0), "T1"}};
  Segment s{t1, CMatrix::Zero(2, 2), ch, {}, ""};
  const auto rho = evolve(DensityMatrix::diagonal(Eigen::Vector2d(1.0, 0.0)), std::span(&s, 1)).final_state();
  CHECK(rho.population(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("evolve: segment validation") {
  Segment s{0.0, CMatrix::Zero(2, 2), {}, {}, "empty"};
  try {
    evolve(DensityMatrix::maximally_mixed(2), std::span(&s, 1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSegment);
  }
  Segment wrong{1.0, CMatrix::Zero(3, 3), {}, {}, "wrong"};
  CHECK_THROWS_AS(evolve(DensityMatrix::maximally_mixed(2), std::span(&wrong, 1)), Error);
}

TEST_CASE("evolve: sample times are honoured") {
  std::vector<LindbladChannel> ch = {{1e6, ket_bra(2, 0, 1), "decay"}};
  Segment s{2e-6, CMatrix::Zero(2, 2), ch, {}, ""};
  EvolveOptions opt;
  opt.sample_times = {0.5e-6, 1e-6};
  const auto traj = evolve(DensityMatrix::diagonal(Eigen::Vector2d(0.0, 1.0)), std::span(&s, 1), opt);
  REQUIRE(traj.times.size() == 4);
  CHECK(traj.states[1].population(1) == doctest::Approx(std::exp(-0.5)));
  CHECK(traj.states[2].population(1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("semigroup property") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 10; ++k) {
    const Index n = 2 + k % 4;
    std::vector<LindbladChannel> ch = {{2e5, random_matrix(rng, n), "a"}};
    const CMatrix h = random_hermitian(rng, n, 5e5);
    const auto rho = random_state(rng, n);
    Segment whole{3e-6, h, ch, {}, ""};
    Segment parts[2] = {{1.2e-6, h, ch, {}, ""}, {1.8e-6, h, ch, {}, ""}};
    const auto a = evolve(rho, std::span(&whole, 1)).final_state();
    const auto b = evolve(rho, std::span(parts, 2)).final_state();
    CHECK((a.entries() - b.entries()).norm() < 1e-9);
  }
}

TEST_CASE("closed system conserves purity") {
  std::mt19937_64 rng(32);
  for (int k = 0; k < 10; ++k) {
    const Index n = 2 + k % 6;
    CVector psi(n);
    std::normal_distribution<double> g;
    for (Index i = 0; i < n; ++i) psi(i) = cdouble(g(rng), g(rng));
    Segment s{1e-5, random_hermitian(rng, n, 1e6), {}, {}, ""};
    const auto rho = evolve(DensityMatrix::pure(psi), std::span(&s, 1)).final_state();
    CHECK(std::abs(rho.purity() - 1.0) < 1e-9);
  }
}

TEST_CASE("complete positivity over random seeded inputs") {
  std::mt19937_64 rng(33);
  for (int k = 0; k < 25; ++k) {
    const Index n = 2 + k % 7;
    std::vector<LindbladChannel> ch;
    for (int c = 0; c < 3; ++c) ch.push_back({1e5 * (c + 1), random_matrix(rng, n), "c"});
    std::vector<Segment> segs;
    for (int s = 0; s < 4; ++s) segs.push_back({(s + 1) * 0.4e-6, random_hermitian(rng, n, 1e6), ch, {}, ""});
    EvolveOptions opt;
    for (int t = 1; t < 20; ++t) opt.sample_times.push_back(t * 0.2e-6);
    const auto traj = evolve(random_state(rng, n), segs, opt);
    for (const auto& rho : traj.states) CHECK(rho.check().ok);
  }
}

TEST_CASE("exact propagator matches the RK4 oracle (dimension <= 4)") {
  std::mt19937_64 rng(34);
  for (int k = 0; k < 6; ++k) {
    const Index n = 2 + k % 3;
    const CMatrix h = random_hermitian(rng, n, 1e6);
    std::vector<LindbladChannel> ch = {{3e5, random_matrix(rng, n), "a"}, {1e5, random_matrix(rng, n), "b"}};
    const auto rho = random_state(rng, n);
    const double t = 2e-6;
    Segment s{t, h, ch, {}, ""};
    const auto exact = evolve(rho, std::span(&s, 1)).final_state().entries();
    std::vector<oracle::Jump> jumps;
    for (const auto& c : ch) jumps.push_back({c.rate, c.jump});
    // Fastest timescale: the largest generator eigenvalue magnitude.
    const double fastest = 1.0 / liouvillian(h, ch).operatorNorm();
    const CMatrix ref = oracle::rk4(h, jumps, rho.entries(), t, 1e-4 * fastest);
    CHECK(oracle::trace_distance(exact, ref) < 1e-6);
  }
}

TEST_CASE("frame offsets are applied with the absolute clock") {
  // A frame offset equal to the level splitting turns the free evolution into
  // the identity in the rotating frame; the lab state must still precess.
  const double split = 3e6;
  CMatrix h = CMatrix::Zero(2, 2);
  h(0, 0) = split;
  CVector plus(2);
  plus << 1.0, 1.0;
  const auto rho0 = DensityMatrix::pure(plus);
  Segment lab{0.37e-6, h, {}, {}, "lab"};
  RVector off(2);
  off << split, 0.0;
  Segment rot{0.37e-6, CMatrix::Zero(2, 2), {}, off, "rot"};
  Segment pair_lab[2] = {lab, lab};
  Segment pair_rot[2] = {rot, rot};
  const auto a = evolve(rho0, pair_lab).final_state();
  const auto b = evolve(rho0, pair_rot).final_state();
  CHECK((a.entries() - b.entries()).norm() < 1e-9);
}

TEST_CASE("integrate_action matches quadrature") {
  const double gamma = 1e6;
  std::vector<LindbladChannel> ch = {{gamma, ket_bra(2, 0, 1), "decay"}};
  const CMatrix l = liouvillian(CMatrix::Zero(2, 2), ch);
  const CVector v = vectorize(DensityMatrix::diagonal(Eigen::Vector2d(0.0, 1.0)).entries());
  const CMatrix integral = unvectorize(integrate_action(l, v, 2e-6));
  CHECK(integral(1, 1).real() == doctest::Approx((1.0 - std::exp(-2.0)) / gamma).epsilon(1e-10));
  CHECK(integral.trace().real() == doctest::Approx(2e-6).epsilon(1e-10));
}

TEST_CASE("steady state: absorbing ground state") {
  std::vector<LindbladChannel> ch = {{1e6, ket_bra(2, 0, 1), "decay"}};
  const auto rho = steady_state(liouvillian(CMatrix::Zero(2, 2), ch));
  CHECK(rho.population(0) == doctest::Approx(1.0));
  CHECK(steady_state_residual(liouvillian(CMatrix::Zero(2, 2), ch), rho) < 1e-8);
}

TEST_CASE("steady state: symmetric hopping gives I/2") {
  std::vector<LindbladChannel> ch = {{1e6, ket_bra(2, 0, 1), "down"}, {1e6, ket_bra(2, 1, 0), "up"}};
  const auto l = liouvillian(CMatrix::Zero(2, 2), ch);
  for (const auto& rho : {steady_state(l), steady_state_lu(l)}) {
    CHECK(rho.population(0) == doctest::Approx(0.5));
    CHECK(std::abs(rho.entries()(0, 1)) < 1e-12);
  }
}

TEST_CASE("steady state: three-level cycle matches the rate balance oracle") {
  const double pump = 3e6, g1 = 5e7, g2 = 2e5;
  std::vector<LindbladChannel> ch = {{pump, ket_bra(3, 1, 0), "P"}, {g1, ket_bra(3, 2, 1), "G1"}, {g2, ket_bra(3, 0, 2), "G2"}};
  const auto l = liouvillian(CMatrix::Zero(3, 3), ch);
  std::array<std::array<double, 3>, 3> rates{};
  rates[0][1] = pump;
  rates[1][2] = g1;
  rates[2][0] = g2;
  const auto ref = oracle::rate_balance(rates);
  for (const auto& rho : {steady_state(l), steady_state_lu(l)}) {
    for (Index k = 0; k < 3; ++k) CHECK(rho.population(k) == doctest::Approx(ref[static_cast<std::size_t>(k)]).epsilon(1e-9));
    CHECK(steady_state_residual(l, rho) < 1e-8);
  }
}

TEST_CASE("steady state: degenerate kernel is reported") {
  const auto l = liouvillian(CMatrix::Zero(2, 2), {});
  try {
    steady_state(l);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kAmbiguousSteadyState);
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  CHECK(kernel_dimension(l) == 4);
}

TEST_CASE("density matrix checks") {
  CMatrix bad = CMatrix::Identity(2, 2);
  CHECK_FALSE(DensityMatrix(bad).check().ok);
  CHECK_THROWS_AS(DensityMatrix(bad).validate(), Error);
  CHECK(DensityMatrix::maximally_mixed(4).check().ok);
  CHECK(DensityMatrix::maximally_mixed(4).purity() == doctest::Approx(0.25));
}
